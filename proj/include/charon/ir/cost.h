// Copyright 2026 The Charon Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CHARON_IR_COST_H_
#define CHARON_IR_COST_H_

#include <cstdint>
#include <span>

#include "charon/ir/op.h"
#include "charon/ir/tensor.h"

namespace charon::ir {

// FLOPs of one node given the metas of its inputs (in node input order).
// Communication kinds and noops have zero FLOPs. A node carrying attr
// "flops" (fused nodes, derived gradient nodes) reports that value.
int64_t OpFlops(const OpNode& n, std::span<const TensorMeta> inputs);

// Bytes moved by one node: input plus output bytes for compute kinds, the
// collective payload for communication kinds.
int64_t OpBytes(const OpNode& n, std::span<const TensorMeta> inputs);

// Element pairs visited by one attention head: Sq*Sprefix + Sq^2/2 when
// causal (the diagonal block is half masked), Sq*Skv otherwise. Doubled to
// stay integral.
int64_t AttentionPairsTimesTwo(int64_t sq, int64_t skv, bool causal);

}  // namespace charon::ir

#endif  // CHARON_IR_COST_H_
