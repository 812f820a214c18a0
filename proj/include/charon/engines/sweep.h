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


#ifndef CHARON_ENGINES_SWEEP_H_
#define CHARON_ENGINES_SWEEP_H_

#include <cstdint>
#include <vector>

#include "charon/engines/profile_db.h"
#include "charon/ir/op.h"
#include "charon/ir/tensor.h"

namespace charon::engines {

// `count` operator instances of `kind` with log-uniform random extents.
// Supported kinds: matmul, batched_matmul, attention, rmsnorm, layernorm,
// softmax, add, mul, silu, gelu. Deterministic for a fixed seed.
std::vector<SweepEntry> RandomSweep(ir::OpKind kind, int count, ir::Precision precision, uint64_t seed);

}  // namespace charon::engines

#endif  // CHARON_ENGINES_SWEEP_H_
