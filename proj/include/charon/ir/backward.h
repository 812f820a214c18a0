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

#ifndef CHARON_IR_BACKWARD_H_
#define CHARON_IR_BACKWARD_H_

#include <string>

#include "charon/ir/graph.h"

namespace charon::ir {

// Appends backward nodes derived from per-kind vector-Jacobian rules.
//
// Each graph output o is seeded by a fake gradient input named
// SeedName(o). Backward nodes read saved forward tensors directly, so the
// saved-for-backward set is exactly the forward tensors with a backward
// consumer. Partial gradients of a tensor with several consumers are summed
// by add nodes. Every weight ends with exactly one gradient tensor
// (role=gradient) which, like the gradient of each activation input, is
// appended to the graph outputs.
//
// Throws ConfigError if `forward` already holds non-forward nodes and
// UnsupportedOpError naming the first node without a rule.
OperatorGraph DeriveBackward(const OperatorGraph& forward);

// Name of the fake gradient input seeding graph output `output_ref`.
std::string SeedName(const std::string& output_ref);

}  // namespace charon::ir

#endif  // CHARON_IR_BACKWARD_H_
