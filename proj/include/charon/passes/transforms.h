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


#ifndef CHARON_PASSES_TRANSFORMS_H_
#define CHARON_PASSES_TRANSFORMS_H_

#include <map>
#include <string>
#include <vector>

#include "charon/analysis/memory.h"
#include "charon/ir/graph.h"
#include "charon/passes/rewrite.h"

namespace charon::passes {

// Removes identity noops (rewiring their consumers and any graph output)
// and every node with no path to a graph output, until nothing changes.
// Noops that mark a gradient collective survive in forward-only graphs so
// that backward derivation can still see them.
RewriteResult Canonicalize(const ir::OperatorGraph& g);

// Keys are "all", a tensor role name or an op kind name. A kind key retags
// the outputs of nodes of that kind and wins over a role key, which wins
// over "all". Graph inputs only match role keys and "all".
using PrecisionMap = std::map<std::string, ir::Precision>;

// Throws ConfigError naming the first unknown key.
void CheckPrecisionMap(const PrecisionMap& map);

// Retags tensor precisions; `matches` counts retagged tensors. Explicit
// collective payload sizes are rescaled with their tensors.
RewriteResult Quantize(const ir::OperatorGraph& g, const PrecisionMap& map);

// Applies each rewrite to fixpoint, in order.
RewriteResult Fuse(const ir::OperatorGraph& g, const std::vector<Rewrite>& rewrites);

// Forward-node outputs read by at least one backward node, in producer
// order.
std::vector<std::string> SavedActivations(const ir::OperatorGraph& g);

struct RecomputePolicy {
  // Recompute every saved activation.
  bool full = false;
  std::vector<std::string> tensors;
  // Drop policy tensors, last first, while the recomputed graph has a higher
  // allocated peak than the input graph.
  bool keep_peak = false;
  analysis::MemoryOptions memory;
};

struct RecomputeResult {
  RewriteResult rewrite;
  std::vector<std::string> recomputed;
  std::vector<std::string> skipped;
};

// Clones the producer of each policy tensor into the backward phase as
// "<id>.rc" (attr recompute=1) and points every backward reader at the
// clone. Clones read other clones when their inputs are also recomputed.
// Throws ConfigError if `g` is not joint or a policy tensor is not a saved
// activation.
RecomputeResult Recompute(const ir::OperatorGraph& g, const RecomputePolicy& policy);

}  // namespace charon::passes

#endif  // CHARON_PASSES_TRANSFORMS_H_
