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


#ifndef CHARON_PASSES_REWRITE_H_
#define CHARON_PASSES_REWRITE_H_

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "charon/ir/graph.h"

namespace charon::passes {

// One node position in a pattern. Slot 0 is the anchor; every later slot
// consumes an output of an earlier `producer_slot`, so patterns are
// connected trees rooted at the anchor.
struct PatternSlot {
  std::set<ir::OpKind> kinds;  // empty accepts any kind
  // Optional extra test; receives the table of the graph being scanned.
  std::function<bool(const ir::TensorTable&, const ir::OpNode&)> predicate;
  int producer_slot = -1;
};

struct Pattern {
  std::vector<PatternSlot> slots;
};

// Node indices bound to each slot.
struct Match {
  std::vector<int> nodes;
};

// What replaces a match. Every tensor produced by a matched node and used
// outside the match must appear in `output_map`, pointing at a tensor of
// equal shape unless `shape_transform` is declared.
struct Replacement {
  std::vector<ir::OpNode> nodes;
  std::map<std::string, std::string> output_map;
  bool shape_transform = false;
};

using RewriteAction = std::function<Replacement(const ir::OperatorGraph&, const ir::TensorTable&, const Match&)>;

struct Rewrite {
  std::string name;
  Pattern pattern;
  RewriteAction action;
};

struct RewriteResult {
  ir::OperatorGraph graph;
  int matches = 0;
  int nodes_added = 0;
  int nodes_removed = 0;
};

// Finds non-overlapping matches in topological scan order (earliest
// anchor wins), replaces them, and rescans until no match remains.
// Matches whose removal would create a cycle are skipped. Throws
// RewriteError when a replacement breaks the shape contract.
RewriteResult MatchReplace(const ir::OperatorGraph& g, const Rewrite& r);

// Tensors consumed by the matched nodes but produced outside the match,
// in first-use order.
std::vector<std::string> ExternalInputs(const ir::OperatorGraph& g, const Match& m);
// Outputs of matched nodes used outside the match or exported as graph
// outputs, in node then output order.
std::vector<std::string> ExternalOutputs(const ir::OperatorGraph& g, const ir::TensorTable& table, const Match& m);

// Collapses a match into a single kind=fused node whose FLOPs are the
// constituents' sum and whose tensors are the external ones only.
Replacement FuseMatch(const ir::OperatorGraph& g, const ir::TensorTable& table, const Match& m);

// Built-in fusion rewrites.
Rewrite BiasFusion();              // matmul -> add(bias weight)
Rewrite ElementwiseChainFusion();  // elementwise -> elementwise
Rewrite MatmulActivationFusion();  // matmul -> silu|gelu

}  // namespace charon::passes

#endif  // CHARON_PASSES_REWRITE_H_
