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


#include "charon/passes/transforms.h"

#include <algorithm>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "charon/common/status.h"

namespace charon::passes {
namespace {

using ir::OperatorGraph;
using ir::OpKind;
using ir::OpNode;
using ir::TensorTable;

RewriteResult RemoveIdentityNoops(const OperatorGraph& g) {
  const bool forward_only = !g.IsJoint();
  Rewrite r;
  r.name = "canonicalize";
  r.pattern.slots.push_back({{OpKind::kNoop},
                             [forward_only](const TensorTable& t, const OpNode& n) {
                               if (n.inputs.size() != 1 || n.outputs.size() != 1) return false;
                               if (forward_only && n.attrs.Has(ir::attr::kGradComm)) return false;
                               if (t.Meta(n.inputs[0]) != n.outputs[0]) return false;
                               return !(t.IsGraphInput(n.inputs[0]) && t.IsGraphOutput(n.OutputName(0)));
                             },
                             -1});
  r.action = [](const OperatorGraph& graph, const TensorTable&, const Match& m) {
    const OpNode& n = graph.nodes[m.nodes[0]];
    Replacement rep;
    rep.output_map[n.OutputName(0)] = n.inputs[0];
    return rep;
  };
  return MatchReplace(g, r);
}

int RemoveDeadNodes(OperatorGraph& g) {
  TensorTable table(g);
  std::vector<bool> live(g.nodes.size(), false);
  std::vector<int> stack;
  auto mark = [&](const std::string& ref) {
    int p = table.Producer(ref);
    if (p >= 0 && !live[p]) {
      live[p] = true;
      stack.push_back(p);
    }
  };
  for (const auto& ref : g.outputs) mark(ref);
  while (!stack.empty()) {
    int i = stack.back();
    stack.pop_back();
    for (const auto& ref : g.nodes[i].inputs) mark(ref);
  }
  std::vector<OpNode> kept;
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    if (live[i]) kept.push_back(std::move(g.nodes[i]));
  }
  int removed = static_cast<int>(g.nodes.size() - kept.size());
  g.nodes = std::move(kept);
  return removed;
}

}  // namespace

RewriteResult Canonicalize(const OperatorGraph& g) {
  RewriteResult total;
  total.graph = g;
  while (true) {
    RewriteResult step = RemoveIdentityNoops(total.graph);
    int dead = RemoveDeadNodes(step.graph);
    total.graph = std::move(step.graph);
    total.matches += step.matches + dead;
    total.nodes_removed += step.nodes_removed + dead;
    if (step.matches == 0 && dead == 0) break;
  }
  ir::Validate(total.graph);
  return total;
}

void CheckPrecisionMap(const PrecisionMap& map) {
  for (const auto& [key, p] : map) {
    if (key != "all" && !ir::ParseRole(key) && !ir::ParseKind(key)) {
      throw ConfigError("quantize: unknown key '" + key + "' (expected all, a tensor role or an op kind)");
    }
  }
}

RewriteResult Quantize(const OperatorGraph& g, const PrecisionMap& map) {
  CheckPrecisionMap(map);
  RewriteResult result;
  result.graph = g;
  if (map.empty()) return result;
  auto pick = [&](std::optional<OpKind> kind, ir::TensorRole role) -> std::optional<ir::Precision> {
    if (kind) {
      if (auto it = map.find(std::string(ir::KindName(*kind))); it != map.end()) return it->second;
    }
    if (auto it = map.find(std::string(ir::RoleName(role))); it != map.end()) return it->second;
    if (auto it = map.find("all"); it != map.end()) return it->second;
    return std::nullopt;
  };
  auto retag = [&](ir::TensorMeta& meta, std::optional<OpKind> kind) {
    auto p = pick(kind, meta.role);
    if (p && *p != meta.precision) {
      meta.precision = *p;
      ++result.matches;
    }
  };
  for (auto& in : result.graph.inputs) retag(in.meta, std::nullopt);
  for (auto& n : result.graph.nodes) {
    const int64_t old_size = n.outputs.empty() ? 0 : ir::ElementSize(n.outputs[0].precision);
    for (auto& out : n.outputs) retag(out, n.kind);
    if (ir::IsCommunication(n.kind) && n.attrs.Has(ir::attr::kPayloadBytes) && old_size > 0) {
      const int64_t new_size = ir::ElementSize(n.outputs[0].precision);
      n.attrs.Set(std::string(ir::attr::kPayloadBytes),
                  n.attrs.GetInt(ir::attr::kPayloadBytes) * new_size / old_size);
    }
  }
  ir::Validate(result.graph);
  return result;
}

RewriteResult Fuse(const OperatorGraph& g, const std::vector<Rewrite>& rewrites) {
  RewriteResult total;
  total.graph = g;
  for (const auto& r : rewrites) {
    RewriteResult step = MatchReplace(total.graph, r);
    total.graph = std::move(step.graph);
    total.matches += step.matches;
    total.nodes_added += step.nodes_added;
    total.nodes_removed += step.nodes_removed;
  }
  return total;
}

std::vector<std::string> SavedActivations(const OperatorGraph& g) {
  TensorTable table(g);
  std::vector<std::string> saved;
  for (const auto& n : g.nodes) {
    if (n.phase != ir::Phase::kForward) continue;
    for (size_t k = 0; k < n.outputs.size(); ++k) {
      std::string ref = n.OutputName(k);
      for (int c : table.Consumers(ref)) {
        if (g.nodes[c].phase != ir::Phase::kForward) {
          saved.push_back(ref);
          break;
        }
      }
    }
  }
  return saved;
}

namespace {

OperatorGraph ApplyRecompute(const OperatorGraph& g, const std::vector<std::string>& tensors) {
  TensorTable table(g);
  std::set<int> cloned;  // producer indices, ascending = topological
  for (const auto& ref : tensors) cloned.insert(table.Producer(ref));
  std::unordered_set<std::string> policy(tensors.begin(), tensors.end());

  auto clone_ref = [&](const std::string& ref) -> std::string {
    if (!policy.count(ref)) return ref;
    auto split = ir::SplitOutputRef(ref);
    return split->first + ".rc:" + std::to_string(split->second);
  };

  std::unordered_map<int, OpNode> clones;
  for (int p : cloned) {
    OpNode c = g.nodes[p];
    c.id += ".rc";
    c.phase = ir::Phase::kBackward;
    c.attrs.Set(std::string(ir::attr::kRecompute), int64_t{1});
    for (auto& ref : c.inputs) ref = clone_ref(ref);
    clones[p] = std::move(c);
  }

  OperatorGraph out;
  out.inputs = g.inputs;
  out.block_multiplier = g.block_multiplier;
  out.outputs = g.outputs;
  std::vector<OpNode> rewired = g.nodes;
  for (auto& n : rewired) {
    if (n.phase == ir::Phase::kForward) continue;
    for (auto& ref : n.inputs) ref = clone_ref(ref);
  }

  // Each clone runs right before its earliest reader: a backward node or a
  // later clone. Producers precede consumers since clones are visited in
  // reverse topological order.
  auto reads = [](const OpNode& reader, const OpNode& clone) {
    for (const auto& ref : reader.inputs) {
      auto split = ir::SplitOutputRef(ref);
      if (split && split->first == clone.id) return true;
    }
    return false;
  };
  std::map<int, int> position;  // producer index -> slot in rewired
  for (auto it = cloned.rbegin(); it != cloned.rend(); ++it) {
    int pos = static_cast<int>(rewired.size());
    for (int i = 0; i < static_cast<int>(rewired.size()); ++i) {
      if (rewired[i].phase != ir::Phase::kForward && reads(rewired[i], clones[*it])) {
        pos = i;
        break;
      }
    }
    for (const auto& [q, qpos] : position) {
      if (reads(clones[q], clones[*it])) pos = std::min(pos, qpos);
    }
    position[*it] = pos;
  }
  for (int i = 0; i <= static_cast<int>(rewired.size()); ++i) {
    for (const auto& [p, pos] : position) {
      if (pos == i) out.nodes.push_back(clones[p]);
    }
    if (i < static_cast<int>(rewired.size())) out.nodes.push_back(std::move(rewired[i]));
  }
  ir::TopologicalSort(out);
  ir::Validate(out);
  return out;
}

}  // namespace

RecomputeResult Recompute(const OperatorGraph& g, const RecomputePolicy& policy) {
  RecomputeResult result;
  result.rewrite.graph = g;
  if (!policy.full && policy.tensors.empty()) return result;
  if (!g.IsJoint()) throw ConfigError("recompute needs a joint forward and backward graph");
  const std::vector<std::string> saved = SavedActivations(g);
  std::vector<std::string> tensors;
  if (policy.full) {
    tensors = saved;
  } else {
    for (const auto& ref : policy.tensors) {
      if (std::find(saved.begin(), saved.end(), ref) == saved.end()) {
        throw ConfigError("recompute: '" + ref + "' is not an activation saved for backward");
      }
      if (std::find(tensors.begin(), tensors.end(), ref) == tensors.end()) tensors.push_back(ref);
    }
  }

  OperatorGraph out = ApplyRecompute(g, tensors);
  if (policy.full) {
    // Clones may read forward intermediates that were not saved before;
    // recompute those too until backward reads no forward output.
    for (auto extra = SavedActivations(out); !extra.empty(); extra = SavedActivations(out)) {
      tensors.insert(tensors.end(), extra.begin(), extra.end());
      TensorTable table(g);
      std::sort(tensors.begin(), tensors.end(), [&](const std::string& a, const std::string& b) {
        return std::make_pair(table.Producer(a), a) < std::make_pair(table.Producer(b), b);
      });
      tensors.erase(std::unique(tensors.begin(), tensors.end()), tensors.end());
      out = ApplyRecompute(g, tensors);
    }
  }
  if (policy.keep_peak) {
    const int64_t base = analysis::ComputeMemoryTimeline(g, policy.memory).max_allocated;
    while (!tensors.empty() && analysis::ComputeMemoryTimeline(out, policy.memory).max_allocated > base) {
      result.skipped.insert(result.skipped.begin(), tensors.back());
      tensors.pop_back();
      out = tensors.empty() ? g : ApplyRecompute(g, tensors);
    }
  }
  result.recomputed = tensors;
  result.rewrite.nodes_added = static_cast<int>(out.nodes.size() - g.nodes.size());
  result.rewrite.matches = static_cast<int>(tensors.size());
  result.rewrite.graph = std::move(out);
  return result;
}

}  // namespace charon::passes
