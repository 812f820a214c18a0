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


#include "charon/passes/rewrite.h"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "charon/common/status.h"
#include "charon/ir/cost.h"

namespace charon::passes {
namespace {

using ir::OperatorGraph;
using ir::OpKind;
using ir::OpNode;
using ir::TensorTable;

constexpr int kMaxRounds = 10000;

class Matcher {
 public:
  Matcher(const OperatorGraph& g, const TensorTable& table, const Pattern& p, const std::vector<bool>& used)
      : g_(g), table_(table), p_(p), used_(used) {}

  bool MatchAt(int anchor, Match& m) {
    m.nodes.assign(p_.slots.size(), -1);
    if (!Accepts(0, anchor, g_.nodes[anchor].phase)) return false;
    m.nodes[0] = anchor;
    return Extend(1, m);
  }

 private:
  bool Accepts(size_t slot, int node, ir::Phase phase) const {
    if (used_[node]) return false;
    const OpNode& n = g_.nodes[node];
    const PatternSlot& s = p_.slots[slot];
    if (n.phase != phase) return false;
    if (!s.kinds.empty() && !s.kinds.count(n.kind)) return false;
    return !s.predicate || s.predicate(table_, n);
  }

  bool Extend(size_t slot, Match& m) {
    if (slot == p_.slots.size()) return true;
    const OpNode& producer = g_.nodes[m.nodes[p_.slots[slot].producer_slot]];
    std::vector<int> candidates;
    for (size_t k = 0; k < producer.outputs.size(); ++k) {
      for (int c : table_.Consumers(producer.OutputName(k))) candidates.push_back(c);
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    for (int c : candidates) {
      if (std::find(m.nodes.begin(), m.nodes.end(), c) != m.nodes.end()) continue;
      if (!Accepts(slot, c, g_.nodes[m.nodes[0]].phase)) continue;
      m.nodes[slot] = c;
      if (Extend(slot + 1, m)) return true;
      m.nodes[slot] = -1;
    }
    return false;
  }

  const OperatorGraph& g_;
  const TensorTable& table_;
  const Pattern& p_;
  const std::vector<bool>& used_;
};

// A match is convex when no path leaves it and re-enters it; only convex
// matches can collapse into one node without a cycle.
bool IsConvex(const OperatorGraph& g, const TensorTable& table, const Match& m) {
  std::unordered_set<int> members(m.nodes.begin(), m.nodes.end());
  const int lo = *std::min_element(m.nodes.begin(), m.nodes.end());
  const int hi = *std::max_element(m.nodes.begin(), m.nodes.end());
  std::unordered_set<int> outside;  // non-members downstream of the match
  for (int i = lo; i <= hi; ++i) {
    bool fed_by_member = false, fed_by_outside = false;
    for (const auto& ref : g.nodes[i].inputs) {
      int p = table.Producer(ref);
      if (p < 0) continue;
      fed_by_member |= members.count(p) > 0;
      fed_by_outside |= outside.count(p) > 0;
    }
    if (members.count(i)) {
      if (fed_by_outside) return false;
    } else if (fed_by_member || fed_by_outside) {
      outside.insert(i);
    }
  }
  return true;
}

std::vector<int> Sorted(const Match& m) {
  std::vector<int> v = m.nodes;
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

std::vector<std::string> ExternalInputs(const OperatorGraph& g, const Match& m) {
  std::unordered_set<std::string> produced;
  for (int i : m.nodes) {
    for (size_t k = 0; k < g.nodes[i].outputs.size(); ++k) produced.insert(g.nodes[i].OutputName(k));
  }
  std::vector<std::string> refs;
  for (int i : Sorted(m)) {
    for (const auto& ref : g.nodes[i].inputs) {
      if (!produced.count(ref) && std::find(refs.begin(), refs.end(), ref) == refs.end()) refs.push_back(ref);
    }
  }
  return refs;
}

std::vector<std::string> ExternalOutputs(const OperatorGraph& g, const TensorTable& table, const Match& m) {
  std::unordered_set<int> members(m.nodes.begin(), m.nodes.end());
  std::vector<std::string> refs;
  for (int i : Sorted(m)) {
    for (size_t k = 0; k < g.nodes[i].outputs.size(); ++k) {
      std::string ref = g.nodes[i].OutputName(k);
      bool external = table.IsGraphOutput(ref);
      for (int c : table.Consumers(ref)) external |= !members.count(c);
      if (external) refs.push_back(ref);
    }
  }
  return refs;
}

Replacement FuseMatch(const OperatorGraph& g, const TensorTable& table, const Match& m) {
  std::vector<int> order = Sorted(m);
  const OpNode& anchor = g.nodes[m.nodes[0]];
  OpNode fused;
  fused.kind = OpKind::kFused;
  fused.phase = anchor.phase;
  int64_t flops = 0;
  std::optional<int64_t> replicas;
  bool same_replicas = true;
  for (size_t j = 0; j < order.size(); ++j) {
    const OpNode& n = g.nodes[order[j]];
    if (j) fused.id += '+';
    fused.id += n.id;
    if (n.kind == OpKind::kFused) {
      fused.fused_kinds.insert(fused.fused_kinds.end(), n.fused_kinds.begin(), n.fused_kinds.end());
    } else {
      fused.fused_kinds.push_back(n.kind);
    }
    flops += ir::OpFlops(n, table.InputMetas(n));
    int64_t r = n.attrs.GetInt(ir::attr::kReplicas, 1);
    if (replicas && *replicas != r) same_replicas = false;
    replicas = r;
  }
  fused.inputs = ExternalInputs(g, m);
  fused.attrs.Set(std::string(ir::attr::kFlops), flops);
  if (anchor.attrs.Has(ir::attr::kModule)) {
    fused.attrs.Set(std::string(ir::attr::kModule), anchor.attrs.GetString(ir::attr::kModule));
  }
  if (same_replicas && replicas && *replicas > 1) fused.attrs.Set(std::string(ir::attr::kReplicas), *replicas);
  if (!same_replicas) throw RewriteError("cannot fuse '" + fused.id + "': constituents differ in TP replication");
  Replacement r;
  std::vector<std::string> outs = ExternalOutputs(g, table, m);
  if (outs.empty()) {
    // A dead match still needs an output; canonicalize removes it later.
    const OpNode& tail = g.nodes[order.back()];
    for (size_t k = 0; k < tail.outputs.size(); ++k) outs.push_back(tail.OutputName(k));
  }
  for (size_t k = 0; k < outs.size(); ++k) {
    fused.outputs.push_back(table.Meta(outs[k]));
    r.output_map[outs[k]] = fused.OutputName(k);
  }
  r.nodes.push_back(std::move(fused));
  return r;
}

RewriteResult MatchReplace(const OperatorGraph& g, const Rewrite& r) {
  if (r.pattern.slots.empty()) throw RewriteError("rewrite '" + r.name + "' has an empty pattern");
  for (size_t s = 1; s < r.pattern.slots.size(); ++s) {
    int p = r.pattern.slots[s].producer_slot;
    if (p < 0 || p >= static_cast<int>(s)) {
      throw RewriteError("rewrite '" + r.name + "': slot " + std::to_string(s) + " must consume an earlier slot");
    }
  }
  RewriteResult result;
  result.graph = g;
  for (int round = 0; round < kMaxRounds; ++round) {
    OperatorGraph& cur = result.graph;
    TensorTable table(cur);
    std::vector<bool> used(cur.nodes.size(), false);
    std::vector<Match> matches;
    Matcher matcher(cur, table, r.pattern, used);
    for (int anchor = 0; anchor < static_cast<int>(cur.nodes.size()); ++anchor) {
      Match m;
      if (!matcher.MatchAt(anchor, m) || !IsConvex(cur, table, m)) continue;
      for (int i : m.nodes) used[i] = true;
      matches.push_back(std::move(m));
    }
    if (matches.empty()) return result;

    std::vector<Replacement> replacements;
    std::map<std::string, std::string> rename;
    std::unordered_map<int, size_t> last_member;  // node index -> match index
    for (size_t mi = 0; mi < matches.size(); ++mi) {
      Replacement rep = r.action(cur, table, matches[mi]);
      std::unordered_map<std::string, const ir::TensorMeta*> new_metas;
      for (const auto& n : rep.nodes) {
        for (size_t k = 0; k < n.outputs.size(); ++k) new_metas[n.OutputName(k)] = &n.outputs[k];
      }
      for (const auto& ref : ExternalOutputs(cur, table, matches[mi])) {
        auto it = rep.output_map.find(ref);
        if (it == rep.output_map.end()) {
          throw RewriteError("rewrite '" + r.name + "' leaves tensor '" + ref + "' without a replacement");
        }
        const ir::TensorMeta* meta = nullptr;
        if (auto nm = new_metas.find(it->second); nm != new_metas.end()) {
          meta = nm->second;
        } else if (table.Contains(it->second)) {
          meta = &table.Meta(it->second);
        } else {
          throw RewriteError("rewrite '" + r.name + "' maps '" + ref + "' to unknown tensor '" + it->second + "'");
        }
        if (!rep.shape_transform && meta->shape != table.Meta(ref).shape) {
          throw RewriteError("rewrite '" + r.name + "' changes the shape of '" + ref + "' from " +
                             ir::ShapeString(table.Meta(ref).shape) + " to " + ir::ShapeString(meta->shape));
        }
        rename[ref] = it->second;
      }
      result.matches += 1;
      result.nodes_removed += static_cast<int>(matches[mi].nodes.size());
      result.nodes_added += static_cast<int>(rep.nodes.size());
      last_member[*std::max_element(matches[mi].nodes.begin(), matches[mi].nodes.end())] = mi;
      replacements.push_back(std::move(rep));
    }

    OperatorGraph next;
    next.inputs = cur.inputs;
    next.block_multiplier = cur.block_multiplier;
    for (int i = 0; i < static_cast<int>(cur.nodes.size()); ++i) {
      if (auto it = last_member.find(i); it != last_member.end()) {
        for (auto& n : replacements[it->second].nodes) next.nodes.push_back(std::move(n));
      }
      if (!used[i]) next.nodes.push_back(cur.nodes[i]);
    }
    auto resolve = [&](std::string& ref) {
      for (int hops = 0; hops < 64; ++hops) {
        auto it = rename.find(ref);
        if (it == rename.end()) return;
        ref = it->second;
      }
    };
    for (auto& n : next.nodes) {
      for (auto& ref : n.inputs) resolve(ref);
    }
    next.outputs = cur.outputs;
    for (auto& ref : next.outputs) resolve(ref);
    try {
      ir::TopologicalSort(next);
      ir::Validate(next);
    } catch (const GraphError& e) {
      throw RewriteError("rewrite '" + r.name + "' produced an invalid graph: " + e.what());
    }
    result.graph = std::move(next);
  }
  throw RewriteError("rewrite '" + r.name + "' did not reach a fixpoint");
}

namespace {

bool IsElementwiseNode(const TensorTable&, const OpNode& n) {
  if (n.attrs.GetInt(ir::attr::kCombine) || n.attrs.Has("reduce")) return false;
  if (n.kind == OpKind::kFused) {
    return std::all_of(n.fused_kinds.begin(), n.fused_kinds.end(), [](OpKind k) { return ir::IsElementwise(k); });
  }
  return ir::IsElementwise(n.kind);
}

RewriteAction FuseAction() {
  return [](const OperatorGraph& g, const TensorTable& t, const Match& m) { return FuseMatch(g, t, m); };
}

}  // namespace

Rewrite BiasFusion() {
  Rewrite r;
  r.name = "bias";
  r.pattern.slots.push_back({{OpKind::kMatmul}, nullptr, -1});
  r.pattern.slots.push_back({{OpKind::kAdd},
                             [](const TensorTable& t, const OpNode& n) {
                               if (n.inputs.size() != 2) return false;
                               for (const auto& ref : n.inputs) {
                                 if (t.IsGraphInput(ref) && t.Meta(ref).role == ir::TensorRole::kWeight &&
                                     t.Meta(ref).shape.size() == 1) {
                                   return true;
                                 }
                               }
                               return false;
                             },
                             0});
  r.action = FuseAction();
  return r;
}

Rewrite ElementwiseChainFusion() {
  Rewrite r;
  r.name = "elementwise_chain";
  const std::set<OpKind> kinds = {OpKind::kAdd, OpKind::kMul, OpKind::kSilu, OpKind::kGelu, OpKind::kFused};
  r.pattern.slots.push_back({kinds, IsElementwiseNode, -1});
  r.pattern.slots.push_back({kinds, IsElementwiseNode, 0});
  r.action = FuseAction();
  return r;
}

Rewrite MatmulActivationFusion() {
  Rewrite r;
  r.name = "matmul_activation";
  r.pattern.slots.push_back({{OpKind::kMatmul}, nullptr, -1});
  r.pattern.slots.push_back({{OpKind::kSilu, OpKind::kGelu},
                             [](const TensorTable&, const OpNode& n) { return !n.attrs.GetInt(ir::attr::kGrad); },
                             0});
  r.action = FuseAction();
  return r;
}

}  // namespace charon::passes
