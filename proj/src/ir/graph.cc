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

#include "charon/ir/graph.h"

#include <functional>
#include <queue>
#include <set>
#include <unordered_set>

#include "charon/common/status.h"
#include "charon/ir/cost.h"

namespace charon::ir {

bool OperatorGraph::IsJoint() const {
  for (const auto& n : nodes) {
    if (n.phase != Phase::kForward) return true;
  }
  return false;
}

int OperatorGraph::FindNode(std::string_view id) const {
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id == id) return static_cast<int>(i);
  }
  return -1;
}

TensorTable::TensorTable(const OperatorGraph& g) {
  for (const auto& in : g.inputs) {
    Entry& e = entries_[in.name];
    e.meta = &in.meta;
    e.producer = -1;
  }
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const OpNode& n = g.nodes[i];
    for (size_t k = 0; k < n.outputs.size(); ++k) {
      Entry& e = entries_[n.OutputName(k)];
      e.meta = &n.outputs[k];
      e.producer = static_cast<int>(i);
    }
  }
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    for (const auto& ref : g.nodes[i].inputs) {
      auto it = entries_.find(ref);
      if (it == entries_.end()) continue;
      auto& consumers = it->second.consumers;
      if (consumers.empty() || consumers.back() != static_cast<int>(i)) {
        consumers.push_back(static_cast<int>(i));
      }
    }
  }
  for (const auto& out : g.outputs) {
    auto it = entries_.find(out);
    if (it != entries_.end()) it->second.graph_output = true;
  }
}

const TensorTable::Entry& TensorTable::Lookup(std::string_view ref) const {
  auto it = entries_.find(std::string(ref));
  if (it == entries_.end()) {
    throw GraphError("tensor ref '" + std::string(ref) + "' does not resolve");
  }
  return it->second;
}

bool TensorTable::Contains(std::string_view ref) const {
  return entries_.find(std::string(ref)) != entries_.end();
}

const TensorMeta& TensorTable::Meta(std::string_view ref) const { return *Lookup(ref).meta; }

int TensorTable::Producer(std::string_view ref) const { return Lookup(ref).producer; }

const std::vector<int>& TensorTable::Consumers(std::string_view ref) const {
  return Lookup(ref).consumers;
}

bool TensorTable::IsGraphInput(std::string_view ref) const {
  auto it = entries_.find(std::string(ref));
  return it != entries_.end() && it->second.producer < 0;
}

bool TensorTable::IsGraphOutput(std::string_view ref) const {
  auto it = entries_.find(std::string(ref));
  return it != entries_.end() && it->second.graph_output;
}

std::vector<TensorMeta> TensorTable::InputMetas(const OpNode& n) const {
  std::vector<TensorMeta> metas;
  metas.reserve(n.inputs.size());
  for (const auto& ref : n.inputs) metas.push_back(Meta(ref));
  return metas;
}

namespace {

void CheckShape(const TensorMeta& m, const std::string& where) {
  if (m.shape.empty()) throw GraphError(where + ": tensor has empty shape");
  for (int64_t e : m.shape) {
    if (e < 1) throw GraphError(where + ": extent " + std::to_string(e) + " is not positive");
  }
}

}  // namespace

void Validate(const OperatorGraph& g) {
  if (g.block_multiplier < 1) throw GraphError("block_multiplier must be positive");

  std::unordered_map<std::string, int> available;  // ref -> producer index
  for (const auto& in : g.inputs) {
    if (in.name.empty() || in.name.find(':') != std::string::npos) {
      throw GraphError("graph input name '" + in.name + "' is invalid");
    }
    if (!available.emplace(in.name, -1).second) {
      throw GraphError("duplicate graph input '" + in.name + "'");
    }
    CheckShape(in.meta, "graph input '" + in.name + "'");
  }

  std::unordered_set<std::string> ids;
  std::unordered_map<std::string, int> all_outputs;
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const OpNode& n = g.nodes[i];
    if (n.id.empty() || n.id.find(':') != std::string::npos) {
      throw GraphError("node id '" + n.id + "' is invalid");
    }
    if (!ids.insert(n.id).second) throw GraphError("duplicate node id '" + n.id + "'");
    for (size_t k = 0; k < n.outputs.size(); ++k) all_outputs[n.OutputName(k)] = static_cast<int>(i);
  }

  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const OpNode& n = g.nodes[i];
    for (const auto& ref : n.inputs) {
      if (available.count(ref)) continue;
      if (all_outputs.count(ref)) {
        throw GraphError("node '" + n.id + "': input '" + ref +
                         "' is produced later (cycle or misordered nodes)");
      }
      throw GraphError("node '" + n.id + "': input '" + ref + "' does not resolve");
    }
    if (n.outputs.empty() && n.kind != OpKind::kSend) {
      throw GraphError("node '" + n.id + "' has no outputs");
    }
    for (size_t k = 0; k < n.outputs.size(); ++k) {
      CheckShape(n.outputs[k], "node '" + n.id + "' output " + std::to_string(k));
      available.emplace(n.OutputName(k), static_cast<int>(i));
    }
    if (IsCommunication(n.kind) && !n.attrs.Has(attr::kGroup)) {
      throw GraphError("node '" + n.id + "': communication op lacks a 'group' attribute");
    }
    if (n.kind == OpKind::kFused && n.fused_kinds.empty()) {
      throw GraphError("node '" + n.id + "': fused node lists no constituent kinds");
    }
  }

  for (const auto& out : g.outputs) {
    if (!available.count(out)) throw GraphError("graph output '" + out + "' does not resolve");
  }
}

void TopologicalSort(OperatorGraph& g) {
  const size_t n = g.nodes.size();
  std::unordered_map<std::string, int> producer;
  for (size_t i = 0; i < n; ++i) {
    for (size_t k = 0; k < g.nodes[i].outputs.size(); ++k) {
      producer[g.nodes[i].OutputName(k)] = static_cast<int>(i);
    }
  }
  std::vector<std::vector<int>> succ(n);
  std::vector<int> indegree(n, 0);
  for (size_t i = 0; i < n; ++i) {
    std::set<int> preds;
    for (const auto& ref : g.nodes[i].inputs) {
      auto it = producer.find(ref);
      if (it != producer.end()) preds.insert(it->second);
    }
    for (int p : preds) {
      succ[p].push_back(static_cast<int>(i));
      ++indegree[i];
    }
  }
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (size_t i = 0; i < n; ++i) {
    if (indegree[i] == 0) ready.push(static_cast<int>(i));
  }
  std::vector<int> order;
  order.reserve(n);
  while (!ready.empty()) {
    int i = ready.top();
    ready.pop();
    order.push_back(i);
    for (int s : succ[i]) {
      if (--indegree[s] == 0) ready.push(s);
    }
  }
  if (order.size() != n) {
    // Walk predecessors among the blocked nodes until one repeats.
    std::vector<std::vector<int>> pred(n);
    for (size_t i = 0; i < n; ++i) {
      for (int s : succ[i]) pred[s].push_back(static_cast<int>(i));
    }
    int cur = -1;
    for (size_t i = 0; i < n; ++i) {
      if (indegree[i] > 0) {
        cur = static_cast<int>(i);
        break;
      }
    }
    std::vector<int> path;
    std::vector<int> seen_at(n, -1);
    while (seen_at[cur] < 0) {
      seen_at[cur] = static_cast<int>(path.size());
      path.push_back(cur);
      for (int p : pred[cur]) {
        if (indegree[p] > 0) {
          cur = p;
          break;
        }
      }
    }
    std::string msg = "cycle among nodes: ";
    for (size_t k = seen_at[cur]; k < path.size(); ++k) msg += g.nodes[path[k]].id + " <- ";
    msg += g.nodes[cur].id;
    throw GraphError(msg);
  }
  std::vector<OpNode> sorted;
  sorted.reserve(n);
  for (int i : order) sorted.push_back(std::move(g.nodes[i]));
  g.nodes = std::move(sorted);
}

int64_t GraphFlops(const OperatorGraph& g) {
  TensorTable table(g);
  int64_t total = 0;
  for (const auto& n : g.nodes) total += OpFlops(n, table.InputMetas(n));
  return total;
}

int64_t GroupFlops(const OperatorGraph& g, int ranks) {
  TensorTable table(g);
  int64_t total = 0;
  for (const auto& n : g.nodes) {
    int64_t replicas = std::max<int64_t>(1, n.attrs.GetInt(attr::kReplicas, 1));
    if (ranks % replicas != 0) {
      throw ConfigError("node '" + n.id + "' replicated " + std::to_string(replicas) +
                        "x does not divide a group of " + std::to_string(ranks));
    }
    total += OpFlops(n, table.InputMetas(n)) * (ranks / replicas);
  }
  return total;
}

int64_t ProjectionParamCount(const OperatorGraph& g) {
  TensorTable table(g);
  std::set<std::string> counted;
  int64_t total = 0;
  for (const auto& n : g.nodes) {
    if (n.kind != OpKind::kMatmul && n.kind != OpKind::kBatchedMatmul) continue;
    for (const auto& ref : n.inputs) {
      if (!table.IsGraphInput(ref)) continue;
      const TensorMeta& m = table.Meta(ref);
      if (m.role == TensorRole::kWeight && counted.insert(ref).second) total += m.NumElements();
    }
  }
  return total;
}

}  // namespace charon::ir
