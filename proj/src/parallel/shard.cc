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


#include "charon/parallel/shard.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "charon/common/status.h"

namespace charon::parallel {
namespace {

using ir::OperatorGraph;
using ir::OpKind;
using ir::OpNode;
using ir::TensorMeta;

void SetGroup(OpNode& n, std::string_view group, int64_t size, int64_t stride) {
  n.attrs.Set(std::string(ir::attr::kGroup), std::string(group));
  n.attrs.Set(std::string(ir::attr::kGroupSize), size);
  n.attrs.Set(std::string(ir::attr::kGroupStride), stride);
}

OpNode CommNode(std::string id, OpKind kind, std::vector<std::string> inputs, std::vector<TensorMeta> outputs,
                ir::Phase phase, std::string_view module) {
  OpNode n;
  n.id = std::move(id);
  n.kind = kind;
  n.inputs = std::move(inputs);
  n.outputs = std::move(outputs);
  n.phase = phase;
  n.attrs.Set(std::string(ir::attr::kModule), std::string(module));
  return n;
}

void Split(std::vector<int64_t>& shape, size_t dim, int64_t parts, const std::string& what) {
  if (dim >= shape.size() || shape[dim] % parts != 0) {
    throw ConfigError(what + " " + ir::ShapeString(shape) + " cannot be split " + std::to_string(parts) +
                      " ways along dim " + std::to_string(dim));
  }
  shape[dim] /= parts;
}

std::string Rename(const std::map<std::string, std::string>& rename, const std::string& ref) {
  auto it = rename.find(ref);
  return it == rename.end() ? ref : it->second;
}

}  // namespace

OperatorGraph ApplyTp(const OperatorGraph& g, int tp, bool sequence_parallel) {
  if (tp < 1) throw ConfigError("tp must be positive");
  if (g.IsJoint()) throw ConfigError("tensor parallelism applies to forward graphs");
  if (tp == 1) return g;
  ir::TensorTable table(g);

  OperatorGraph out;
  out.block_multiplier = g.block_multiplier;
  out.inputs = g.inputs;
  std::map<std::string, size_t> input_index;
  for (size_t i = 0; i < out.inputs.size(); ++i) input_index[out.inputs[i].name] = i;
  std::set<std::string> resharded;
  auto reshard_input = [&](const std::string& ref, size_t dim) {
    auto it = input_index.find(ref);
    if (it == input_index.end() || !resharded.insert(ref).second) return;
    Split(out.inputs[it->second].meta.shape, dim, tp, "tensor '" + ref + "'");
  };
  for (const auto& n : g.nodes) {
    const std::string tag = n.attrs.GetString(ir::attr::kTpSplit);
    if (tag == "column" && n.inputs.size() >= 2) reshard_input(n.inputs[1], table.Meta(n.inputs[1]).shape.size() - 1);
    if (tag == "row" && n.inputs.size() >= 2) reshard_input(n.inputs[1], 0);
    if (tag == "heads") {
      for (size_t j = 3; j < n.inputs.size(); ++j) reshard_input(n.inputs[j], table.Meta(n.inputs[j]).shape.size() - 1);
    }
  }
  if (sequence_parallel) {
    for (auto& in : out.inputs) {
      if (in.meta.role == ir::TensorRole::kActivation && in.meta.shape.size() == 3 && resharded.insert(in.name).second) {
        Split(in.meta.shape, 1, tp, "sequence of '" + in.name + "'");
      }
    }
  }

  std::map<std::string, TensorMeta> metas;
  for (const auto& in : out.inputs) metas[in.name] = in.meta;
  std::map<std::string, std::string> rename;
  for (const auto& n : g.nodes) {
    OpNode m = n;
    for (auto& ref : m.inputs) ref = Rename(rename, ref);
    const std::vector<TensorMeta> orig_in = table.InputMetas(n);
    std::vector<TensorMeta> new_in;
    for (const auto& ref : m.inputs) new_in.push_back(metas.at(ref));
    const std::string tag = n.attrs.GetString(ir::attr::kTpSplit);
    if (tag == "column" || tag == "heads") {
      Split(m.outputs[0].shape, m.outputs[0].shape.size() - 1, tp, "output of '" + n.id + "'");
      if (tag == "heads") {
        for (const char* key : {"heads", "kv_heads"}) {
          int64_t v = n.attrs.GetInt(key, 1);
          if (v % tp != 0) {
            throw ConfigError("node '" + n.id + "': " + key + " " + std::to_string(v) + " not divisible by tp " +
                              std::to_string(tp));
          }
          m.attrs.Set(key, v / tp);
        }
      }
    } else if (tag != "row" && new_in != orig_in) {
      for (auto& o : m.outputs) {
        if (orig_in.empty() || o.shape != orig_in[0].shape) {
          throw UnsupportedOpError("node '" + n.id + "' (" + std::string(ir::KindName(n.kind)) +
                                   ") cannot follow a sharded tensor");
        }
        o.shape = new_in[0].shape;
      }
    }
    const bool sharded = !tag.empty() || m.outputs != n.outputs;
    if (!sharded) m.attrs.Set(std::string(ir::attr::kReplicas), int64_t{tp});
    for (size_t k = 0; k < m.outputs.size(); ++k) metas[m.OutputName(k)] = m.outputs[k];
    const std::string module = n.attrs.GetString(ir::attr::kModule, "other");
    const std::string ref = m.OutputName(0);
    out.nodes.push_back(std::move(m));

    if (n.attrs.GetInt(ir::attr::kTpRegionInput)) {
      TensorMeta meta = metas.at(ref);
      OpNode c;
      if (sequence_parallel) {
        meta.shape[1] *= tp;
        c = CommNode(n.id + ".sp_ag", OpKind::kAllGather, {ref}, {meta}, n.phase, module);
        c.attrs.Set(std::string(ir::attr::kGatherDim), int64_t{1});
      } else {
        c = CommNode(n.id + ".tp_f", OpKind::kNoop, {ref}, {meta}, n.phase, module);
        c.attrs.Set(std::string(ir::attr::kGradComm), std::string("all_reduce"));
      }
      SetGroup(c, "tp", tp, 1);
      c.attrs.Set(std::string(ir::attr::kReplicas), int64_t{tp});
      rename[n.OutputName(0)] = c.OutputName(0);
      metas[c.OutputName(0)] = meta;
      out.nodes.push_back(std::move(c));
    }
    if (n.attrs.GetInt(ir::attr::kTpReduce)) {
      TensorMeta meta = metas.at(ref);
      OpNode c;
      if (sequence_parallel) {
        Split(meta.shape, 1, tp, "sequence of '" + ref + "'");
        c = CommNode(n.id + ".sp_rs", OpKind::kReduceScatter, {ref}, {meta}, n.phase, module);
        c.attrs.Set(std::string(ir::attr::kGatherDim), int64_t{1});
      } else {
        c = CommNode(n.id + ".tp_ar", OpKind::kAllReduce, {ref}, {meta}, n.phase, module);
        c.attrs.Set(std::string(ir::attr::kReplicas), int64_t{tp});
      }
      SetGroup(c, "tp", tp, 1);
      rename[n.OutputName(0)] = c.OutputName(0);
      metas[c.OutputName(0)] = meta;
      out.nodes.push_back(std::move(c));
    }
  }
  for (const auto& ref : g.outputs) out.outputs.push_back(Rename(rename, ref));
  ir::Validate(out);
  return out;
}

OperatorGraph ApplyEp(const OperatorGraph& g, int ep, int ep_rank, int stride) {
  if (ep < 1 || ep_rank < 0 || ep_rank >= ep) {
    throw ConfigError("ep rank " + std::to_string(ep_rank) + " outside a group of " + std::to_string(ep));
  }
  if (ep == 1) return g;
  if (g.IsJoint()) throw ConfigError("expert parallelism applies to forward graphs");
  int route_idx = -1, combine_idx = -1;
  for (int i = 0; i < static_cast<int>(g.nodes.size()); ++i) {
    if (g.nodes[i].kind == OpKind::kRouterTopK && route_idx < 0) route_idx = i;
    if (g.nodes[i].attrs.GetInt(ir::attr::kCombine) && combine_idx < 0) combine_idx = i;
  }
  if (route_idx < 0 || combine_idx < 0) throw ConfigError("expert parallelism needs a routed MoE graph");
  const OpNode& route = g.nodes[route_idx];
  const int64_t experts = static_cast<int64_t>(route.outputs.size()) - 1;
  if (experts % ep != 0) {
    throw ConfigError("num_experts " + std::to_string(experts) + " not divisible by ep " + std::to_string(ep));
  }
  const int64_t per_rank = experts / ep;
  const int64_t lo = ep_rank * per_rank, hi = lo + per_rank;
  auto local = [&](int64_t e) { return e >= lo && e < hi; };
  ir::TensorTable table(g);

  int64_t routed_bytes = 0;
  for (int64_t e = 0; e < experts; ++e) routed_bytes += route.outputs[e + 1].ByteSize();
  const int64_t payload = routed_bytes / ep;

  // Expert outputs read by the combine node, by expert.
  std::map<int64_t, std::string> expert_out;
  for (const auto& ref : g.nodes[combine_idx].inputs) {
    int p = table.Producer(ref);
    if (p >= 0 && g.nodes[p].attrs.Has(ir::attr::kExpert)) expert_out[g.nodes[p].attrs.GetInt(ir::attr::kExpert)] = ref;
  }
  if (static_cast<int64_t>(expert_out.size()) != experts) {
    throw ConfigError("combine node does not read one output per expert");
  }
  int last_local = -1;
  for (int i = 0; i < static_cast<int>(g.nodes.size()); ++i) {
    if (g.nodes[i].attrs.Has(ir::attr::kExpert) && local(g.nodes[i].attrs.GetInt(ir::attr::kExpert))) last_local = i;
  }

  OperatorGraph out;
  out.block_multiplier = g.block_multiplier;
  std::map<std::string, std::string> rename;
  std::set<std::string> used;
  const std::string module = route.attrs.GetString(ir::attr::kModule, "ffn");
  for (int i = 0; i < static_cast<int>(g.nodes.size()); ++i) {
    const OpNode& n = g.nodes[i];
    if (n.attrs.Has(ir::attr::kExpert) && !local(n.attrs.GetInt(ir::attr::kExpert))) continue;
    OpNode m = n;
    for (auto& ref : m.inputs) ref = Rename(rename, ref);
    if (n.attrs.Has(ir::attr::kExpert)) {
      const int64_t e = n.attrs.GetInt(ir::attr::kExpert);
      const int64_t tokens = route.outputs[e + 1].shape[0];
      for (auto& o : m.outputs) {
        if (!o.shape.empty() && o.shape[0] == tokens) o.shape[0] *= ep;
      }
      m.attrs.Set("tokens", tokens * ep);
      m.attrs.Set(std::string(ir::attr::kEpSharded), int64_t{1});
    }
    for (const auto& ref : m.inputs) used.insert(ref);
    out.nodes.push_back(std::move(m));

    if (i == route_idx) {
      std::vector<std::string> inputs;
      std::vector<TensorMeta> outputs;
      for (int64_t e = 0; e < experts; ++e) {
        inputs.push_back(route.OutputName(e + 1));
        if (local(e)) {
          TensorMeta meta = route.outputs[e + 1];
          meta.shape[0] *= ep;
          outputs.push_back(meta);
        }
      }
      OpNode d = CommNode(route.id + ".ep_dispatch", OpKind::kAllToAll, inputs, outputs, route.phase, module);
      SetGroup(d, "ep", ep, stride);
      d.attrs.Set(std::string(ir::attr::kPayloadBytes), payload);
      for (int64_t e = lo; e < hi; ++e) rename[route.OutputName(e + 1)] = d.OutputName(e - lo);
      out.nodes.push_back(std::move(d));
    }
    if (i == last_local) {
      std::vector<std::string> inputs;
      std::vector<TensorMeta> outputs;
      for (int64_t e = 0; e < experts; ++e) {
        if (local(e)) inputs.push_back(Rename(rename, expert_out[e]));
        outputs.push_back(table.Meta(expert_out[e]));
      }
      OpNode c = CommNode(route.id + ".ep_combine", OpKind::kAllToAll, inputs, outputs, route.phase, module);
      SetGroup(c, "ep", ep, stride);
      c.attrs.Set(std::string(ir::attr::kPayloadBytes), payload);
      for (int64_t e = 0; e < experts; ++e) rename[expert_out[e]] = c.OutputName(e);
      out.nodes.push_back(std::move(c));
    }
  }
  for (const auto& ref : g.outputs) out.outputs.push_back(Rename(rename, ref));
  for (const auto& in : g.inputs) {
    bool dropped_expert_weight = in.meta.role == ir::TensorRole::kWeight && !used.count(in.name);
    if (!dropped_expert_weight) out.inputs.push_back(in);
  }
  ir::Validate(out);
  return out;
}

int64_t BucketCount(double total_bytes, double bucket_bytes) {
  if (total_bytes <= 0) return 0;
  return static_cast<int64_t>(std::ceil(total_bytes / bucket_bytes - 1e-9));
}

namespace {

struct GradTensor {
  std::string ref;
  int producer = 0;
  TensorMeta meta;
};

struct SyncGroup {
  std::string name;
  int size = 1;
  int stride = 1;
  std::vector<GradTensor> grads;
  std::vector<std::string> weights;
};

// Appends a node at `position` order key; the caller sorts afterwards.
struct Placed {
  double position;
  OpNode node;
};

}  // namespace

DpResult ApplyDp(const OperatorGraph& g, const ParallelismConfig& cfg) {
  DpResult result;
  result.graph = g;
  const int dp = cfg.dp;
  if (dp == 1) {
    if (cfg.dp_mode != DpMode::kDdp) {
      result.warnings.push_back("dp=1: " + std::string(DpModeName(cfg.dp_mode)) + " has nothing to shard");
    }
    return result;
  }
  if (!g.IsJoint()) throw ConfigError("data parallelism applies to joint forward and backward graphs");
  ir::TensorTable table(g);
  const double inv = 1.0 / dp;
  switch (cfg.dp_mode) {
    case DpMode::kDdp:
      break;
    case DpMode::kZero1:
      result.tags.optimizer_multiplier = inv;
      break;
    case DpMode::kZero2:
      result.tags.optimizer_multiplier = inv;
      result.tags.gradient_multiplier = inv;
      break;
    case DpMode::kZero3:
    case DpMode::kFsdp:
      result.tags = {inv, inv, inv};
      break;
  }

  // Expert weights sync over the dp/ep ranks holding the same experts.
  auto is_expert_weight = [&](const std::string& w) {
    for (int c : table.Consumers(w)) {
      if (g.nodes[c].attrs.GetInt(ir::attr::kEpSharded)) return true;
    }
    return false;
  };
  SyncGroup dense{"dp", dp, DpStride(cfg), {}, {}};
  SyncGroup expert{"edp", dp / cfg.ep, ExpertDpStride(cfg), {}, {}};
  std::map<std::string, bool> weight_is_expert;
  for (const auto& in : g.inputs) {
    if (in.meta.role != ir::TensorRole::kWeight) continue;
    bool ex = cfg.ep > 1 && is_expert_weight(in.name);
    weight_is_expert[in.name] = ex;
    (ex ? expert : dense).weights.push_back(in.name);
  }
  for (const auto& ref : g.outputs) {
    int p = table.Producer(ref);
    if (p < 0 || table.Meta(ref).role != ir::TensorRole::kGradient) continue;
    // The weight this gradient belongs to is the forward input it mirrors.
    const std::string fwd = g.nodes[p].attrs.GetString(ir::attr::kForwardId);
    bool ex = false;
    if (int f = g.FindNode(fwd); f >= 0) ex = cfg.ep > 1 && g.nodes[f].attrs.GetInt(ir::attr::kEpSharded);
    (ex ? expert : dense).grads.push_back({ref, p, table.Meta(ref)});
  }

  std::vector<Placed> added;
  std::map<std::string, std::string> forward_rename, backward_rename;
  const bool shard_params = cfg.dp_mode == DpMode::kZero3 || cfg.dp_mode == DpMode::kFsdp;
  int first_backward = static_cast<int>(g.nodes.size());
  for (int i = 0; i < static_cast<int>(g.nodes.size()); ++i) {
    if (g.nodes[i].phase != ir::Phase::kForward) {
      first_backward = i;
      break;
    }
  }

  for (SyncGroup* group : {&dense, &expert}) {
    if (group->size <= 1) continue;
    std::sort(group->grads.begin(), group->grads.end(),
              [](const GradTensor& a, const GradTensor& b) { return a.producer < b.producer; });

    if (shard_params && !group->weights.empty()) {
      for (int pass = 0; pass < 2; ++pass) {
        const bool fwd = pass == 0;
        std::vector<TensorMeta> metas;
        int64_t bytes = 0;
        for (const auto& w : group->weights) {
          metas.push_back(table.Meta(w));
          bytes += table.Meta(w).ByteSize();
        }
        OpNode ag = CommNode(group->name + "_gather." + (fwd ? "fwd" : "bwd"), OpKind::kAllGather, group->weights,
                             metas, fwd ? ir::Phase::kForward : ir::Phase::kBackward, "other");
        SetGroup(ag, group->name, group->size, group->stride);
        ag.attrs.Set(std::string(ir::attr::kPayloadBytes), bytes);
        ag.attrs.Set(std::string(ir::attr::kPrefetch), int64_t{1});
        auto& rename = fwd ? forward_rename : backward_rename;
        for (size_t k = 0; k < group->weights.size(); ++k) rename[group->weights[k]] = ag.OutputName(k);
        added.push_back({fwd ? -0.5 : first_backward - 0.5, std::move(ag)});
      }
    }

    if (group->grads.empty()) continue;
    // Buckets over the flat gradient buffer in production order.
    struct Bucket {
      std::vector<std::string> refs;
      int last_producer = 0;
      int64_t bytes = 0;
    };
    std::vector<Bucket> buckets;
    const bool single = cfg.dp_mode == DpMode::kFsdp;
    const double cap = single ? 1e300 : cfg.bucket_bytes;
    double filled = cap;  // forces a new bucket on the first tensor
    for (const auto& gt : group->grads) {
      double remaining = static_cast<double>(gt.meta.ByteSize());
      while (remaining > 0) {
        if (filled >= cap) {
          buckets.emplace_back();
          filled = 0;
        }
        double take = std::min(remaining, cap - filled);
        Bucket& b = buckets.back();
        if (b.refs.empty() || b.refs.back() != gt.ref) b.refs.push_back(gt.ref);
        b.last_producer = gt.producer;
        b.bytes += static_cast<int64_t>(std::llround(take));
        filled += take;
        remaining -= take;
      }
    }
    const ir::Precision precision = group->grads.front().meta.precision;
    const int64_t elem = ir::ElementSize(precision);
    for (size_t k = 0; k < buckets.size(); ++k) {
      const Bucket& b = buckets[k];
      const int64_t elems = std::max<int64_t>(1, b.bytes / elem);
      TensorMeta full{{elems}, precision, ir::TensorRole::kGradient};
      const std::string base = group->name + (single ? "_grads" : "_bucket" + std::to_string(k));
      OpNode sync;
      if (cfg.dp_mode == DpMode::kDdp) {
        sync = CommNode(base + ".ar", OpKind::kAllReduce, b.refs, {full}, ir::Phase::kBackward, "other");
      } else {
        TensorMeta shard{{std::max<int64_t>(1, (elems + group->size - 1) / group->size)}, precision,
                         ir::TensorRole::kGradient};
        sync = CommNode(base + ".rs", OpKind::kReduceScatter, b.refs, {shard}, ir::Phase::kBackward, "other");
      }
      SetGroup(sync, group->name, group->size, group->stride);
      sync.attrs.Set(std::string(ir::attr::kPayloadBytes), b.bytes);
      sync.attrs.Set(std::string(ir::attr::kDpSync), int64_t{1});
      sync.attrs.Set(std::string(ir::attr::kInplace), int64_t{1});
      const std::string sync_ref = sync.OutputName(0);
      added.push_back({b.last_producer + 0.5, std::move(sync)});
      result.graph.outputs.push_back(sync_ref);
      if (cfg.dp_mode == DpMode::kZero1 || cfg.dp_mode == DpMode::kZero2) {
        TensorMeta params{{elems}, precision, ir::TensorRole::kWeight};
        OpNode ag = CommNode(base + ".param_ag", OpKind::kAllGather, {sync_ref}, {params}, ir::Phase::kOptimizer,
                             "other");
        SetGroup(ag, group->name, group->size, group->stride);
        ag.attrs.Set(std::string(ir::attr::kPayloadBytes), b.bytes);
        ag.attrs.Set(std::string(ir::attr::kDpSync), int64_t{1});
        ag.attrs.Set(std::string(ir::attr::kInplace), int64_t{1});
        result.graph.outputs.push_back(ag.OutputName(0));
        added.push_back({1e18 + static_cast<double>(k), std::move(ag)});
      }
    }
  }

  std::vector<Placed> all;
  for (int i = 0; i < static_cast<int>(g.nodes.size()); ++i) {
    OpNode n = g.nodes[i];
    auto& rename = n.phase == ir::Phase::kForward ? forward_rename : backward_rename;
    for (auto& ref : n.inputs) ref = Rename(rename, ref);
    all.push_back({static_cast<double>(i), std::move(n)});
  }
  for (auto& p : added) all.push_back(std::move(p));
  std::stable_sort(all.begin(), all.end(), [](const Placed& a, const Placed& b) { return a.position < b.position; });
  result.graph.nodes.clear();
  for (auto& p : all) result.graph.nodes.push_back(std::move(p.node));
  ir::TopologicalSort(result.graph);
  ir::Validate(result.graph);
  return result;
}

}  // namespace charon::parallel
