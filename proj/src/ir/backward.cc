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

#include "charon/ir/backward.h"

#include <algorithm>
#include <map>
#include <optional>
#include <set>

#include "charon/common/status.h"
#include "charon/ir/cost.h"

namespace charon::ir {
namespace {

std::string Sanitize(const std::string& ref) {
  std::string s = ref;
  for (char& c : s) {
    if (c == ':') c = '_';
  }
  return s;
}

using GradRefs = std::vector<std::optional<std::string>>;

class BackwardBuilder {
 public:
  explicit BackwardBuilder(const OperatorGraph& forward)
      : forward_(forward), table_(forward), joint_(forward) {}

  OperatorGraph Run() {
    for (const auto& out : forward_.outputs) {
      TensorMeta seed = table_.Meta(out);
      seed.role = TensorRole::kActivation;
      joint_.inputs.push_back({SeedName(out), seed});
      partials_[out].push_back(SeedName(out));
    }
    for (int i = static_cast<int>(forward_.nodes.size()) - 1; i >= 0; --i) {
      const OpNode& n = forward_.nodes[i];
      GradRefs out_grads(n.outputs.size());
      bool any = false;
      for (size_t k = 0; k < n.outputs.size(); ++k) {
        out_grads[k] = FinalGrad(n.OutputName(k));
        any |= out_grads[k].has_value();
      }
      if (!any) continue;
      std::vector<TensorMeta> in_metas = table_.InputMetas(n);
      GradRefs in_grads = ApplyRule(n, in_metas, out_grads);
      for (size_t j = 0; j < n.inputs.size() && j < in_grads.size(); ++j) {
        if (in_grads[j] && NeedsGrad(n.inputs[j])) partials_[n.inputs[j]].push_back(*in_grads[j]);
      }
    }
    std::set<std::string> emitted(joint_.outputs.begin(), joint_.outputs.end());
    for (const auto& in : forward_.inputs) {
      auto g = FinalGrad(in.name);
      if (!g) continue;
      if (in.meta.role == TensorRole::kWeight) MarkGradient(*g);
      if (emitted.insert(*g).second) joint_.outputs.push_back(*g);
    }
    Validate(joint_);
    return std::move(joint_);
  }

 private:
  bool NeedsGrad(const std::string& ref) const {
    if (!table_.IsGraphInput(ref)) return true;
    TensorRole role = table_.Meta(ref).role;
    return role == TensorRole::kActivation || role == TensorRole::kWeight;
  }

  // Sums the partial gradients of `ref` once; later calls return the sum.
  std::optional<std::string> FinalGrad(const std::string& ref) {
    if (auto it = final_.find(ref); it != final_.end()) return it->second;
    auto it = partials_.find(ref);
    if (it == partials_.end() || it->second.empty()) return std::nullopt;
    std::string acc = it->second[0];
    TensorMeta meta = table_.Meta(ref);
    meta.role = TensorRole::kActivation;
    for (size_t k = 1; k < it->second.size(); ++k) {
      OpNode add;
      add.id = Sanitize(ref) + ".acc" + std::to_string(k);
      add.kind = OpKind::kAdd;
      add.inputs = {acc, it->second[k]};
      add.outputs = {meta};
      add.phase = Phase::kBackward;
      add.attrs.Set(std::string(attr::kModule), std::string("other"));
      if (int64_t r = Replication(ref); r > 1) add.attrs.Set(std::string(attr::kReplicas), r);
      acc = add.OutputName(0);
      joint_.nodes.push_back(std::move(add));
    }
    final_[ref] = acc;
    return acc;
  }

  // A tensor touched by TP-replicated nodes holds the same full-size data on
  // every rank, so summing its partial gradients is replicated work too.
  int64_t Replication(const std::string& ref) const {
    int64_t r = 1;
    if (int p = table_.Producer(ref); p >= 0) r = forward_.nodes[p].attrs.GetInt(attr::kReplicas, 1);
    for (int c : table_.Consumers(ref)) r = std::max(r, forward_.nodes[c].attrs.GetInt(attr::kReplicas, 1));
    return r;
  }

  void MarkGradient(const std::string& ref) {
    auto split = SplitOutputRef(ref);
    if (!split) return;
    for (auto& n : joint_.nodes) {
      if (n.id == split->first && split->second < n.outputs.size()) {
        n.outputs[split->second].role = TensorRole::kGradient;
        return;
      }
    }
  }

  std::vector<std::string> Emit(const OpNode& fwd, const std::string& suffix, OpKind kind,
                                std::vector<std::string> inputs, std::vector<TensorMeta> outputs,
                                AttrMap attrs = {}) {
    OpNode n;
    n.id = fwd.id + suffix;
    n.kind = kind;
    n.inputs = std::move(inputs);
    for (auto& m : outputs) m.role = TensorRole::kActivation;
    n.outputs = std::move(outputs);
    n.attrs = std::move(attrs);
    n.attrs.Set(std::string(attr::kForwardId), fwd.id);
    if (fwd.attrs.Has(attr::kModule)) n.attrs.Set(std::string(attr::kModule), fwd.attrs.GetString(attr::kModule));
    if (fwd.attrs.Has(attr::kReplicas)) n.attrs.Set(std::string(attr::kReplicas), fwd.attrs.GetInt(attr::kReplicas));
    n.phase = Phase::kBackward;
    std::vector<std::string> names;
    for (size_t k = 0; k < n.outputs.size(); ++k) names.push_back(n.OutputName(k));
    joint_.nodes.push_back(std::move(n));
    return names;
  }

  static AttrMap CopyAttrs(const OpNode& fwd, std::initializer_list<std::string_view> keys) {
    AttrMap m;
    for (auto key : keys) {
      auto it = fwd.attrs.values().find(key);
      if (it != fwd.attrs.values().end()) m.Set(std::string(key), it->second);
    }
    return m;
  }

  GradRefs ApplyRule(const OpNode& n, const std::vector<TensorMeta>& in, const GradRefs& out_grads) {
    const std::optional<std::string>& dy = out_grads[0];
    GradRefs grads(n.inputs.size());
    const int64_t fwd_flops = OpFlops(n, in);

    switch (n.kind) {
      case OpKind::kMatmul:
      case OpKind::kBatchedMatmul: {
        if (n.attrs.GetInt(attr::kTransposeA) || n.attrs.GetInt(attr::kTransposeB)) break;
        if (NeedsGrad(n.inputs[0])) {
          AttrMap a;
          a.Set(std::string(attr::kTransposeB), int64_t{1});
          grads[0] = Emit(n, ".dx", n.kind, {*dy, n.inputs[1]}, {in[0]}, a)[0];
        }
        if (NeedsGrad(n.inputs[1])) {
          AttrMap a;
          a.Set(std::string(attr::kTransposeA), int64_t{1});
          grads[1] = Emit(n, ".dw", n.kind, {n.inputs[0], *dy}, {in[1]}, a)[0];
        }
        return grads;
      }
      case OpKind::kAttention: {
        AttrMap a = CopyAttrs(n, {"heads", "kv_heads", "head_dim", attr::kCausal, attr::kCountFull});
        a.Set(std::string(attr::kGrad), int64_t{1});
        a.Set(std::string(attr::kFlops), fwd_flops / 2 * 5);
        std::vector<std::string> inputs = n.inputs;
        inputs.push_back(n.OutputName(0));
        inputs.push_back(*dy);
        auto outs = Emit(n, ".bwd", OpKind::kAttention, inputs, {in[0], in[1], in[2]}, a);
        for (size_t j = 0; j < 3; ++j) grads[j] = outs[j];
        return grads;
      }
      case OpKind::kSoftmax: {
        AttrMap a;
        a.Set(std::string(attr::kGrad), int64_t{1});
        a.Set(std::string(attr::kFlops), 4 * in[0].NumElements());
        grads[0] = Emit(n, ".bwd", n.kind, {n.OutputName(0), *dy}, {in[0]}, a)[0];
        return grads;
      }
      case OpKind::kRmsNorm:
      case OpKind::kLayerNorm: {
        AttrMap a;
        a.Set(std::string(attr::kGrad), int64_t{1});
        a.Set(std::string(attr::kFlops), (n.kind == OpKind::kRmsNorm ? 8 : 12) * in[0].NumElements());
        std::vector<std::string> inputs = n.inputs;
        inputs.push_back(*dy);
        auto outs = Emit(n, ".bwd", n.kind, inputs, in, a);
        for (size_t j = 0; j < outs.size(); ++j) grads[j] = outs[j];
        return grads;
      }
      case OpKind::kAdd: {
        const TensorMeta& out = n.outputs[0];
        for (size_t j = 0; j < n.inputs.size(); ++j) {
          if (!NeedsGrad(n.inputs[j])) continue;
          if (in[j].shape == out.shape) {
            grads[j] = *dy;  // pass-through
          } else {
            AttrMap a;
            a.Set("reduce", int64_t{1});
            a.Set(std::string(attr::kFlops), out.NumElements());
            grads[j] = Emit(n, ".reduce" + std::to_string(j), OpKind::kAdd, {*dy}, {in[j]}, a)[0];
          }
        }
        return grads;
      }
      case OpKind::kMul: {
        if (n.attrs.GetInt(attr::kCombine)) {
          AttrMap a = CopyAttrs(n, {attr::kCombine, "top_k"});
          a.Set(std::string(attr::kGrad), int64_t{1});
          a.Set(std::string(attr::kFlops), 2 * fwd_flops);
          std::vector<std::string> inputs = {*dy};
          inputs.insert(inputs.end(), n.inputs.begin(), n.inputs.end());
          auto outs = Emit(n, ".bwd", OpKind::kMul, inputs, in, a);
          for (size_t j = 0; j < outs.size(); ++j) grads[j] = outs[j];
          return grads;
        }
        for (size_t j = 0; j < n.inputs.size(); ++j) {
          if (!NeedsGrad(n.inputs[j])) continue;
          std::vector<std::string> inputs = {*dy};
          for (size_t o = 0; o < n.inputs.size(); ++o) {
            if (o != j) inputs.push_back(n.inputs[o]);
          }
          grads[j] = Emit(n, ".d" + std::to_string(j), OpKind::kMul, inputs, {in[j]})[0];
        }
        return grads;
      }
      case OpKind::kSilu:
      case OpKind::kGelu: {
        AttrMap a;
        a.Set(std::string(attr::kGrad), int64_t{1});
        a.Set(std::string(attr::kFlops), (n.kind == OpKind::kSilu ? 6 : 12) * in[0].NumElements());
        grads[0] = Emit(n, ".bwd", n.kind, {n.inputs[0], *dy}, {in[0]}, a)[0];
        return grads;
      }
      case OpKind::kEmbeddingLookup: {
        if (n.inputs.size() < 2 || !NeedsGrad(n.inputs[1])) return grads;
        AttrMap a;
        a.Set(std::string(attr::kGrad), int64_t{1});
        a.Set(std::string(attr::kFlops), n.outputs[0].NumElements());
        grads[1] = Emit(n, ".bwd", n.kind, {n.inputs[0], *dy}, {in[1]}, a)[0];
        return grads;
      }
      case OpKind::kRouterTopK: {
        std::vector<std::string> inputs = n.inputs;
        int64_t flops = in[0].NumElements();
        for (size_t k = 0; k < out_grads.size(); ++k) {
          if (!out_grads[k]) continue;
          inputs.push_back(*out_grads[k]);
          if (k > 0) flops += n.outputs[k].NumElements();
        }
        AttrMap a = CopyAttrs(n, {"top_k", "num_experts"});
        a.Set(std::string(attr::kGrad), int64_t{1});
        a.Set(std::string(attr::kFlops), flops);
        auto outs = Emit(n, ".bwd", n.kind, inputs, in, a);
        for (size_t j = 0; j < outs.size(); ++j) grads[j] = outs[j];
        return grads;
      }
      case OpKind::kAllReduce:
        // Megatron "g": all_reduce forward, identity backward.
        grads[0] = *dy;
        return grads;
      case OpKind::kAllGather:
      case OpKind::kReduceScatter: {
        OpKind dual = n.kind == OpKind::kAllGather ? OpKind::kReduceScatter : OpKind::kAllGather;
        AttrMap a = CopyAttrs(n, {attr::kGroup, attr::kGroupSize, attr::kGroupStride, attr::kAlgo, attr::kGatherDim});
        grads[0] = Emit(n, ".bwd", dual, {*dy}, {in[0]}, a)[0];
        return grads;
      }
      case OpKind::kAllToAll: {
        std::vector<std::string> inputs;
        for (const auto& g : out_grads) {
          if (g) inputs.push_back(*g);
        }
        AttrMap a = CopyAttrs(n, {attr::kGroup, attr::kGroupSize, attr::kGroupStride, attr::kAlgo, attr::kPayloadBytes});
        auto outs = Emit(n, ".bwd", OpKind::kAllToAll, inputs, in, a);
        for (size_t j = 0; j < outs.size(); ++j) grads[j] = outs[j];
        return grads;
      }
      case OpKind::kNoop: {
        if (n.inputs.empty()) return grads;
        if (n.attrs.GetString(attr::kGradComm) == "all_reduce") {
          AttrMap a = CopyAttrs(n, {attr::kGroup, attr::kGroupSize, attr::kGroupStride, attr::kAlgo});
          grads[0] = Emit(n, ".bwd", OpKind::kAllReduce, {*dy}, {in[0]}, a)[0];
        } else {
          grads[0] = *dy;
        }
        return grads;
      }
      default:
        break;
    }
    throw UnsupportedOpError("no gradient rule for node '" + n.id + "' (" +
                             std::string(KindName(n.kind)) +
                             (n.attrs.GetInt(attr::kTransposeA) || n.attrs.GetInt(attr::kTransposeB)
                                  ? ", transposed operand"
                                  : "") +
                             ")");
  }

  const OperatorGraph& forward_;
  TensorTable table_;
  OperatorGraph joint_;
  std::map<std::string, std::vector<std::string>> partials_;
  std::map<std::string, std::string> final_;
};

}  // namespace

std::string SeedName(const std::string& output_ref) { return "d_" + Sanitize(output_ref); }

OperatorGraph DeriveBackward(const OperatorGraph& forward) {
  if (forward.IsJoint()) {
    throw ConfigError("graph already contains backward/optimizer nodes; refusing to derive twice");
  }
  Validate(forward);
  return BackwardBuilder(forward).Run();
}

}  // namespace charon::ir
