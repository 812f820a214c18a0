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

#include "charon/ir/builders.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "charon/common/status.h"

namespace charon::ir {
namespace {

class GraphBuilder {
 public:
  explicit GraphBuilder(Precision precision) : precision_(precision) {}

  std::string Input(std::string name, std::vector<int64_t> shape, TensorRole role) {
    graph_.inputs.push_back({name, TensorMeta{std::move(shape), precision_, role}});
    return name;
  }

  std::string Weight(std::string name, std::vector<int64_t> shape) {
    return Input(std::move(name), std::move(shape), TensorRole::kWeight);
  }

  OpNode& Add(std::string id, OpKind kind, std::vector<std::string> inputs,
              std::vector<std::vector<int64_t>> output_shapes, std::string_view module) {
    OpNode n;
    n.id = std::move(id);
    n.kind = kind;
    n.inputs = std::move(inputs);
    for (auto& shape : output_shapes) {
      n.outputs.push_back(TensorMeta{std::move(shape), precision_, TensorRole::kActivation});
    }
    n.attrs.Set(std::string(attr::kModule), std::string(module));
    graph_.nodes.push_back(std::move(n));
    return graph_.nodes.back();
  }

  // Convenience for single-output nodes; returns the output ref.
  std::string Op(std::string id, OpKind kind, std::vector<std::string> inputs,
                 std::vector<int64_t> shape, std::string_view module) {
    return Add(std::move(id), kind, std::move(inputs), {std::move(shape)}, module).OutputName(0);
  }

  OpNode& Last() { return graph_.nodes.back(); }
  size_t Size() const { return graph_.nodes.size(); }
  OpNode& At(size_t i) { return graph_.nodes[i]; }

  OperatorGraph Finish(std::vector<std::string> outputs, int64_t multiplier) {
    graph_.outputs = std::move(outputs);
    graph_.block_multiplier = multiplier;
    Validate(graph_);
    return std::move(graph_);
  }

 private:
  Precision precision_;
  OperatorGraph graph_;
};

// Attention half of a decoder block. Returns the residual output ref.
std::string BuildAttention(GraphBuilder& b, const ModelConfig& cfg, const std::string& x,
                           int64_t seq, int64_t context_len) {
  const int64_t B = cfg.batch;
  const int64_t H = cfg.hidden_size;
  const int64_t q_dim = cfg.num_heads * cfg.head_dim;
  const int64_t kv_dim = cfg.num_kv_heads * cfg.head_dim;

  std::string norm = b.Op("attn_norm", OpKind::kRmsNorm, {x, b.Weight("attn_norm.w", {H})},
                          {B, seq, H}, "other");
  b.Last().attrs.Set(std::string(attr::kTpRegionInput), int64_t{1});

  std::string q = b.Op("q_proj", OpKind::kMatmul, {norm, b.Weight("wq", {H, q_dim})},
                       {B, seq, q_dim}, "attention");
  b.Last().attrs.Set(std::string(attr::kTpSplit), std::string("column"));
  std::string k = b.Op("k_proj", OpKind::kMatmul, {norm, b.Weight("wk", {H, kv_dim})},
                       {B, seq, kv_dim}, "attention");
  b.Last().attrs.Set(std::string(attr::kTpSplit), std::string("column"));
  std::string v = b.Op("v_proj", OpKind::kMatmul, {norm, b.Weight("wv", {H, kv_dim})},
                       {B, seq, kv_dim}, "attention");
  b.Last().attrs.Set(std::string(attr::kTpSplit), std::string("column"));

  std::vector<std::string> attn_inputs = {q, k, v};
  if (context_len > 0) {
    attn_inputs.push_back(b.Input("k_cache", {B, context_len, kv_dim}, TensorRole::kKvCache));
    attn_inputs.push_back(b.Input("v_cache", {B, context_len, kv_dim}, TensorRole::kKvCache));
  }
  std::string attn = b.Op("attention", OpKind::kAttention, attn_inputs, {B, seq, q_dim}, "attention");
  OpNode& a = b.Last();
  a.attrs.Set("heads", cfg.num_heads);
  a.attrs.Set("kv_heads", cfg.num_kv_heads);
  a.attrs.Set("head_dim", cfg.head_dim);
  a.attrs.Set(std::string(attr::kCausal), int64_t{1});
  a.attrs.Set(std::string(attr::kTpSplit), std::string("heads"));

  std::string o = b.Op("o_proj", OpKind::kMatmul, {attn, b.Weight("wo", {q_dim, H})},
                       {B, seq, H}, "attention");
  b.Last().attrs.Set(std::string(attr::kTpSplit), std::string("row"));
  b.Last().attrs.Set(std::string(attr::kTpReduce), int64_t{1});

  return b.Op("attn_res", OpKind::kAdd, {x, o}, {B, seq, H}, "other");
}

// SwiGLU FFN on `rows`-shaped tokens. Returns the down-projection ref.
std::string BuildSwiGlu(GraphBuilder& b, const std::string& prefix, const std::string& in,
                        std::vector<int64_t> rows, int64_t hidden, int64_t ffn) {
  auto with_last = [&](int64_t last) {
    auto s = rows;
    s.push_back(last);
    return s;
  };
  std::string gate = b.Op(prefix + "gate_proj", OpKind::kMatmul,
                          {in, b.Weight(prefix + "w_gate", {hidden, ffn})}, with_last(ffn), "ffn");
  b.Last().attrs.Set(std::string(attr::kTpSplit), std::string("column"));
  std::string up = b.Op(prefix + "up_proj", OpKind::kMatmul,
                        {in, b.Weight(prefix + "w_up", {hidden, ffn})}, with_last(ffn), "ffn");
  b.Last().attrs.Set(std::string(attr::kTpSplit), std::string("column"));
  std::string act = b.Op(prefix + "act", OpKind::kSilu, {gate}, with_last(ffn), "ffn");
  std::string gated = b.Op(prefix + "gated", OpKind::kMul, {act, up}, with_last(ffn), "ffn");
  std::string down = b.Op(prefix + "down_proj", OpKind::kMatmul,
                          {gated, b.Weight(prefix + "w_down", {ffn, hidden})}, with_last(hidden),
                          "ffn");
  b.Last().attrs.Set(std::string(attr::kTpSplit), std::string("row"));
  return down;
}

std::string BuildFfnNorm(GraphBuilder& b, const ModelConfig& cfg, const std::string& x, int64_t seq) {
  std::string norm = b.Op("ffn_norm", OpKind::kRmsNorm,
                          {x, b.Weight("ffn_norm.w", {cfg.hidden_size})},
                          {cfg.batch, seq, cfg.hidden_size}, "other");
  b.Last().attrs.Set(std::string(attr::kTpRegionInput), int64_t{1});
  return norm;
}

std::string BuildDenseFfn(GraphBuilder& b, const ModelConfig& cfg, const std::string& x, int64_t seq,
                          int64_t ffn) {
  std::string norm = BuildFfnNorm(b, cfg, x, seq);
  std::string down = BuildSwiGlu(b, "", norm, {cfg.batch, seq}, cfg.hidden_size, ffn);
  b.Last().attrs.Set(std::string(attr::kTpReduce), int64_t{1});
  return b.Op("ffn_res", OpKind::kAdd, {x, down}, {cfg.batch, seq, cfg.hidden_size}, "other");
}

std::vector<int64_t> ExpertTokens(const ModelConfig& cfg, int64_t seq) {
  const MoeConfig& moe = *cfg.moe;
  const int64_t routed = cfg.batch * seq * moe.top_k;
  std::vector<int64_t> tokens(moe.num_experts);
  if (moe.load_factors.empty()) {
    // Remainder tokens go to the lowest-numbered experts. An expert that
    // would receive none still runs on one token so every shape stays valid.
    for (int64_t e = 0; e < moe.num_experts; ++e) {
      tokens[e] = std::max<int64_t>(1, routed / moe.num_experts + (e < routed % moe.num_experts ? 1 : 0));
    }
    return tokens;
  }
  if (static_cast<int64_t>(moe.load_factors.size()) != moe.num_experts) {
    throw ConfigError("load_factors must list one factor per expert");
  }
  for (int64_t e = 0; e < moe.num_experts; ++e) {
    double share = static_cast<double>(routed) / moe.num_experts * moe.load_factors[e];
    tokens[e] = std::max<int64_t>(1, std::llround(share));
  }
  return tokens;
}

std::string BuildMoeFfn(GraphBuilder& b, const ModelConfig& cfg, const std::string& x, int64_t seq) {
  const MoeConfig& moe = *cfg.moe;
  const int64_t H = cfg.hidden_size;
  std::string norm = BuildFfnNorm(b, cfg, x, seq);

  // Routing over a single expert is the identity; the block is dense.
  if (moe.num_experts == 1 && moe.top_k == 1 && moe.load_factors.empty()) {
    std::string down = BuildSwiGlu(b, "expert0.", norm, {cfg.batch, seq}, H, moe.expert_ffn_hidden);
    b.Last().attrs.Set(std::string(attr::kTpReduce), int64_t{1});
    return b.Op("ffn_res", OpKind::kAdd, {x, down}, {cfg.batch, seq, H}, "other");
  }

  std::string logits = b.Op("router", OpKind::kMatmul, {norm, b.Weight("w_router", {H, moe.num_experts})},
                            {cfg.batch, seq, moe.num_experts}, "ffn");
  std::vector<int64_t> tokens = ExpertTokens(cfg, seq);
  std::vector<std::vector<int64_t>> route_shapes = {{cfg.batch, seq, moe.top_k}};
  for (int64_t t : tokens) route_shapes.push_back({t, H});
  OpNode& route = b.Add("route", OpKind::kRouterTopK, {logits, norm}, route_shapes, "ffn");
  route.attrs.Set("top_k", moe.top_k);
  route.attrs.Set("num_experts", moe.num_experts);
  const std::string route_id = route.id;

  std::vector<std::string> combine_inputs;
  for (int64_t e = 0; e < moe.num_experts; ++e) {
    std::string prefix = "expert" + std::to_string(e) + ".";
    std::string in = route_id + ":" + std::to_string(e + 1);
    const size_t first = b.Size();
    combine_inputs.push_back(BuildSwiGlu(b, prefix, in, {tokens[e]}, H, moe.expert_ffn_hidden));
    for (size_t i = first; i < b.Size(); ++i) {
      b.At(i).attrs.Set(std::string(attr::kExpert), e);
      b.At(i).attrs.Set("tokens", tokens[e]);
    }
  }
  combine_inputs.push_back(route_id + ":0");
  std::string combined = b.Op("combine", OpKind::kMul, combine_inputs, {cfg.batch, seq, H}, "ffn");
  b.Last().attrs.Set(std::string(attr::kCombine), int64_t{1});
  b.Last().attrs.Set("top_k", moe.top_k);
  b.Last().attrs.Set(std::string(attr::kTpReduce), int64_t{1});
  return b.Op("ffn_res", OpKind::kAdd, {x, combined}, {cfg.batch, seq, H}, "other");
}

OperatorGraph BuildDecoderBlock(const ModelConfig& cfg, int64_t seq, int64_t context_len) {
  ValidateModel(cfg);
  GraphBuilder b(cfg.precision);
  std::string x = b.Input("x", {cfg.batch, seq, cfg.hidden_size}, TensorRole::kActivation);
  std::string h = BuildAttention(b, cfg, x, seq, context_len);
  std::string out = cfg.moe ? BuildMoeFfn(b, cfg, h, seq) : BuildDenseFfn(b, cfg, h, seq, cfg.ffn_hidden);
  return b.Finish({out}, cfg.num_layers);
}

}  // namespace

void ValidateModel(const ModelConfig& cfg) {
  auto positive = [](int64_t v, const char* name) {
    if (v < 1) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(cfg.hidden_size, "hidden_size");
  positive(cfg.num_heads, "num_heads");
  positive(cfg.num_kv_heads, "num_kv_heads");
  positive(cfg.head_dim, "head_dim");
  positive(cfg.ffn_hidden, "ffn_hidden");
  positive(cfg.num_layers, "num_layers");
  positive(cfg.vocab_size, "vocab_size");
  positive(cfg.batch, "batch");
  positive(cfg.seq_len, "seq_len");
  if (cfg.square_projections && cfg.num_heads * cfg.head_dim != cfg.hidden_size) {
    throw ConfigError("hidden_size " + std::to_string(cfg.hidden_size) + " != num_heads x head_dim (" +
                      std::to_string(cfg.num_heads) + " x " + std::to_string(cfg.head_dim) + ")");
  }
  if (cfg.num_heads % cfg.num_kv_heads != 0) {
    throw ConfigError("num_heads must be a multiple of num_kv_heads");
  }
  if (cfg.moe) {
    positive(cfg.moe->num_experts, "num_experts");
    positive(cfg.moe->top_k, "top_k");
    positive(cfg.moe->expert_ffn_hidden, "expert_ffn_hidden");
    if (cfg.moe->top_k > cfg.moe->num_experts) {
      throw ConfigError("top_k (" + std::to_string(cfg.moe->top_k) + ") exceeds num_experts (" +
                        std::to_string(cfg.moe->num_experts) + ")");
    }
  }
}

OperatorGraph BuildDenseBlock(const ModelConfig& cfg) {
  if (cfg.moe) throw ConfigError("BuildDenseBlock called with a MoE config");
  return BuildDecoderBlock(cfg, cfg.seq_len, 0);
}

OperatorGraph BuildMoeBlock(const ModelConfig& cfg) {
  if (!cfg.moe) throw ConfigError("BuildMoeBlock requires a moe section");
  return BuildDecoderBlock(cfg, cfg.seq_len, 0);
}

OperatorGraph BuildBlock(const ModelConfig& cfg) { return BuildDecoderBlock(cfg, cfg.seq_len, 0); }

OperatorGraph BuildDecodeBlock(const ModelConfig& cfg, int64_t context_len) {
  if (context_len < 1) throw ConfigError("decode needs a positive KV-cache length");
  return BuildDecoderBlock(cfg, 1, context_len);
}

OperatorGraph BuildPrefillChunkBlock(const ModelConfig& cfg, int64_t chunk_len, int64_t prefix_len) {
  if (chunk_len < 1 || prefix_len < 0) throw ConfigError("prefill chunk needs chunk_len >= 1 and prefix_len >= 0");
  return BuildDecoderBlock(cfg, chunk_len, prefix_len);
}

OperatorGraph BuildEmbedding(const ModelConfig& cfg) {
  ValidateModel(cfg);
  GraphBuilder b(cfg.precision);
  b.Input("tokens", {cfg.batch, cfg.seq_len}, TensorRole::kActivation);
  std::string table = b.Weight("embedding.w", {cfg.vocab_size, cfg.hidden_size});
  std::string out = b.Op("embed", OpKind::kEmbeddingLookup, {"tokens", table},
                         {cfg.batch, cfg.seq_len, cfg.hidden_size}, "other");
  return b.Finish({out}, 1);
}

OperatorGraph BuildLmHead(const ModelConfig& cfg) {
  ValidateModel(cfg);
  GraphBuilder b(cfg.precision);
  std::string x = b.Input("x", {cfg.batch, cfg.seq_len, cfg.hidden_size}, TensorRole::kActivation);
  std::string norm = b.Op("final_norm", OpKind::kRmsNorm, {x, b.Weight("final_norm.w", {cfg.hidden_size})},
                          {cfg.batch, cfg.seq_len, cfg.hidden_size}, "other");
  std::string logits = b.Op("lm_head", OpKind::kMatmul,
                            {norm, b.Weight("lm_head.w", {cfg.hidden_size, cfg.vocab_size})},
                            {cfg.batch, cfg.seq_len, cfg.vocab_size}, "other");
  return b.Finish({logits}, 1);
}

double ModelForwardFlops(const ModelConfig& cfg, bool include_embedding_and_head) {
  double total = static_cast<double>(GraphFlops(BuildBlock(cfg))) * static_cast<double>(cfg.num_layers);
  if (include_embedding_and_head) {
    total += static_cast<double>(GraphFlops(BuildEmbedding(cfg)));
    total += static_cast<double>(GraphFlops(BuildLmHead(cfg)));
  }
  return total;
}

int64_t KvCacheBytes(const ModelConfig& cfg, int64_t context_len) {
  return 2 * cfg.num_layers * cfg.num_kv_heads * cfg.head_dim * context_len * cfg.batch *
         ElementSize(cfg.precision);
}

}  // namespace charon::ir
