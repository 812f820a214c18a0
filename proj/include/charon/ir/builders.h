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

#ifndef CHARON_IR_BUILDERS_H_
#define CHARON_IR_BUILDERS_H_

#include <cstdint>
#include <optional>
#include <vector>

#include "charon/ir/graph.h"
#include "charon/ir/tensor.h"

namespace charon::ir {

struct MoeConfig {
  int64_t num_experts = 1;
  int64_t top_k = 1;
  int64_t expert_ffn_hidden = 1;
  // Optional per-expert multiplier on the uniform token share.
  std::vector<double> load_factors;
};

// Mirrors the fields of a standard decoder-only model config.
struct ModelConfig {
  int64_t hidden_size = 1;
  int64_t num_heads = 1;
  int64_t num_kv_heads = 1;
  int64_t head_dim = 1;
  int64_t ffn_hidden = 1;
  int64_t num_layers = 1;
  int64_t vocab_size = 1;
  std::optional<MoeConfig> moe;
  Precision precision = Precision::kBF16;
  int64_t batch = 1;
  int64_t seq_len = 1;
  // When set, num_heads * head_dim must equal hidden_size.
  bool square_projections = true;
};

// Throws ConfigError on inconsistent dimensions.
void ValidateModel(const ModelConfig& cfg);

// One decoder block with a SwiGLU FFN; block_multiplier = num_layers.
OperatorGraph BuildDenseBlock(const ModelConfig& cfg);

// One decoder block whose FFN is a routed mixture of experts under the
// uniform-load assumption (tokens per expert = batch*seq*top_k/experts).
OperatorGraph BuildMoeBlock(const ModelConfig& cfg);

// Dense or MoE depending on cfg.moe.
OperatorGraph BuildBlock(const ModelConfig& cfg);

// Single-token decode step against a KV cache of `context_len` positions.
OperatorGraph BuildDecodeBlock(const ModelConfig& cfg, int64_t context_len);

// One chunk of a chunked prefill: `chunk_len` new positions attending to a
// KV cache of `prefix_len` earlier positions. A zero prefix is the plain
// block at seq_len = chunk_len.
OperatorGraph BuildPrefillChunkBlock(const ModelConfig& cfg, int64_t chunk_len, int64_t prefix_len);

// Token embedding and LM head, for callers that charge them once per model.
OperatorGraph BuildEmbedding(const ModelConfig& cfg);
OperatorGraph BuildLmHead(const ModelConfig& cfg);

// Forward FLOPs of the full model: block FLOPs x num_layers, plus
// embedding and head when requested.
double ModelForwardFlops(const ModelConfig& cfg, bool include_embedding_and_head);

// KV-cache bytes for the whole model at `context_len` positions.
int64_t KvCacheBytes(const ModelConfig& cfg, int64_t context_len);

}  // namespace charon::ir

#endif  // CHARON_IR_BUILDERS_H_
