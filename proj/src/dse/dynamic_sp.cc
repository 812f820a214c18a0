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


#include "charon/dse/dynamic_sp.h"

#include <algorithm>
#include <string>

#include "charon/common/status.h"
#include "charon/engines/collective.h"
#include "charon/ir/op.h"

namespace charon::dse {
namespace {

// Causal attention of `chunk` new positions over `prefix` earlier ones.
Duration ChunkTime(int64_t chunk, int64_t prefix, const AttentionSpec& a, const engines::EngineStack& stack) {
  const int64_t q_dim = a.heads * a.head_dim;
  const int64_t kv_dim = a.kv_heads * a.head_dim;
  ir::OpNode n;
  n.id = "attention";
  n.kind = ir::OpKind::kAttention;
  n.attrs.Set("heads", a.heads);
  n.attrs.Set("kv_heads", a.kv_heads);
  n.attrs.Set("head_dim", a.head_dim);
  n.attrs.Set(std::string(ir::attr::kCausal), int64_t{1});
  n.outputs.push_back({{1, chunk, q_dim}, a.precision, ir::TensorRole::kActivation});
  std::vector<ir::TensorMeta> in = {{{1, chunk, q_dim}, a.precision, ir::TensorRole::kActivation},
                                    {{1, chunk, kv_dim}, a.precision, ir::TensorRole::kActivation},
                                    {{1, chunk, kv_dim}, a.precision, ir::TensorRole::kActivation}};
  if (prefix > 0) {
    in.push_back({{1, prefix, kv_dim}, a.precision, ir::TensorRole::kKvCache});
    in.push_back({{1, prefix, kv_dim}, a.precision, ir::TensorRole::kKvCache});
    n.inputs = {"q", "k", "v", "k_cache", "v_cache"};
  } else {
    n.inputs = {"q", "k", "v"};
  }
  return stack.Dispatch(n, in).time;
}

}  // namespace

std::vector<int64_t> ZigzagChunks(int sp, int rank) {
  if (sp < 1 || rank < 0 || rank >= sp) throw ConfigError("zigzag rank out of range");
  return {rank, 2 * sp - 1 - rank};
}

std::vector<std::vector<int64_t>> ChunkAssignment(SpOption option) {
  std::vector<std::vector<int64_t>> out;
  for (int r = 0; r < option.sp; ++r) {
    out.push_back(option.zigzag ? ZigzagChunks(option.sp, r) : std::vector<int64_t>{r});
  }
  return out;
}

std::optional<Duration> OptionLatency(int64_t seq_len, SpOption option, const AttentionSpec& attn,
                                      const engines::HardwareSpec& hw, const engines::EngineStack& stack) {
  if (option.sp < 1) throw ConfigError("sp must be positive");
  const int64_t pieces = option.zigzag ? 2 * option.sp : option.sp;
  if (seq_len < pieces || seq_len % pieces != 0) return std::nullopt;
  const int64_t chunk = seq_len / pieces;
  Duration slowest{0};
  for (const auto& chunks : ChunkAssignment(option)) {
    Duration rank{0};
    for (int64_t c : chunks) rank += ChunkTime(chunk, c * chunk, attn, stack);
    slowest = std::max(slowest, rank);
  }
  if (option.sp == 1) return slowest;
  const double kv_bytes = 2.0 * static_cast<double>(seq_len * attn.kv_heads * attn.head_dim) *
                          ir::ElementSize(attn.precision);
  return slowest + engines::CollectiveTime(ir::OpKind::kAllGather, kv_bytes, {option.sp, 1}, hw).time;
}

SpPlan PlanDynamicSp(const std::vector<int64_t>& seq_lens, const std::vector<int>& allowed_sp,
                     const AttentionSpec& attn, const engines::HardwareSpec& hw, const engines::EngineStack& stack) {
  std::vector<int> sizes = allowed_sp;
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  if (sizes.empty()) throw ConfigError("no sp sizes allowed");
  SpPlan plan;
  for (int64_t len : seq_lens) {
    std::optional<RequestPlan> best;
    for (int sp : sizes) {
      for (bool zigzag : {false, true}) {
        SpOption option{sp, zigzag};
        auto latency = OptionLatency(len, option, attn, hw, stack);
        if (!latency) continue;
        if (!best || *latency < best->latency) best = RequestPlan{len, option, *latency, ChunkAssignment(option)};
      }
    }
    if (!best) throw ConfigError("no sp option splits a request of length " + std::to_string(len));
    plan.total += best->latency;
    plan.requests.push_back(std::move(*best));
  }
  return plan;
}

SpPlan UniformPlan(const std::vector<int64_t>& seq_lens, SpOption option, const AttentionSpec& attn,
                   const engines::HardwareSpec& hw, const engines::EngineStack& stack) {
  SpPlan plan;
  for (int64_t len : seq_lens) {
    auto latency = OptionLatency(len, option, attn, hw, stack);
    if (!latency) {
      throw ConfigError("sp " + std::to_string(option.sp) + " does not split a request of length " +
                        std::to_string(len));
    }
    plan.total += *latency;
    plan.requests.push_back({len, option, *latency, ChunkAssignment(option)});
  }
  return plan;
}

}  // namespace charon::dse
