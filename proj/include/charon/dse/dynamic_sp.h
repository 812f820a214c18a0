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


#ifndef CHARON_DSE_DYNAMIC_SP_H_
#define CHARON_DSE_DYNAMIC_SP_H_

#include <cstdint>
#include <optional>
#include <vector>

#include "charon/common/units.h"
#include "charon/engines/engine.h"
#include "charon/engines/hardware.h"
#include "charon/ir/tensor.h"

namespace charon::dse {

// Shape of the causal attention layer being planned.
struct AttentionSpec {
  int64_t heads = 1;
  int64_t kv_heads = 1;
  int64_t head_dim = 1;
  ir::Precision precision = ir::Precision::kBF16;
};

struct SpOption {
  int sp = 1;
  bool zigzag = false;

  bool operator==(const SpOption&) const = default;
};

// Chunks held by `rank` when the sequence is cut into 2*sp equal chunks:
// {rank, 2*sp - 1 - rank}.
std::vector<int64_t> ZigzagChunks(int sp, int rank);

// Per-rank chunk lists of an option: zigzag uses 2*sp chunks, otherwise
// rank r holds chunk r of sp.
std::vector<std::vector<int64_t>> ChunkAssignment(SpOption option);

// Attention latency of one request under `option`: the slowest rank's
// causal attention over its chunks plus the all-gather of the full K and V
// across the sp ranks. nullopt when seq_len does not split evenly.
std::optional<Duration> OptionLatency(int64_t seq_len, SpOption option, const AttentionSpec& attn,
                                      const engines::HardwareSpec& hw, const engines::EngineStack& stack);

struct RequestPlan {
  int64_t seq_len = 0;
  SpOption option;
  Duration latency{0};
  std::vector<std::vector<int64_t>> chunks;
};

struct SpPlan {
  std::vector<RequestPlan> requests;
  // Sum over requests, each treated as independently schedulable.
  Duration total{0};
};

// Chooses the cheapest option per request among every allowed sp size with
// and without zigzag. Ties go to the smaller sp, then to the contiguous
// split. Throws ConfigError when no option fits a request.
SpPlan PlanDynamicSp(const std::vector<int64_t>& seq_lens, const std::vector<int>& allowed_sp,
                     const AttentionSpec& attn, const engines::HardwareSpec& hw, const engines::EngineStack& stack);

// Every request under the same option. Throws ConfigError when a request
// does not split evenly.
SpPlan UniformPlan(const std::vector<int64_t>& seq_lens, SpOption option, const AttentionSpec& attn,
                   const engines::HardwareSpec& hw, const engines::EngineStack& stack);

}  // namespace charon::dse

#endif  // CHARON_DSE_DYNAMIC_SP_H_
