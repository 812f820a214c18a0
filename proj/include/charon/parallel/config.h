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


#ifndef CHARON_PARALLEL_CONFIG_H_
#define CHARON_PARALLEL_CONFIG_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "charon/ir/builders.h"

namespace charon::parallel {

enum class DpMode { kDdp, kZero1, kZero2, kZero3, kFsdp };
enum class PpSchedule { kOneFOneB, kDualPipe };

std::string_view DpModeName(DpMode m);
std::optional<DpMode> ParseDpMode(std::string_view name);
std::string_view PpScheduleName(PpSchedule s);
std::optional<PpSchedule> ParsePpSchedule(std::string_view name);

struct ParallelismConfig {
  int tp = 1;
  int sp = 1;  // 1 or tp
  int ep = 1;  // experts shard across ep of the dp ranks
  int pp = 1;
  int dp = 1;
  DpMode dp_mode = DpMode::kDdp;
  PpSchedule pp_schedule = PpSchedule::kOneFOneB;
  int microbatches = 1;
  int world_size = 1;
  // Optional explicit layer count per stage; empty means uniform.
  std::vector<int64_t> stage_layers;
  double bucket_bytes = 25.0 * 1024 * 1024;

  bool operator==(const ParallelismConfig&) const = default;
};

// Every violated structural invariant, one message each; empty when valid.
std::vector<std::string> ConfigDiagnostics(const ParallelismConfig& cfg);
// Throws ConfigError listing all diagnostics.
void ValidateConfig(const ParallelismConfig& cfg);
// Model-dependent divisibility checks (heads, FFN, experts, sequence).
std::vector<std::string> ModelDiagnostics(const ParallelismConfig& cfg, const ir::ModelConfig& model);
void ValidateForModel(const ParallelismConfig& cfg, const ir::ModelConfig& model);

// Layers per stage: explicit stage_layers, or layers/pp with the remainder
// going to the earliest stages.
std::vector<int64_t> StageLayers(const ParallelismConfig& cfg, int64_t layers);

// Rank layout: TP innermost, then DP, then PP outermost.
struct RankCoord {
  int tp = 0;
  int dp = 0;
  int pp = 0;
};
int RankOf(const ParallelismConfig& cfg, RankCoord c);
RankCoord CoordOf(const ParallelismConfig& cfg, int rank);

// Distance between consecutive members of each group kind.
int TpStride(const ParallelismConfig& cfg);
int DpStride(const ParallelismConfig& cfg);
int EpStride(const ParallelismConfig& cfg);
int ExpertDpStride(const ParallelismConfig& cfg);
int PpStride(const ParallelismConfig& cfg);

}  // namespace charon::parallel

#endif  // CHARON_PARALLEL_CONFIG_H_
