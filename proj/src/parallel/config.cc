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


#include "charon/parallel/config.h"

#include <array>
#include <utility>

#include "charon/common/status.h"

namespace charon::parallel {
namespace {

constexpr std::array<std::pair<DpMode, std::string_view>, 5> kDpModes = {{
    {DpMode::kDdp, "ddp"},
    {DpMode::kZero1, "zero1"},
    {DpMode::kZero2, "zero2"},
    {DpMode::kZero3, "zero3"},
    {DpMode::kFsdp, "fsdp"},
}};

constexpr std::array<std::pair<PpSchedule, std::string_view>, 2> kSchedules = {{
    {PpSchedule::kOneFOneB, "one_f_one_b"},
    {PpSchedule::kDualPipe, "dualpipe"},
}};

std::string Joined(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : "; ") + s;
  return out;
}

}  // namespace

std::string_view DpModeName(DpMode m) {
  for (const auto& [mode, name] : kDpModes) {
    if (mode == m) return name;
  }
  return "unknown";
}

std::optional<DpMode> ParseDpMode(std::string_view name) {
  for (const auto& [mode, n] : kDpModes) {
    if (n == name) return mode;
  }
  return std::nullopt;
}

std::string_view PpScheduleName(PpSchedule s) {
  for (const auto& [sched, name] : kSchedules) {
    if (sched == s) return name;
  }
  return "unknown";
}

std::optional<PpSchedule> ParsePpSchedule(std::string_view name) {
  for (const auto& [sched, n] : kSchedules) {
    if (n == name) return sched;
  }
  return std::nullopt;
}

std::vector<std::string> ConfigDiagnostics(const ParallelismConfig& cfg) {
  std::vector<std::string> errors;
  const std::pair<const char*, int> sizes[] = {{"tp", cfg.tp}, {"sp", cfg.sp},
                                               {"ep", cfg.ep}, {"pp", cfg.pp},
                                               {"dp", cfg.dp}, {"microbatches", cfg.microbatches},
                                               {"world_size", cfg.world_size}};
  for (const auto& [name, v] : sizes) {
    if (v < 1) errors.push_back(std::string(name) + " must be positive, got " + std::to_string(v));
  }
  if (!errors.empty()) return errors;
  const int64_t product = int64_t{cfg.tp} * cfg.pp * cfg.dp;
  if (product != cfg.world_size) {
    errors.push_back("tp*pp*dp = " + std::to_string(product) + " != world_size " + std::to_string(cfg.world_size));
  }
  if (cfg.sp != 1 && cfg.sp != cfg.tp) {
    errors.push_back("sp must be 1 or tp (" + std::to_string(cfg.tp) + "), got " + std::to_string(cfg.sp));
  }
  if (cfg.dp % cfg.ep != 0) {
    errors.push_back("ep " + std::to_string(cfg.ep) + " must divide dp " + std::to_string(cfg.dp));
  }
  if (cfg.pp > 1 && cfg.microbatches < cfg.pp) {
    errors.push_back("microbatches " + std::to_string(cfg.microbatches) + " < pp " + std::to_string(cfg.pp));
  }
  if (cfg.pp_schedule == PpSchedule::kDualPipe && cfg.pp % 2 != 0) {
    errors.push_back("dualpipe needs an even pp, got " + std::to_string(cfg.pp));
  }
  if (!cfg.stage_layers.empty() && static_cast<int>(cfg.stage_layers.size()) != cfg.pp) {
    errors.push_back("stage_layers lists " + std::to_string(cfg.stage_layers.size()) + " stages for pp " +
                     std::to_string(cfg.pp));
  }
  for (int64_t l : cfg.stage_layers) {
    if (l < 1) errors.push_back("every stage needs at least one layer");
  }
  if (cfg.bucket_bytes <= 0) errors.push_back("bucket size must be positive");
  return errors;
}

void ValidateConfig(const ParallelismConfig& cfg) {
  auto errors = ConfigDiagnostics(cfg);
  if (!errors.empty()) throw ConfigError("invalid parallelism: " + Joined(errors));
}

std::vector<std::string> ModelDiagnostics(const ParallelismConfig& cfg, const ir::ModelConfig& model) {
  std::vector<std::string> errors;
  auto divides = [&](int64_t n, int64_t d, const std::string& what, const std::string& by) {
    if (d > 0 && n % d != 0) {
      errors.push_back(what + " " + std::to_string(n) + " not divisible by " + by + " " + std::to_string(d));
    }
  };
  divides(model.num_heads, cfg.tp, "num_heads", "tp");
  divides(model.num_kv_heads, cfg.tp, "num_kv_heads", "tp");
  divides(model.ffn_hidden, cfg.tp, "ffn_hidden", "tp");
  if (cfg.sp > 1) divides(model.seq_len, cfg.sp, "seq_len", "sp");
  if (model.moe) {
    divides(model.moe->expert_ffn_hidden, cfg.tp, "expert_ffn_hidden", "tp");
    divides(model.moe->num_experts, cfg.ep, "num_experts", "ep");
  } else if (cfg.ep > 1) {
    errors.push_back("ep > 1 needs a MoE model");
  }
  const int64_t layers = model.num_layers;
  if (cfg.stage_layers.empty()) {
    if (layers < cfg.pp) errors.push_back("num_layers " + std::to_string(layers) + " < pp " + std::to_string(cfg.pp));
  } else {
    int64_t sum = 0;
    for (int64_t l : cfg.stage_layers) sum += l;
    if (sum != layers) {
      errors.push_back("stage_layers sum to " + std::to_string(sum) + ", model has " + std::to_string(layers));
    }
  }
  return errors;
}

void ValidateForModel(const ParallelismConfig& cfg, const ir::ModelConfig& model) {
  auto errors = ConfigDiagnostics(cfg);
  auto more = ModelDiagnostics(cfg, model);
  errors.insert(errors.end(), more.begin(), more.end());
  if (!errors.empty()) throw ConfigError("invalid parallelism: " + Joined(errors));
}

std::vector<int64_t> StageLayers(const ParallelismConfig& cfg, int64_t layers) {
  if (!cfg.stage_layers.empty()) return cfg.stage_layers;
  std::vector<int64_t> out(cfg.pp, layers / cfg.pp);
  for (int64_t s = 0; s < layers % cfg.pp; ++s) ++out[s];
  return out;
}

int RankOf(const ParallelismConfig& cfg, RankCoord c) { return c.tp + cfg.tp * (c.dp + cfg.dp * c.pp); }

RankCoord CoordOf(const ParallelismConfig& cfg, int rank) {
  RankCoord c;
  c.tp = rank % cfg.tp;
  c.dp = (rank / cfg.tp) % cfg.dp;
  c.pp = rank / (cfg.tp * cfg.dp);
  return c;
}

int TpStride(const ParallelismConfig&) { return 1; }
int DpStride(const ParallelismConfig& cfg) { return cfg.tp; }
int EpStride(const ParallelismConfig& cfg) { return cfg.tp; }
int ExpertDpStride(const ParallelismConfig& cfg) { return cfg.tp * cfg.ep; }
int PpStride(const ParallelismConfig& cfg) { return cfg.tp * cfg.dp; }

}  // namespace charon::parallel
