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


#ifndef CHARON_ANALYSIS_REPORT_H_
#define CHARON_ANALYSIS_REPORT_H_

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "charon/analysis/memory.h"
#include "charon/analysis/metrics.h"
#include "charon/common/units.h"

namespace charon::analysis {

inline constexpr std::string_view kReportVersion = "charon-report/1";

struct StageMemoryReport {
  int stage = 0;
  int rank = 0;
  int64_t layers = 0;
  int64_t inflight = 0;
  StageMemory memory;
};

struct InferenceMetrics {
  Duration ttft{0};
  Duration tpot{0};
  double tps_per_user = 0;
  double tps_per_gpu = 0;
};

struct Report {
  std::string scenario;
  std::string mode;
  int world_size = 1;
  double model_flops = 0;
  double mfu = 0;
  Duration step_time{0};
  std::optional<InferenceMetrics> inference;
  Breakdown breakdown;
  std::map<int, Duration> exposed_comm;
  std::vector<StageMemoryReport> memory;
  int64_t memory_capacity = 0;
  double energy_j = 0;
  std::vector<OperatorRow> operators;
  int iterations = 0;
  bool converged = true;

  int64_t PeakMemory() const;
  bool FitsMemory() const { return PeakMemory() <= memory_capacity; }
};

// Structured document; durations in microseconds rounded to 3 decimals.
std::string EmitReport(const Report& r);

}  // namespace charon::analysis

#endif  // CHARON_ANALYSIS_REPORT_H_
