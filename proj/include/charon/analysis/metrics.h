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


#ifndef CHARON_ANALYSIS_METRICS_H_
#define CHARON_ANALYSIS_METRICS_H_

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "charon/common/units.h"
#include "charon/engines/hardware.h"
#include "charon/ir/graph.h"
#include "charon/sched/simulator.h"

namespace charon::analysis {

struct FlopsSummary {
  double model_flops = 0;
  double mfu = 0;
};

// MFU = model_flops / (makespan * world * peak FLOP/s at `precision`).
// Model FLOPs must come from the graph before recompute so that
// re-executed work does not count. Throws ConfigError for world < 1.
FlopsSummary SummarizeFlops(double model_flops, const sched::Timeline& t, const engines::HardwareSpec& hw, int world,
                            ir::Precision precision);

// Precision of the first matmul-like node, or of the first node.
ir::Precision ModelPrecision(const ir::OperatorGraph& g);

// Category of one timeline segment.
using CategoryMap = std::function<std::string(const sched::TimelineSegment&)>;

inline constexpr const char* kAttention = "Attention";
inline constexpr const char* kFeedForward = "Feed-Forward";
inline constexpr const char* kOthers = "Others";
inline constexpr const char* kAllGather = "All-Gather";
inline constexpr const char* kReduceScatter = "Reduce-Scatter";
inline constexpr const char* kAllReduce = "All-Reduce";
inline constexpr const char* kAllToAll = "All-to-All";
inline constexpr const char* kSendRecv = "Send/Recv";

// Compute by module (attention, ffn, everything else under Others) and
// communication by collective kind.
std::string DefaultCategory(const sched::TimelineSegment& s);

// Column of a segment: "F", "B" or "O" by phase.
std::string PhaseColumn(ir::Phase p);

// Summed segment durations, [category][column].
using Breakdown = std::map<std::string, std::map<std::string, Duration>>;

Breakdown ComputeBreakdown(const sched::Timeline& t, const CategoryMap& map = DefaultCategory);

// Sum of all cells.
Duration BreakdownTotal(const Breakdown& b);

// Union of busy intervals over all streams of each rank.
std::map<int, Duration> BusyTime(const sched::Timeline& t);

// Sum over ranks of TDP * busy time, in joules.
double EnergyJoules(const sched::Timeline& t, const engines::HardwareSpec& hw);

struct OperatorRow {
  std::string name;
  std::string kind;
  int64_t count = 0;
  Duration total{0};
  std::string engine;
};

// Per-name aggregate over rank `rank`, sorted by descending total time
// then name.
std::vector<OperatorRow> OperatorTable(const sched::Timeline& t, int rank);

}  // namespace charon::analysis

#endif  // CHARON_ANALYSIS_METRICS_H_
