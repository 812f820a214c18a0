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


#ifndef CHARON_SCHED_SIMULATOR_H_
#define CHARON_SCHED_SIMULATOR_H_

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "charon/common/units.h"
#include "charon/engines/engine.h"
#include "charon/engines/hardware.h"
#include "charon/parallel/schedule.h"

namespace charon::sched {

// s_c stretches compute overlapped by communication, s_m communication
// overlapped by compute, s_cc communication overlapped by communication on
// another stream of the same rank (ratio mode only).
struct SlowdownFactors {
  double compute_under_comm = 1.0;
  double comm_under_compute = 1.0;
  double comm_comm = 1.0;
};

void ValidateFactors(const SlowdownFactors& f);

enum class OverlapMode { kRatio, kBandwidth };

std::string_view OverlapModeName(OverlapMode m);
std::optional<OverlapMode> ParseOverlapMode(std::string_view name);

struct SimOptions {
  SlowdownFactors factors;
  OverlapMode overlap = OverlapMode::kRatio;
  int max_iterations = 10;
  Duration tolerance = Nanos(1);
};

struct TimelineSegment {
  int rank = 0;
  int stream = 0;
  int index = 0;  // position in the rank program
  std::string name;
  parallel::SegmentType type = parallel::SegmentType::kCompute;
  std::optional<ir::OpKind> kind;
  ir::Phase phase = ir::Phase::kForward;
  std::string module;
  int microbatch = 0;
  int layer = 0;
  Duration start{0};
  Duration end{0};
  Duration base{0};
  std::string engine;
  double slowdown = 1.0;  // (end - start) / base
  double flops = 0;
  double bytes = 0;

  Duration Length() const { return end - start; }
  bool operator==(const TimelineSegment&) const = default;
};

struct Timeline {
  // Ordered by (rank, stream, index).
  std::vector<TimelineSegment> segments;
  Duration makespan{0};
  int iterations = 0;
  bool converged = true;

  std::vector<int> Ranks() const;
  Duration RankMakespan(int rank) const;
  bool operator==(const Timeline&) const = default;
};

// Event-driven execution of `program`. Each stream runs its segments in
// program order; a segment starts once its stream is free and its deps are
// done. Collectives start on all simulated members at the latest member
// ready time and end together after the longest member duration; members
// absent from the program are assumed symmetric. A send and its recv
// rendezvous the same way. Overlap slowdowns are then applied and the
// program re-executed until no duration changes by more than the tolerance
// or max_iterations executions have run.
//
// Throws SimulationError on unmatched rendezvous or deadlock, naming a
// cycle of blocked streams.
Timeline Simulate(const parallel::ScheduleProgram& program, const engines::EngineStack& stack,
                  const engines::HardwareSpec& hw, const SimOptions& options = {});

// Communication busy time on each rank not covered by compute busy time.
std::map<int, Duration> ExposedComm(const Timeline& t);

}  // namespace charon::sched

#endif  // CHARON_SCHED_SIMULATOR_H_
