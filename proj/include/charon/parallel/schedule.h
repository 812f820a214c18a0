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


#ifndef CHARON_PARALLEL_SCHEDULE_H_
#define CHARON_PARALLEL_SCHEDULE_H_

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "charon/common/units.h"
#include "charon/ir/graph.h"
#include "charon/parallel/config.h"

namespace charon::parallel {

enum class SegmentType { kCompute, kCollective, kSend, kRecv };

std::string_view SegmentTypeName(SegmentType t);
std::optional<SegmentType> ParseSegmentType(std::string_view name);

// Stream ids within one rank. Point-to-point sends and receives get their
// own streams so a blocked transfer never stalls collectives.
inline constexpr int kComputeStream = 0;
inline constexpr int kCommStream = 1;
inline constexpr int kSendStream = 2;
inline constexpr int kRecvStream = 3;
inline constexpr int kNumStreams = 4;

bool IsCommStream(int stream);

struct Segment {
  std::string name;
  SegmentType type = SegmentType::kCompute;
  int stream = kComputeStream;
  // Node reference into ScheduleProgram::graphs; -1 when `fixed` is set.
  int graph = -1;
  int node = -1;
  // Overrides pricing.
  std::optional<Duration> fixed;
  int microbatch = 0;
  int layer = 0;
  ir::Phase phase = ir::Phase::kForward;
  // Indices of earlier segments of the same rank that must finish first.
  std::vector<int> deps;
  // Collectives rendezvous with the segments of the same key on the member
  // ranks; a send matches the recv of the same key on `peer`.
  std::string key;
  std::vector<int> group;
  int peer = -1;
  double bytes = 0;

  bool operator==(const Segment&) const = default;
};

struct RankProgram {
  int rank = 0;
  std::vector<Segment> segments;

  bool operator==(const RankProgram&) const = default;
};

struct ScheduleProgram {
  std::vector<ir::OperatorGraph> graphs;
  std::vector<RankProgram> ranks;

  const RankProgram* FindRank(int rank) const;
};

// Work of one pipeline stage. With a non-empty `block`, every microbatch
// runs `layers` copies of it; otherwise forward and backward are opaque
// segments of the fixed durations. `p2p_time` overrides pricing of the
// inter-stage transfers.
struct StageSpec {
  ir::OperatorGraph block;
  int64_t layers = 1;
  Duration forward{0};
  Duration backward{0};
  double boundary_bytes = 0;
  std::optional<Duration> p2p_time;
  bool training = true;
};

// Pipeline program over one representative rank per stage (tp and dp
// coordinates 0). One stage per pipeline rank; for dualpipe each rank also
// hosts stage pp-1-s of the reverse pipeline.
//
// 1F1B: stage s runs min(pp-s, m) warmup forwards, alternates backward and
// forward, then drains. Dualpipe splits the microbatches between the two
// directions and orders each rank's work by the start slot of a unit-time
// 1F1B, which keeps the cross-rank wait graph acyclic. Gradient sync nodes
// (attr dp_sync) run in the last microbatch only; optimizer nodes run once.
//
// Throws ConfigError for m < pp under 1F1B, odd pp or m under dualpipe, or
// a stage count different from pp.
ScheduleProgram BuildPpSchedule(const std::vector<StageSpec>& stages, const ParallelismConfig& cfg);

// Member ranks of the collective `n` as seen from `rank`.
std::vector<int> GroupMembers(const ir::OpNode& n, int rank);

// Every send paired with exactly one recv of the same key on its peer.
std::vector<std::string> CheckPairing(const ScheduleProgram& p);

// Number of microbatches whose forward has run but whose backward has not,
// maximized over the compute program of `rank`.
int PeakInFlight(const RankProgram& p);

}  // namespace charon::parallel

#endif  // CHARON_PARALLEL_SCHEDULE_H_
