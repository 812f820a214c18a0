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


#include <algorithm>
#include <cmath>
#include <random>

#include "charon/common/status.h"
#include "charon/engines/engine.h"
#include "charon/ir/backward.h"
#include "charon/ir/builders.h"
#include "charon/parallel/schedule.h"
#include "charon/parallel/shard.h"
#include "charon/sched/contention.h"
#include "charon/sched/simulator.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace charon::sched {
namespace {

using parallel::kCommStream;
using parallel::kComputeStream;
using parallel::ParallelismConfig;
using parallel::RankProgram;
using parallel::ScheduleProgram;
using parallel::StageSpec;
using testing::Fixed;
using testing::P2p;

class SchedTest : public ::testing::Test {
 protected:
  engines::HardwareSpec hw_ = testing::FlatHardware();
  engines::EngineStack stack_ = engines::BuildEngineStack({"analytical"}, hw_, nullptr);

  Timeline Run(const ScheduleProgram& p, SimOptions o = {}) { return Simulate(p, stack_, hw_, o); }
};

ScheduleProgram OneRank(std::vector<parallel::Segment> segs) {
  ScheduleProgram p;
  p.ranks.push_back({0, std::move(segs)});
  return p;
}

const TimelineSegment& Find(const Timeline& t, int rank, const std::string& name) {
  for (const auto& s : t.segments) {
    if (s.rank == rank && s.name == name) return s;
  }
  ADD_FAILURE() << "no segment " << name << " on rank " << rank;
  return t.segments.front();
}

ParallelismConfig Pipeline(int pp, int m, parallel::PpSchedule kind = parallel::PpSchedule::kOneFOneB) {
  ParallelismConfig c;
  c.pp = pp;
  c.world_size = pp;
  c.microbatches = m;
  c.pp_schedule = kind;
  return c;
}

std::vector<StageSpec> Uniform(int pp, double f_ms, double b_ms, double p2p_ms = 0) {
  StageSpec s;
  s.forward = Micros(f_ms * 1000);
  s.backward = Micros(b_ms * 1000);
  s.p2p_time = Micros(p2p_ms * 1000);
  return std::vector<StageSpec>(pp, s);
}

TEST_F(SchedTest, SequentialComputeHasNoGaps) {
  Timeline t = Run(OneRank({Fixed("a", kComputeStream, 1), Fixed("b", kComputeStream, 2),
                            Fixed("c", kComputeStream, 3)}));
  EXPECT_DOUBLE_EQ(ToMicros(t.makespan), 6.0);
  EXPECT_DOUBLE_EQ(ToMicros(Find(t, 0, "b").start), 1.0);
  EXPECT_DOUBLE_EQ(ToMicros(Find(t, 0, "c").start), 3.0);
}

TEST_F(SchedTest, SendRecvRendezvousAtLaterReadyTime) {
  ScheduleProgram p;
  p.ranks.push_back({0, {Fixed("work", kComputeStream, 2), P2p("x", true, 1, 5, {0})}});
  p.ranks.push_back({1, {Fixed("longer", kComputeStream, 9), P2p("x", false, 0, 5, {0})}});
  // The recv of rank 1 only becomes ready after its own compute.
  p.ranks[1].segments[1].deps = {0};
  Timeline t = Run(p);
  const auto& send = Find(t, 0, "send:x");
  const auto& recv = Find(t, 1, "recv:x");
  EXPECT_DOUBLE_EQ(ToMicros(send.start), 9.0);
  EXPECT_DOUBLE_EQ(ToMicros(recv.start), 9.0);
  EXPECT_DOUBLE_EQ(ToMicros(recv.end), 14.0);
  EXPECT_DOUBLE_EQ(ToMicros(send.end), 14.0);
}

TEST_F(SchedTest, CollectiveWaitsForSlowestMember) {
  ScheduleProgram p;
  for (int r = 0; r < 2; ++r) {
    auto ar = Fixed("ar", kCommStream, 3 + r, {0});
    ar.group = {0, 1};
    p.ranks.push_back({r, {Fixed("c", kComputeStream, 1 + 4 * r), ar}});
  }
  Timeline t = Run(p);
  for (int r = 0; r < 2; ++r) {
    EXPECT_DOUBLE_EQ(ToMicros(Find(t, r, "ar").start), 5.0);
    EXPECT_DOUBLE_EQ(ToMicros(Find(t, r, "ar").end), 9.0);
  }
}

TEST_F(SchedTest, DeadlockNamesCycle) {
  ScheduleProgram p;
  // Each rank waits for the other's message before sending its own.
  p.ranks.push_back({0, {P2p("b", false, 1, 1), P2p("a", true, 1, 1, {0})}});
  p.ranks.push_back({1, {P2p("a", false, 0, 1), P2p("b", true, 0, 1, {0})}});
  try {
    Run(p);
    FAIL() << "expected a deadlock";
  } catch (const SimulationError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("deadlock"), std::string::npos) << msg;
    EXPECT_NE(msg.find("send:a"), std::string::npos) << msg;
    EXPECT_NE(msg.find("recv:b"), std::string::npos) << msg;
  }
}

TEST_F(SchedTest, UnmatchedSendIsError) {
  ScheduleProgram p;
  p.ranks.push_back({0, {P2p("a", true, 1, 1)}});
  p.ranks.push_back({1, {P2p("other", false, 0, 1)}});
  EXPECT_THROW(Run(p), SimulationError);
}

TEST_F(SchedTest, SinglePipelineStageRunsMicrobatchesSequentially) {
  ScheduleProgram p = parallel::BuildPpSchedule(Uniform(1, 1, 2), Pipeline(1, 3));
  ASSERT_EQ(p.ranks.size(), 1u);
  std::vector<std::string> names;
  for (const auto& s : p.ranks[0].segments) {
    EXPECT_NE(s.type, parallel::SegmentType::kSend);
    EXPECT_NE(s.type, parallel::SegmentType::kRecv);
    names.push_back(s.name);
  }
  EXPECT_EQ(names, (std::vector<std::string>{"forward/mb0", "backward/mb0", "forward/mb1", "backward/mb1",
                                             "forward/mb2", "backward/mb2"}));
  EXPECT_DOUBLE_EQ(ToMicros(Run(p).makespan), 9000.0);
}

TEST_F(SchedTest, OneFOneBMakespanAndBubble) {
  ScheduleProgram p = parallel::BuildPpSchedule(Uniform(4, 1, 2), Pipeline(4, 8));
  Timeline t = Run(p);
  EXPECT_DOUBLE_EQ(ToMicros(t.makespan), 33000.0);
  for (int r : t.Ranks()) {
    Duration busy{0};
    for (const auto& s : t.segments) {
      if (s.rank == r && s.stream == kComputeStream) busy += s.Length();
    }
    EXPECT_DOUBLE_EQ(1.0 - busy / t.makespan, 3.0 / 11.0);
  }
}

TEST_F(SchedTest, OneFOneBRejectsTooFewMicrobatches) {
  EXPECT_THROW(parallel::BuildPpSchedule(Uniform(4, 1, 2), Pipeline(4, 3)), ConfigError);
  EXPECT_THROW(parallel::BuildPpSchedule(Uniform(3, 1, 2), Pipeline(3, 4, parallel::PpSchedule::kDualPipe)),
               ConfigError);
}

// Checks pairing, in-flight bounds and forward-before-backward, and that
// the program runs to completion.
void CheckPipeline(const ScheduleProgram& p, const Timeline& t, int pp, int m, bool dual) {
  EXPECT_TRUE(parallel::CheckPairing(p).empty());
  for (int s = 0; s < pp; ++s) {
    if (!dual) {
      EXPECT_EQ(parallel::PeakInFlight(p.ranks[s]), std::min(pp - s, m)) << "stage " << s;
    }
    std::map<int, Duration> fwd_end, bwd_start;
    for (const auto& seg : t.segments) {
      if (seg.rank != p.ranks[s].rank || seg.stream != kComputeStream) continue;
      if (seg.phase == ir::Phase::kForward) fwd_end[seg.microbatch] = std::max(fwd_end[seg.microbatch], seg.end);
      if (seg.phase == ir::Phase::kBackward && !bwd_start.count(seg.microbatch)) bwd_start[seg.microbatch] = seg.start;
    }
    for (const auto& [mb, start] : bwd_start) EXPECT_GE(start, fwd_end.at(mb));
  }
}

TEST_F(SchedTest, PipelinePropertyRandomShapes) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int pp = 1 + static_cast<int>(rng() % 8);
    const int m = pp + static_cast<int>(rng() % (17 - pp));
    std::vector<StageSpec> stages;
    for (int s = 0; s < pp; ++s) {
      StageSpec st;
      st.forward = Micros(1 + rng() % 50);
      st.backward = Micros(1 + rng() % 100);
      st.p2p_time = Micros(rng() % 20);
      stages.push_back(st);
    }
    ScheduleProgram p = parallel::BuildPpSchedule(stages, Pipeline(pp, m));
    Timeline t = Run(p);
    SCOPED_TRACE("pp=" + std::to_string(pp) + " m=" + std::to_string(m));
    CheckPipeline(p, t, pp, m, false);
  }
}

TEST_F(SchedTest, UniformPipelineMatchesClosedForm) {
  for (int pp = 1; pp <= 8; ++pp) {
    for (int m = pp; m <= 16; ++m) {
      Timeline t = Run(parallel::BuildPpSchedule(Uniform(pp, 1, 2), Pipeline(pp, m)));
      EXPECT_DOUBLE_EQ(ToMicros(t.makespan), (m + pp - 1) * 3000.0) << pp << " " << m;
    }
  }
}

TEST_F(SchedTest, DualPipeRandomShapes) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int pp = 2 * (1 + static_cast<int>(rng() % 4));
    const int m = 2 * (1 + static_cast<int>(rng() % 8));
    std::vector<StageSpec> stages;
    for (int s = 0; s < pp; ++s) {
      StageSpec st;
      st.forward = Micros(1 + rng() % 50);
      st.backward = Micros(1 + rng() % 100);
      st.p2p_time = Micros(rng() % 20);
      stages.push_back(st);
    }
    ScheduleProgram p = parallel::BuildPpSchedule(stages, Pipeline(pp, m, parallel::PpSchedule::kDualPipe));
    Timeline t = Run(p);
    SCOPED_TRACE("pp=" + std::to_string(pp) + " m=" + std::to_string(m));
    CheckPipeline(p, t, pp, m, true);
    int forwards = 0;
    for (const auto& r : p.ranks) {
      for (const auto& s : r.segments) forwards += s.name.rfind("forward", 0) == 0;
    }
    EXPECT_EQ(forwards, pp * m);
  }
}

TEST_F(SchedTest, DualPipeRanksServeBothDirections) {
  ScheduleProgram p = parallel::BuildPpSchedule(Uniform(4, 1, 2), Pipeline(4, 8, parallel::PpSchedule::kDualPipe));
  for (const auto& r : p.ranks) {
    std::set<int> forward;
    for (const auto& s : r.segments) {
      if (s.name.rfind("forward", 0) == 0) forward.insert(s.microbatch);
    }
    EXPECT_EQ(forward, (std::set<int>{0, 1, 2, 3, 4, 5, 6, 7})) << "rank " << r.rank;
  }
  // Free transfers leave nothing to hide, so the makespan matches 1F1B.
  EXPECT_DOUBLE_EQ(ToMicros(Run(p).makespan), 33000.0);
}

TEST_F(SchedTest, GraphStagesSyncGradientsOnce) {
  ir::ModelConfig cfg;
  cfg.hidden_size = 16;
  cfg.num_heads = 2;
  cfg.num_kv_heads = 2;
  cfg.head_dim = 8;
  cfg.ffn_hidden = 32;
  cfg.num_layers = 4;
  cfg.batch = 1;
  cfg.seq_len = 8;
  ParallelismConfig pc;
  pc.tp = 2;
  pc.pp = 2;
  pc.dp = 2;
  pc.world_size = 8;
  pc.microbatches = 4;
  ir::OperatorGraph joint = ir::DeriveBackward(parallel::ApplyTp(ir::BuildDenseBlock(cfg), 2, false));
  ir::OperatorGraph rank = parallel::ApplyDp(joint, pc).graph;
  int syncs = 0;
  for (const auto& n : rank.nodes) syncs += n.attrs.GetInt(ir::attr::kDpSync) != 0;
  ASSERT_GT(syncs, 0);
  std::vector<StageSpec> stages(2);
  for (auto& s : stages) {
    s.block = rank;
    s.layers = 2;
    s.boundary_bytes = 16 * 8 * 2;
  }
  ScheduleProgram p = parallel::BuildPpSchedule(stages, pc);
  ASSERT_EQ(p.ranks.size(), 2u);
  EXPECT_EQ(p.ranks[1].rank, 4);
  int sync_segments = 0;
  for (const auto& s : p.ranks[0].segments) {
    if (s.graph >= 0 && p.graphs[s.graph].nodes[s.node].attrs.GetInt(ir::attr::kDpSync)) {
      ++sync_segments;
      EXPECT_EQ(s.microbatch, 3);
      EXPECT_EQ(s.group, (std::vector<int>{0, 2}));
    }
  }
  EXPECT_EQ(sync_segments, syncs * 2);
  EXPECT_TRUE(parallel::CheckPairing(p).empty());
  Timeline t = Run(p);
  EXPECT_GT(t.makespan, Duration{0});
  EXPECT_EQ(Run(p), t);
}

TEST_F(SchedTest, UnitFactorsAreIdentity) {
  auto p = OneRank({Fixed("c", kComputeStream, 10), Fixed("m", kCommStream, 10)});
  Timeline base = Run(p);
  SimOptions o;
  EXPECT_EQ(base.iterations, 1);
  EXPECT_TRUE(base.converged);
  EXPECT_DOUBLE_EQ(ToMicros(base.makespan), 10.0);
  (void)o;
}

TEST_F(SchedTest, FullyCoveredCommStretchesCompute) {
  SimOptions o;
  o.factors.compute_under_comm = 1.2;
  Timeline t = Run(OneRank({Fixed("c", kComputeStream, 10), Fixed("m", kCommStream, 10)}), o);
  EXPECT_NEAR(ToMicros(Find(t, 0, "c").Length()), 12.0, 1e-9);
  EXPECT_NEAR(ToMicros(Find(t, 0, "m").Length()), 10.0, 1e-9);
  EXPECT_TRUE(t.converged);
}

TEST_F(SchedTest, PartialOverlapStretchesOnlyOverlappedPart) {
  ScheduleProgram p;
  // Rank 1 releases rank 0's compute at 6 us through a zero-length message.
  p.ranks.push_back({0, {Fixed("m", kCommStream, 10), P2p("go", false, 1, 0), Fixed("c", kComputeStream, 10, {1})}});
  p.ranks.push_back({1, {Fixed("w", kComputeStream, 6), P2p("go", true, 0, 0, {0})}});
  SimOptions o;
  o.factors.compute_under_comm = 1.5;
  Timeline t = Run(p, o);
  EXPECT_NEAR(ToMicros(Find(t, 0, "c").start), 6.0, 1e-9);
  EXPECT_NEAR(ToMicros(Find(t, 0, "c").Length()), 6 + 4 * 1.5, 1e-9);
  EXPECT_NEAR(ToMicros(Find(t, 1, "w").Length()), 6.0, 1e-9);
  EXPECT_TRUE(t.converged);
  EXPECT_LE(t.iterations, 10);
}

TEST_F(SchedTest, NonOverlappedSegmentsUnchanged) {
  auto p = OneRank({Fixed("a", kComputeStream, 4), Fixed("m", kCommStream, 3), Fixed("b", kComputeStream, 5, {1})});
  p.ranks[0].segments[1].deps = {0};
  SimOptions o;
  o.factors = {1.7, 1.4, 1.3};
  EXPECT_EQ(Run(p, o).segments, Run(p).segments);
}

TEST_F(SchedTest, ExposedCommExamples) {
  Timeline hidden = Run(OneRank({Fixed("c", kComputeStream, 10), Fixed("m", kCommStream, 4)}));
  EXPECT_DOUBLE_EQ(ToMicros(ExposedComm(hidden).at(0)), 0.0);
  auto serial = OneRank({Fixed("c", kComputeStream, 10), Fixed("m", kCommStream, 4, {0})});
  EXPECT_DOUBLE_EQ(ToMicros(ExposedComm(Run(serial)).at(0)), 4.0);
  EXPECT_DOUBLE_EQ(ToMicros(ExposedComm(Run(OneRank({Fixed("c", kComputeStream, 6), Fixed("m", kCommStream, 10)})))
                                .at(0)),
                   4.0);
}

// Random single-rank two-stream programs with intra-rank deps.
ScheduleProgram RandomTwoStream(std::mt19937& rng) {
  const int n = 2 + static_cast<int>(rng() % 20);
  std::vector<parallel::Segment> segs;
  for (int i = 0; i < n; ++i) {
    std::vector<int> deps;
    if (i > 0 && rng() % 2) deps.push_back(static_cast<int>(rng() % i));
    segs.push_back(Fixed("s" + std::to_string(i), rng() % 2 ? kComputeStream : kCommStream, 1 + rng() % 30, deps));
  }
  return OneRank(std::move(segs));
}

TEST_F(SchedTest, SandwichBoundAndFixpointConvergence) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> factor(1.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    ScheduleProgram p = RandomTwoStream(rng);
    Timeline t = Run(p);
    double compute = 0, comm = 0;
    for (const auto& s : t.segments) (s.stream == kComputeStream ? compute : comm) += ToMicros(s.Length());
    const double span = ToMicros(t.makespan);
    EXPECT_GE(span, std::max(compute, comm) - 1e-9);
    EXPECT_LE(span, compute + comm + 1e-9);
    SimOptions o;
    o.factors = {factor(rng), factor(rng), factor(rng)};
    Timeline slow = Run(p, o);
    EXPECT_TRUE(slow.converged) << "trial " << trial;
    EXPECT_LE(slow.iterations, 10);
    EXPECT_GE(slow.makespan, t.makespan);
  }
}

TEST_F(SchedTest, BandwidthModeSharesLink) {
  // Two 1 GB sends to the same neighbor on different streams.
  ScheduleProgram p;
  auto send = [](std::string key, int stream) {
    parallel::Segment s = P2p(std::move(key), true, 1, 0);
    s.fixed.reset();
    s.bytes = 1e9;
    s.stream = stream;
    return s;
  };
  auto recv = [](std::string key, int stream) {
    parallel::Segment s = P2p(std::move(key), false, 0, 0);
    s.fixed.reset();
    s.bytes = 1e9;
    s.stream = stream;
    return s;
  };
  p.ranks.push_back({0, {send("a", parallel::kSendStream), send("b", kCommStream)}});
  p.ranks[0].segments[1].type = parallel::SegmentType::kSend;
  p.ranks.push_back({1, {recv("a", parallel::kRecvStream), recv("b", kCommStream)}});
  p.ranks[1].segments[1].type = parallel::SegmentType::kRecv;
  const double alone = ToMicros(Run(p).makespan);
  EXPECT_NEAR(alone, 5 + 1e9 / 1e11 * 1e6, 1e-6);
  SimOptions o;
  o.overlap = OverlapMode::kBandwidth;
  Timeline t = Run(p, o);
  EXPECT_NEAR(ToMicros(t.makespan), 5 + 2 * 1e9 / 1e11 * 1e6, 1e-3);
  EXPECT_TRUE(t.converged);
}

TEST(ContentionTest, LoneTransferUnchanged) {
  FluidResult r = IntegrateFluid({{Micros(3), {{0, Micros(2), 1e6, 1e10}}}}, {1e10});
  EXPECT_NEAR(ToMicros(r.finish[0]), 3 + 2 + 100, 1e-9);
  EXPECT_DOUBLE_EQ(r.delivered[0], 1e6);
}

TEST(ContentionTest, TwoEqualTransfersShareEqually) {
  const double s = 1e9, b = 1e11;
  FluidResult r = IntegrateFluid({{Duration{0}, {{0, Duration{0}, s, b}}}, {Duration{0}, {{0, Duration{0}, s, b}}}}, {b});
  EXPECT_EQ(r.finish[0], Seconds(2 * s / b));
  EXPECT_EQ(r.finish[1], Seconds(2 * s / b));
}

TEST(ContentionTest, UnequalTransfersDrainPiecewise) {
  const double s = 1e9, b = 1e11;
  FluidResult r =
      IntegrateFluid({{Duration{0}, {{0, Duration{0}, 2 * s, b}}}, {Duration{0}, {{0, Duration{0}, s, b}}}}, {b});
  EXPECT_DOUBLE_EQ(ToSeconds(r.finish[1]), 2 * s / b);
  EXPECT_DOUBLE_EQ(ToSeconds(r.finish[0]), 3 * s / b);
}

TEST(ContentionTest, WorkConservation) {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> bytes(1e3, 1e9), lat(0, 20), bw(1e9, 1e11);
  for (int trial = 0; trial < 100; ++trial) {
    const int links = 1 + static_cast<int>(rng() % 3);
    std::vector<double> cap;
    for (int l = 0; l < links; ++l) cap.push_back(bw(rng));
    std::vector<FluidTransfer> ts(1 + rng() % 8);
    for (auto& t : ts) {
      t.start = Micros(lat(rng) * 100);
      for (int k = 0, n = 1 + static_cast<int>(rng() % 3); k < n; ++k) {
        t.phases.push_back({static_cast<int>(rng() % links), Micros(lat(rng)), bytes(rng), bw(rng)});
      }
    }
    FluidResult r = IntegrateFluid(ts, cap);
    for (size_t i = 0; i < ts.size(); ++i) {
      double total = 0, floor = 0;
      for (const auto& ph : ts[i].phases) {
        total += ph.bytes;
        floor += ph.bytes / std::min(ph.demand, cap[ph.link]) * 1e9 + ph.latency.count();
      }
      EXPECT_NEAR(r.delivered[i], total, 1.0);
      EXPECT_GE((r.finish[i] - ts[i].start).count(), floor * (1 - 1e-9));
    }
  }
}

TEST(ContentionTest, RejectsBadInput) {
  EXPECT_THROW(IntegrateFluid({{Duration{0}, {{2, Duration{0}, 1, 1}}}}, {1.0}), SimulationError);
  EXPECT_THROW(IntegrateFluid({}, {0.0}), SimulationError);
}

}  // namespace
}  // namespace charon::sched
