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


#include <random>

#include <json.hpp>

#include "charon/analysis/metrics.h"
#include "charon/analysis/report.h"
#include "charon/analysis/trace.h"
#include "charon/common/status.h"
#include "charon/engines/engine.h"
#include "charon/ir/backward.h"
#include "charon/ir/builders.h"
#include "charon/parallel/schedule.h"
#include "charon/parallel/shard.h"
#include "charon/passes/transforms.h"
#include "charon/sched/simulator.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace charon::analysis {
namespace {

using parallel::kCommStream;
using parallel::kComputeStream;
using sched::Timeline;
using sched::TimelineSegment;

class AnalysisTest : public ::testing::Test {
 protected:
  engines::HardwareSpec hw_ = testing::FlatHardware();
  engines::EngineStack stack_ = engines::BuildEngineStack({"analytical"}, hw_, nullptr);

  // One stage, one microbatch, forward only, the whole graph as one block.
  Timeline RunGraph(const ir::OperatorGraph& g, bool training = false) {
    parallel::StageSpec st;
    st.block = g;
    st.training = training;
    parallel::ParallelismConfig c;
    return sched::Simulate(parallel::BuildPpSchedule({st}, c), stack_, hw_);
  }
};

ir::OperatorGraph SquareMatmul(int64_t n) {
  testing::Sketch s(ir::Precision::kBF16);
  s.Input("a", {n, n});
  s.Input("b", {n, n}, ir::TensorRole::kWeight);
  s.Op("mm", ir::OpKind::kMatmul, {"a", "b"}, {n, n});
  return s.Finish({"mm:0"});
}

TimelineSegment Seg(int rank, int stream, double start_us, double end_us, std::string name = "s") {
  TimelineSegment s;
  s.rank = rank;
  s.stream = stream;
  s.name = std::move(name);
  s.start = Micros(start_us);
  s.end = Micros(end_us);
  return s;
}

Timeline Of(std::vector<TimelineSegment> segs) {
  Timeline t;
  for (const auto& s : segs) t.makespan = std::max(t.makespan, s.end);
  t.segments = std::move(segs);
  return t;
}

TEST_F(AnalysisTest, ComputeBoundMatmulSaturatesPeak) {
  ir::OperatorGraph g = SquareMatmul(4096);
  Timeline t = RunGraph(g);
  FlopsSummary f = SummarizeFlops(static_cast<double>(ir::GraphFlops(g)), t, hw_, 1, ModelPrecision(g));
  EXPECT_NEAR(f.mfu, 1.0, 1e-12);
}

TEST_F(AnalysisTest, TenfoldMemoryBoundGivesTenthMfu) {
  // n = 15: 2 * 3n^2 bytes over 2e12 B/s is ten times 2n^3 FLOPs over 1e14.
  ir::OperatorGraph g = SquareMatmul(15);
  Timeline t = RunGraph(g);
  FlopsSummary f = SummarizeFlops(static_cast<double>(ir::GraphFlops(g)), t, hw_, 1, ModelPrecision(g));
  EXPECT_NEAR(f.mfu, 0.1, 1e-12);
}

TEST_F(AnalysisTest, RecomputeLeavesModelFlopsAlone) {
  ir::OperatorGraph joint = ir::DeriveBackward(SquareMatmul(64));
  const double model = static_cast<double>(ir::GraphFlops(joint));
  passes::RecomputePolicy policy;
  policy.full = true;
  ir::OperatorGraph re = passes::Recompute(joint, policy).rewrite.graph;
  EXPECT_GE(ir::GraphFlops(re), ir::GraphFlops(joint));
  Timeline fixed = Of({Seg(0, kComputeStream, 0, 100)});
  EXPECT_EQ(SummarizeFlops(model, fixed, hw_, 1, ir::Precision::kBF16).model_flops, model);
  EXPECT_DOUBLE_EQ(SummarizeFlops(model, fixed, hw_, 1, ir::Precision::kBF16).mfu,
                   model / (100e-6 * 1e14));
}

TEST_F(AnalysisTest, MfuRejectsEmptyWorld) {
  EXPECT_THROW(SummarizeFlops(1, Of({}), hw_, 0, ir::Precision::kBF16), ConfigError);
}

TEST(BreakdownTest, EverythingInOthers) {
  Timeline t = Of({Seg(0, kComputeStream, 0, 3), Seg(0, kComputeStream, 3, 7), Seg(0, kCommStream, 1, 2)});
  Breakdown b = ComputeBreakdown(t, [](const TimelineSegment&) { return std::string(kOthers); });
  ASSERT_EQ(b.size(), 1u);
  EXPECT_DOUBLE_EQ(ToMicros(b[kOthers]["F"]), 8.0);
}

TEST(BreakdownTest, PartitionsBusyTime) {
  std::mt19937 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TimelineSegment> segs;
    Duration total{0};
    for (int i = 0; i < 30; ++i) {
      auto s = Seg(static_cast<int>(rng() % 3), static_cast<int>(rng() % 4), i, i + 1 + rng() % 5);
      s.kind = static_cast<ir::OpKind>(rng() % 20);
      s.module = std::vector<std::string>{"attention", "ffn", "other"}[rng() % 3];
      s.phase = static_cast<ir::Phase>(rng() % 3);
      total += s.Length();
      segs.push_back(s);
    }
    EXPECT_EQ(BreakdownTotal(ComputeBreakdown(Of(segs))), total);
  }
}

TEST_F(AnalysisTest, TrainingBreakdownWithTp8HasTableLayout) {
  ir::ModelConfig cfg;
  cfg.hidden_size = 64;
  cfg.num_heads = 8;
  cfg.num_kv_heads = 8;
  cfg.head_dim = 8;
  cfg.ffn_hidden = 128;
  cfg.batch = 1;
  cfg.seq_len = 64;
  ir::OperatorGraph joint = ir::DeriveBackward(parallel::ApplyTp(ir::BuildDenseBlock(cfg), 8, true));
  Breakdown b = ComputeBreakdown(RunGraph(joint, true));
  std::set<std::string> rows;
  for (const auto& [cat, cols] : b) {
    rows.insert(cat);
    for (const auto& [col, d] : cols) EXPECT_TRUE(col == "F" || col == "B") << cat << " " << col;
  }
  EXPECT_EQ(rows, (std::set<std::string>{kAttention, kFeedForward, kOthers, kAllGather, kReduceScatter}));
  for (const auto& row : rows) {
    EXPECT_GT(b[row]["F"].count(), 0) << row;
    EXPECT_GT(b[row]["B"].count(), 0) << row;
  }
}

TEST(TraceTest, EmptyTimeline) { EXPECT_EQ(EmitChromeTrace(Timeline{}), R"({"traceEvents":[]})"); }

TEST(TraceTest, SingleSegment) {
  auto events = ParseChromeTrace(EmitChromeTrace(Of({Seg(0, kComputeStream, 0, 5, "mm")})));
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0].name, "mm");
  EXPECT_EQ(events[0].ph, "X");
  EXPECT_DOUBLE_EQ(events[0].ts, 0.0);
  EXPECT_DOUBLE_EQ(events[0].dur, 5.0);
}

TEST_F(AnalysisTest, OverlapSharesPidOnDifferentTids) {
  parallel::ScheduleProgram p;
  p.ranks.push_back({0, {testing::Fixed("m", kCommStream, 10), testing::P2p("go", false, 1, 0),
                         testing::Fixed("c", kComputeStream, 10, {1})}});
  p.ranks.push_back({1, {testing::Fixed("w", kComputeStream, 6), testing::P2p("go", true, 0, 0, {0})}});
  auto events = ParseChromeTrace(EmitChromeTrace(sched::Simulate(p, stack_, hw_)));
  const TraceEvent *c = nullptr, *m = nullptr;
  for (const auto& e : events) {
    if (e.name == "c") c = &e;
    if (e.name == "m") m = &e;
  }
  ASSERT_TRUE(c && m);
  EXPECT_EQ(c->pid, m->pid);
  EXPECT_NE(c->tid, m->tid);
  EXPECT_LT(c->ts, m->ts + m->dur);
  EXPECT_LT(m->ts, c->ts + c->dur);
}

TEST_F(AnalysisTest, TraceRoundTripsLosslessly) {
  ir::OperatorGraph joint = ir::DeriveBackward(parallel::ApplyTp(ir::BuildDenseBlock([] {
    ir::ModelConfig c;
    c.hidden_size = 32;
    c.num_heads = 4;
    c.num_kv_heads = 4;
    c.head_dim = 8;
    c.ffn_hidden = 64;
    c.seq_len = 16;
    return c;
  }()), 2, false));
  Timeline t = RunGraph(joint, true);
  auto events = ParseChromeTrace(EmitChromeTrace(t));
  ASSERT_EQ(events.size(), t.segments.size());
  for (size_t i = 0; i < events.size(); ++i) {
    EXPECT_EQ(events[i].name, t.segments[i].name);
    EXPECT_EQ(events[i].ts, ToMicros(t.segments[i].start));
    EXPECT_EQ(events[i].dur, ToMicros(t.segments[i].Length()));
    EXPECT_GE(events[i].dur, 0);
    EXPECT_EQ(events[i].pid, t.segments[i].rank);
    EXPECT_EQ(events[i].tid, t.segments[i].stream);
  }
}

TEST(TraceTest, RejectsMalformed) {
  EXPECT_THROW(ParseChromeTrace("[]"), ParseError);
  EXPECT_THROW(ParseChromeTrace(R"({"traceEvents":[{"name":"x"}]})"), ParseError);
  EXPECT_THROW(ParseChromeTrace("{"), ParseError);
}

TEST(EnergyTest, Examples) {
  engines::HardwareSpec hw = testing::FlatHardware();
  EXPECT_EQ(EnergyJoules(Timeline{}, hw), 0.0);
  hw.tdp_w = 700;
  EXPECT_NEAR(EnergyJoules(Of({Seg(0, kComputeStream, 0, 1e6)}), hw), 700.0, 1e-9);
  hw.tdp_w = 400;
  EXPECT_NEAR(EnergyJoules(Of({Seg(0, kComputeStream, 0, 5e5), Seg(1, kComputeStream, 0, 2.5e5),
                               Seg(1, kCommStream, 2e5, 5e5)}),
                           hw),
              400.0, 1e-9);
}

TEST(ReportTest, EmitsVersionedDocument) {
  Report r;
  r.scenario = "tiny";
  r.mode = "train";
  r.mfu = 0.5;
  r.step_time = Micros(1234.56789);
  r.breakdown[kOthers]["F"] = Micros(1.0004);
  r.memory_capacity = 100;
  r.memory.push_back({0, 0, 2, 1, StageMemory{40, 60, {}}});
  auto doc = nlohmann::json::parse(EmitReport(r));
  EXPECT_EQ(doc["version"], "charon-report/1");
  EXPECT_DOUBLE_EQ(doc["step_time_us"].get<double>(), 1234.568);
  EXPECT_DOUBLE_EQ(doc["breakdown_us"]["Others"]["F"].get<double>(), 1.0);
  EXPECT_TRUE(doc["memory"]["fits"].get<bool>());
  EXPECT_EQ(EmitReport(r), EmitReport(r));
}

TEST(OperatorTableTest, AggregatesByName) {
  auto rows = OperatorTable(Of({Seg(0, kComputeStream, 0, 2, "a"), Seg(0, kComputeStream, 2, 3, "b"),
                                Seg(0, kComputeStream, 3, 5, "a"), Seg(1, kComputeStream, 0, 9, "a")}),
                            0);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].name, "a");
  EXPECT_EQ(rows[0].count, 2);
  EXPECT_DOUBLE_EQ(ToMicros(rows[0].total), 4.0);
}

}  // namespace
}  // namespace charon::analysis
