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


#include <cmath>
#include <memory>
#include <random>

#include "charon/common/status.h"
#include "charon/engines/calibrate.h"
#include "charon/engines/collective.h"
#include "charon/engines/engine.h"
#include "charon/engines/hardware.h"
#include "charon/engines/predictor.h"
#include "charon/engines/profile_db.h"
#include "charon/engines/roofline.h"
#include "charon/engines/sweep.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace charon::engines {
namespace {

using ir::OpKind;
using ir::Precision;
using ir::TensorMeta;
using testing::FlatHardware;
using testing::TwoTierHardware;

TensorMeta Meta(std::vector<int64_t> shape, Precision p = Precision::kBF16) {
  return {std::move(shape), p, ir::TensorRole::kActivation};
}

SweepEntry Matmul(int64_t m, int64_t k, int64_t n, Precision p = Precision::kBF16) {
  SweepEntry e;
  e.node.id = "mm";
  e.node.kind = OpKind::kMatmul;
  e.inputs = {Meta({m, k}, p), Meta({k, n}, p)};
  e.node.outputs = {Meta({m, n}, p)};
  return e;
}

SweepEntry Add(int64_t n, Precision p) {
  SweepEntry e;
  e.node.id = "add";
  e.node.kind = OpKind::kAdd;
  e.inputs = {Meta({n}, p), Meta({n}, p)};
  e.node.outputs = {Meta({n}, p)};
  return e;
}

double Us(Duration d) { return ToMicros(d); }

TEST(RooflineTest, ComputeBoundMatmul) {
  SweepEntry e = Matmul(4096, 4096, 4096);
  const double compute_us = 2.0 * 4096 * 4096 * 4096 / 1e14 * 1e6;
  EXPECT_NEAR(compute_us, 1374.4, 0.1);
  EXPECT_NEAR(Us(RooflineTime(e.node, e.inputs, FlatHardware())), compute_us, 1e-6);
}

TEST(RooflineTest, MemoryBoundAdd) {
  SweepEntry e = Add(1000000, Precision::kFP32);
  EXPECT_NEAR(Us(RooflineTime(e.node, e.inputs, FlatHardware())), 12e6 / 2e12 * 1e6, 1e-9);
  EXPECT_NEAR(Us(RooflineTime(e.node, e.inputs, FlatHardware())), 6.0, 0.01);
}

TEST(RooflineTest, NoopPaysLaunchOnly) {
  HardwareSpec hw = FlatHardware();
  hw.launch_overhead_s = 2e-6;
  ir::OpNode noop;
  noop.kind = OpKind::kNoop;
  noop.outputs = {Meta({16})};
  std::vector<TensorMeta> in = {Meta({16})};
  EXPECT_DOUBLE_EQ(Us(RooflineTime(noop, in, hw)), 2.0);
}

TEST(RooflineTest, MissingPrecisionIsConfigError) {
  HardwareSpec hw = FlatHardware();
  hw.peak_flops.erase(Precision::kFP8);
  SweepEntry e = Matmul(64, 64, 64, Precision::kFP8);
  EXPECT_THROW(RooflineTime(e.node, e.inputs, hw), ConfigError);
}

TEST(RooflineTest, Monotone) {
  HardwareSpec hw = FlatHardware();
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(1, 1e12);
  for (int i = 0; i < 200; ++i) {
    double f = u(rng), b = u(rng);
    Duration base = RooflineTime(f, b, Precision::kBF16, hw);
    EXPECT_GE(RooflineTime(f * 1.5, b, Precision::kBF16, hw), base);
    EXPECT_GE(RooflineTime(f, b * 1.5, Precision::kBF16, hw), base);
    HardwareSpec faster = hw;
    faster.peak_flops[Precision::kBF16] *= 2;
    faster.memory_bandwidth *= 2;
    EXPECT_LE(RooflineTime(f, b, Precision::kBF16, faster), base);
  }
}

TEST(RooflineTest, PrecisionHalvesBandwidthTerm) {
  SweepEntry fp32 = Add(1 << 20, Precision::kFP32);
  SweepEntry bf16 = Add(1 << 20, Precision::kBF16);
  HardwareSpec hw = FlatHardware();
  EXPECT_DOUBLE_EQ(RooflineTime(fp32.node, fp32.inputs, hw).count(),
                   2 * RooflineTime(bf16.node, bf16.inputs, hw).count());
}

TEST(CollectiveTest, RingAllReduceClosedForm) {
  const double s = kGiB;
  Duration t = CollectiveTime(OpKind::kAllReduce, s, {4, 1}, FlatHardware()).time;
  const double oracle_ms = 6 * (5e-6 + s / 4 / 1e11) * 1e3;
  EXPECT_NEAR(oracle_ms, 16.136, 0.001);
  EXPECT_NEAR(ToSeconds(t) * 1e3, oracle_ms, 1e-9);
}

TEST(CollectiveTest, TreeAllReduceClosedForm) {
  Duration t = CollectiveTime(OpKind::kAllReduce, kMiB, {8, 1}, FlatHardware(), CollectiveAlgo::kTree).time;
  EXPECT_NEAR(Us(t), 6 * (5.0 + kMiB / 1e11 * 1e6), 1e-9);
  EXPECT_NEAR(Us(t), 92.9, 0.1);
}

TEST(CollectiveTest, SingleRankIsFree) {
  for (OpKind k : {OpKind::kAllReduce, OpKind::kAllGather, OpKind::kReduceScatter, OpKind::kAllToAll}) {
    EXPECT_EQ(CollectiveTime(k, kGiB, {1, 1}, FlatHardware()).time.count(), 0.0);
  }
}

TEST(CollectiveTest, AllReduceIsGatherPlusScatter) {
  std::mt19937 rng(5);
  for (const auto& hw : {FlatHardware(), TwoTierHardware()}) {
    for (int i = 0; i < 100; ++i) {
      int64_t p = int64_t{2} << (rng() % 6);
      double s = static_cast<double>(rng() % 1000000 + 1) * 64;
      CommGroup g{p, 1};
      double ar = CollectiveTime(OpKind::kAllReduce, s, g, hw).time.count();
      double ag = CollectiveTime(OpKind::kAllGather, s, g, hw).time.count();
      double rs = CollectiveTime(OpKind::kReduceScatter, s, g, hw).time.count();
      EXPECT_DOUBLE_EQ(ar, ag + rs) << "p=" << p << " s=" << s;
    }
  }
}

TEST(CollectiveTest, StrictlyIncreasingInPayload) {
  for (OpKind k : {OpKind::kAllReduce, OpKind::kAllGather, OpKind::kAllToAll, OpKind::kSend}) {
    double prev = -1;
    for (double s = 1024; s < 1e10; s *= 3) {
      double t = CollectiveTime(k, s, {8, 1}, TwoTierHardware()).time.count();
      EXPECT_GT(t, prev);
      prev = t;
    }
  }
}

TEST(CollectiveTest, AllToAllRingVersusSwitch) {
  const double s = 8 * kMiB;
  HardwareSpec hw = TwoTierHardware();
  Duration sw = CollectiveTime(OpKind::kAllToAll, s, {8, 1}, hw).time;
  EXPECT_NEAR(ToSeconds(sw), 2e-6 + 7 * s / 8 / 2e11, 1e-15);
  Duration ring = CollectiveTime(OpKind::kAllToAll, s, {4, 1}, FlatHardware()).time;
  EXPECT_NEAR(ToSeconds(ring), 3 * (5e-6 + s / 4 / 1e11), 1e-15);
}

TEST(CollectiveTest, SendIsAlphaBeta) {
  Duration t = CollectiveTime(OpKind::kSend, 1e6, {2, 1}, FlatHardware()).time;
  EXPECT_NEAR(ToSeconds(t), 5e-6 + 1e6 / 1e11, 1e-15);
}

TEST(CollectiveTest, HierarchicalDecomposition) {
  HardwareSpec hw = TwoTierHardware();
  const double s = 64 * kMiB;
  CollectiveCost cost = CollectiveTime(OpKind::kAllReduce, s, {32, 1}, hw);
  // Intra reduce_scatter, inter reduce_scatter, inter all_gather, intra
  // all_gather.
  ASSERT_EQ(cost.phases.size(), 4u);
  std::vector<int> tiers;
  for (const auto& ph : cost.phases) tiers.push_back(ph.tier);
  EXPECT_EQ(tiers, (std::vector<int>{0, 1, 1, 0}));
  const double oracle = 7 * (2e-6 + s / 8 / 2e11) + 2 * 3 * (5e-6 + s / 8 / 4 / 2.5e10) + 7 * (2e-6 + s / 8 / 2e11);
  EXPECT_NEAR(ToSeconds(cost.time), oracle, 1e-12);
  // Stride 8 puts every member in its own island: flat on the fabric.
  CollectiveCost strided = CollectiveTime(OpKind::kAllReduce, s, {4, 8}, hw);
  ASSERT_EQ(strided.phases.size(), 2u);
  EXPECT_EQ(strided.phases[0].tier, 1);
  EXPECT_EQ(strided.phases[1].tier, 1);
}

TEST(CollectiveTest, GroupBeyondTopologyIsTopologyError) {
  HardwareSpec hw = FlatHardware();
  hw.tiers[0].group_size = 8;
  EXPECT_THROW(CollectiveTime(OpKind::kAllReduce, 1024, {16, 1}, hw), TopologyError);
}

TEST(CollectiveTest, HalvingPrecisionHalvesPayloadTerm) {
  ir::OpNode ar;
  ar.kind = OpKind::kAllReduce;
  ar.attrs.Set(std::string(ir::attr::kGroupSize), int64_t{4});
  HardwareSpec hw = FlatHardware();
  hw.tiers[0].alpha_s = 0;
  std::vector<TensorMeta> fp32 = {Meta({1 << 20}, Precision::kFP32)};
  std::vector<TensorMeta> bf16 = {Meta({1 << 20}, Precision::kBF16)};
  ar.outputs = fp32;
  double t32 = CollectiveTime(ar, fp32, hw).time.count();
  ar.outputs = bf16;
  double t16 = CollectiveTime(ar, bf16, hw).time.count();
  EXPECT_DOUBLE_EQ(t32, 2 * t16);
}

TEST(HardwareTest, RoundTripAndValidation) {
  HardwareSpec hw = TwoTierHardware();
  HardwareSpec parsed = ParseHardware(EmitHardware(hw));
  EXPECT_EQ(parsed.device_id, hw.device_id);
  EXPECT_EQ(parsed.tiers.size(), 2u);
  EXPECT_EQ(parsed.tiers[0].kind, TierKind::kSwitch);
  EXPECT_EQ(EmitHardware(parsed), EmitHardware(hw));
  HardwareSpec bad = hw;
  bad.tiers[1].group_size = 12;
  EXPECT_THROW(ValidateHardware(bad), TopologyError);
  EXPECT_THROW(ParseHardware("{\"version\":\"charon-hw/2\"}"), ParseError);
  EXPECT_THROW(LoadHardwareFile("/nonexistent/hw.json"), ConfigError);
}

TEST(ProfileDbTest, LookupHitAndMiss) {
  HardwareSpec hw = FlatHardware();
  std::vector<SweepEntry> sweep = {Matmul(64, 128, 256), Matmul(128, 128, 128)};
  ProfileDb db = GenerateSyntheticDb(hw, sweep).db;
  auto hit = db.Lookup(MakeKey(hw.device_id, sweep[0].node, sweep[0].inputs));
  ASSERT_TRUE(hit.has_value());
  EXPECT_DOUBLE_EQ(*hit, RooflineTime(sweep[0].node, sweep[0].inputs, hw).count());
  SweepEntry other = Matmul(64, 64, 64);
  EXPECT_FALSE(db.Lookup(MakeKey(hw.device_id, other.node, other.inputs)).has_value());
}

TEST(ProfileDbTest, TextRoundTripAndDuplicates) {
  HardwareSpec hw = FlatHardware();
  auto sweep = RandomSweep(OpKind::kAttention, 20, Precision::kBF16, 9);
  ProfileDb db = GenerateSyntheticDb(hw, sweep).db;
  std::string text = EmitProfileDb(db);
  ProfileDb parsed = ParseProfileDb(text);
  EXPECT_EQ(parsed.size(), db.size());
  EXPECT_EQ(EmitProfileDb(parsed), text);
  std::string first_record = text.substr(text.find('\n') + 1);
  first_record = first_record.substr(0, first_record.find('\n') + 1);
  EXPECT_THROW(ParseProfileDb(text + first_record), ConfigError);
  EXPECT_THROW(ParseProfileDb("device,kind\n"), ParseError);
}

TEST(ProfileDbTest, SyntheticGeneratorDeduplicates) {
  std::vector<SweepEntry> sweep;
  for (int i = 0; i < 10; ++i) sweep.push_back(Matmul(64 * (i + 1), 64, 64));
  sweep.push_back(sweep[3]);
  SyntheticDbResult r = GenerateSyntheticDb(FlatHardware(), sweep);
  EXPECT_EQ(r.db.size(), 10u);
  EXPECT_EQ(r.duplicates, 1);
}

TEST(ProfileDbTest, SignatureIgnoresBookkeepingAttrs) {
  SweepEntry a = Matmul(64, 64, 64);
  SweepEntry b = a;
  b.node.id = "other";
  b.node.attrs.Set(std::string(ir::attr::kModule), std::string("ffn"));
  EXPECT_EQ(ShapeSignature(a.node, a.inputs), ShapeSignature(b.node, b.inputs));
  b.node.attrs.Set(std::string(ir::attr::kTransposeB), int64_t{1});
  EXPECT_NE(ShapeSignature(a.node, a.inputs), ShapeSignature(b.node, b.inputs));
}

TEST(PredictorTest, SyntheticRooflineMatmulsWithinFivePercent) {
  HardwareSpec hw = FlatHardware();
  hw.launch_overhead_s = 2e-6;
  ProfileDb db = GenerateSyntheticDb(hw, RandomSweep(OpKind::kMatmul, 500, Precision::kBF16, 1)).db;
  Predictor p = TrainPredictor(db, hw.device_id, OpKind::kMatmul);
  EXPECT_EQ(p.samples, static_cast<int64_t>(db.size()));
  EXPECT_LE(p.holdout_mae, 0.05);
  // Unseen shapes from the same distribution.
  double err = 0;
  auto fresh = RandomSweep(OpKind::kMatmul, 200, Precision::kBF16, 77);
  for (const auto& e : fresh) {
    double truth = RooflineTime(e.node, e.inputs, hw).count();
    err += std::abs(p.PredictNs(e.node, e.inputs) - truth) / truth;
  }
  EXPECT_LE(err / fresh.size(), 0.05);
}

TEST(PredictorTest, ConstantLatency) {
  ProfileDb db;
  auto sweep = RandomSweep(OpKind::kRmsNorm, 80, Precision::kBF16, 4);
  for (const auto& e : sweep) db.AddIfAbsent({MakeKey("dev", e.node, e.inputs), 1234.5, 1});
  Predictor p = TrainPredictor(db, "dev", OpKind::kRmsNorm);
  for (const auto& e : RandomSweep(OpKind::kRmsNorm, 20, Precision::kBF16, 5)) {
    EXPECT_NEAR(p.PredictNs(e.node, e.inputs), 1234.5, 1e-9);
  }
  EXPECT_NEAR(p.holdout_mae, 0.0, 1e-12);
}

TEST(PredictorTest, RefusesTinyDb) {
  ProfileDb db = GenerateSyntheticDb(FlatHardware(), RandomSweep(OpKind::kMatmul, 10, Precision::kBF16, 2)).db;
  try {
    TrainPredictor(db, "test-gpu", OpKind::kMatmul);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
  }
}

TEST(PredictorTest, TrainingPointsAndPositivity) {
  HardwareSpec hw = FlatHardware();
  auto sweep = RandomSweep(OpKind::kAttention, 300, Precision::kBF16, 8);
  ProfileDb db = GenerateSyntheticDb(hw, sweep).db;
  Predictor p = TrainPredictor(db, hw.device_id, OpKind::kAttention);
  Predictor again = TrainPredictor(db, hw.device_id, OpKind::kAttention);
  double err = 0;
  for (const auto& e : sweep) {
    double truth = RooflineTime(e.node, e.inputs, hw).count();
    double pred = p.PredictNs(e.node, e.inputs);
    EXPECT_GT(pred, 0);
    EXPECT_EQ(pred, again.PredictNs(e.node, e.inputs));
    err += std::abs(pred - truth) / truth;
  }
  EXPECT_LE(err / sweep.size(), 0.05);
}

TEST(EngineStackTest, PrioritizedFallback) {
  HardwareSpec hw = FlatHardware();
  auto db = std::make_shared<ProfileDb>(
      GenerateSyntheticDb(hw, RandomSweep(OpKind::kMatmul, 120, Precision::kBF16, 3)).db);
  SweepEntry known = RandomSweep(OpKind::kMatmul, 1, Precision::kBF16, 3)[0];
  db->Add({MakeKey(hw.device_id, Add(4096, Precision::kBF16).node, Add(4096, Precision::kBF16).inputs), 777, 3});
  EngineStack stack = BuildEngineStack({"profile", "predict", "analytical"}, hw, db);

  PricedOp hit = stack.Dispatch(known.node, known.inputs);
  EXPECT_EQ(hit.engine, "profile");
  SweepEntry add = Add(4096, Precision::kBF16);
  EXPECT_EQ(stack.Dispatch(add.node, add.inputs).time.count(), 777);

  SweepEntry unseen = Matmul(4032, 1984, 704);
  PricedOp predicted = stack.Dispatch(unseen.node, unseen.inputs);
  EXPECT_EQ(predicted.engine, "prediction");
  EXPECT_GT(predicted.time.count(), 0);

  SweepEntry norm = RandomSweep(OpKind::kRmsNorm, 1, Precision::kBF16, 1)[0];
  PricedOp fallback = stack.Dispatch(norm.node, norm.inputs);
  EXPECT_EQ(fallback.engine, "analytical");
  EXPECT_EQ(fallback.time, RooflineTime(norm.node, norm.inputs, hw));
}

TEST(EngineStackTest, EveryKindGetsAPositiveFiniteTime) {
  HardwareSpec hw = FlatHardware();
  hw.launch_overhead_s = 1e-6;
  EngineStack stack = BuildEngineStack({"analytical"}, hw, nullptr);
  for (OpKind k : ir::AllKinds()) {
    ir::OpNode n;
    n.id = "n";
    n.kind = k;
    n.outputs = {Meta({4, 64})};
    n.attrs.Set(std::string(ir::attr::kGroupSize), int64_t{4});
    n.attrs.Set("heads", int64_t{1});
    if (k == OpKind::kFused) n.fused_kinds = {OpKind::kAdd, OpKind::kSilu};
    std::vector<TensorMeta> in = {Meta({4, 64}), Meta({4, 64}), Meta({4, 64})};
    if (k == OpKind::kAttention) in = {Meta({1, 4, 64}), Meta({1, 4, 64}), Meta({1, 4, 64})};
    if (k == OpKind::kAttention) n.outputs = {Meta({1, 4, 64})};
    PricedOp p = stack.Dispatch(n, in);
    EXPECT_TRUE(std::isfinite(p.time.count()));
    EXPECT_GT(p.time.count(), 0) << ir::KindName(k);
  }
  EXPECT_THROW(BuildEngineStack({"gpu-magic"}, hw, nullptr), ConfigError);
}

std::vector<LinkSample> RingSamples(double alpha, double bw, std::mt19937* noise) {
  std::vector<LinkSample> samples;
  std::normal_distribution<double> jitter(0, 0.02);
  for (int64_t p : {2, 4, 8, 16}) {
    for (double s : {1e5, 1e6, 1e7, 1e8}) {
      double t = 2 * (p - 1) * (alpha + s / p / bw);
      if (noise) t *= 1 + jitter(*noise);
      samples.push_back({p, s, t});
    }
  }
  return samples;
}

TEST(CalibrateTest, RecoversNoiselessParameters) {
  LinkFit fit = CalibrateLinks(RingSamples(5e-6, 1e11, nullptr));
  EXPECT_NEAR(fit.alpha_s, 5e-6, 5e-8);
  EXPECT_NEAR(fit.bandwidth, 1e11, 1e9);
  EXPECT_LT(fit.rms_residual_s, 1e-12);
}

TEST(CalibrateTest, TwoPointsExact) {
  std::vector<LinkSample> two = {{2, 1e6, 5e-6 + 1e6 / 1e11}, {2, 1e8, 5e-6 + 1e8 / 1e11}};
  LinkFit fit = CalibrateLinks(two, OpKind::kSend);
  EXPECT_NEAR(fit.alpha_s, 5e-6, 1e-15);
  EXPECT_NEAR(fit.bandwidth / 1e11, 1.0, 1e-9);
}

TEST(CalibrateTest, NoisyPointsReportResidual) {
  std::mt19937 rng(12);
  LinkFit fit = CalibrateLinks(RingSamples(5e-6, 1e11, &rng));
  EXPECT_GT(fit.rms_residual_s, 0);
  EXPECT_NEAR(fit.bandwidth / 1e11, 1.0, 0.1);
}

}  // namespace
}  // namespace charon::engines
