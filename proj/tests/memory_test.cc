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
#include <random>

#include "charon/analysis/memory.h"
#include "charon/common/status.h"
#include "charon/ir/backward.h"
#include "charon/ir/builders.h"
#include "charon/passes/transforms.h"
#include "gtest/gtest.h"
#include "oracles.h"
#include "test_util.h"

namespace charon::analysis {
namespace {

using ir::OperatorGraph;
using ir::OpKind;
using ir::TensorRole;
using testing::Sketch;

constexpr int64_t kFourMiB = 4 << 20;

TEST(MemoryTest, ChainPeakIsTwoTensors) {
  Sketch s;
  auto t0 = s.Input("t0", {1024, 1024});
  auto t1 = s.Op("op1", OpKind::kSilu, {t0}, {1024, 1024});
  auto t2 = s.Op("op2", OpKind::kSilu, {t1}, {1024, 1024});
  MemoryTimeline t = ComputeMemoryTimeline(s.Finish({t2}));
  EXPECT_EQ(t.max_allocated, 2 * kFourMiB);
  EXPECT_EQ(t.curve, (std::vector<int64_t>{2 * kFourMiB, 2 * kFourMiB, 0}));
}

TEST(MemoryTest, PersistentWeightsGiveFlatCurve) {
  Sketch s;
  auto w = s.Input("w", {1024, 1024}, TensorRole::kWeight);
  auto v = s.Op("view", OpKind::kNoop, {w}, {1024, 1024});
  s.Last().attrs.Set("inplace", int64_t{1});
  MemoryTimeline t = ComputeMemoryTimeline(s.Finish({v}));
  EXPECT_EQ(t.curve, (std::vector<int64_t>{kFourMiB, kFourMiB}));
  EXPECT_EQ(t.components.at(MemComponent::kWeights), kFourMiB);
}

TEST(MemoryTest, ShardedWeightsWithTransientGather) {
  // zero3 at dp=4: each rank holds a quarter and gathers the block's weight
  // for the duration of its use.
  Sketch s;
  auto x = s.Input("x", {4, 1024});
  auto shard = s.Input("w", {1024, 1024}, TensorRole::kWeight);
  auto full = s.Op("gather", OpKind::kAllGather, {shard}, {1024, 1024});
  s.Last().attrs.Set("group", std::string("dp"));
  s.Last().attrs.Set("group_size", int64_t{4});
  auto y = s.Op("mm", OpKind::kMatmul, {x, full}, {4, 1024});
  auto z = s.Op("act", OpKind::kSilu, {y}, {4, 1024});
  MemoryOptions o;
  o.tags.weight_multiplier = 0.25;
  OperatorGraph g = s.Finish({z});
  MemoryTimeline t = ComputeMemoryTimeline(g, o);
  const int64_t act = 4 * 1024 * 4;
  EXPECT_EQ(t.persistent_bytes, kFourMiB / 4);
  EXPECT_EQ(t.max_allocated, kFourMiB / 4 + kFourMiB + 2 * act);
  EXPECT_EQ(t.curve.back(), kFourMiB / 4);
  EXPECT_EQ(t.components.at(MemComponent::kCommBuffers), kFourMiB);
  EXPECT_EQ(t.curve, testing::OracleCurve(g, o));
}

TEST(MemoryTest, TrainingChargesGradientsAndOptimizer) {
  Sketch s;
  auto x = s.Input("x", {4, 8});
  auto w = s.Input("w", {8, 8}, TensorRole::kWeight);
  OperatorGraph g = ir::DeriveBackward(s.Finish({s.Op("mm", OpKind::kMatmul, {x, w}, {4, 8})}));
  MemoryTimeline t = ComputeMemoryTimeline(g);
  EXPECT_EQ(t.persistent.at(MemComponent::kWeights), 256);
  EXPECT_EQ(t.persistent.at(MemComponent::kGradients), 256);
  EXPECT_EQ(t.persistent.at(MemComponent::kOptimizerStates), 64 * 8);
  EXPECT_EQ(t.curve.back(), 256 + 256 + 512);
  EXPECT_EQ(t.saved_activation_bytes, 4 * 8 * 4);
}

TEST(MemoryTest, ReservedAddsFragmentationAndCommBuffer) {
  Sketch s;
  auto out = s.Op("a", OpKind::kSilu, {s.Input("x", {1024, 1024})}, {1024, 1024});
  MemoryOptions o;
  o.comm_buffer_bytes = 1000;
  MemoryTimeline t = ComputeMemoryTimeline(s.Finish({out}), o);
  EXPECT_EQ(t.max_reserved, std::llround(2 * kFourMiB * 1.05) + 1000);
  EXPECT_GE(t.max_reserved, t.max_allocated);
}

TEST(MemoryTest, ReadBeforeProducerIsGraphError) {
  Sketch s;
  auto x = s.Input("x", {4, 8});
  auto a = s.Op("a", OpKind::kSilu, {x}, {4, 8});
  auto b = s.Op("b", OpKind::kSilu, {a}, {4, 8});
  OperatorGraph g = s.Finish({b});
  std::swap(g.nodes[0], g.nodes[1]);
  EXPECT_THROW(ComputeMemoryTimeline(g), GraphError);
}

TEST(MemoryTest, StageScaling) {
  Sketch s;
  auto x = s.Input("x", {4, 8});
  auto w = s.Input("w", {8, 8}, TensorRole::kWeight);
  OperatorGraph g = ir::DeriveBackward(s.Finish({s.Op("mm", OpKind::kMatmul, {x, w}, {4, 8})}));
  MemoryTimeline block = ComputeMemoryTimeline(g);
  StageMemory stage = ScaleToStage(block, 4, 2);
  EXPECT_EQ(stage.max_allocated,
            block.max_allocated + 3 * block.persistent_bytes + 7 * block.saved_activation_bytes);
  EXPECT_EQ(stage.components.at(MemComponent::kWeights), 4 * 256);
  EXPECT_THROW(ScaleToStage(block, 0, 1), ConfigError);
}

// Property: the liveness walk equals the brute-force interpreter on every
// small graph, and the walk ends holding persistent state only.
TEST(MemoryTest, MatchesOracleOnRandomGraphs) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    OperatorGraph g = testing::RandomDag(rng, 1 + trial % 14);
    if (trial % 3 != 0) g = ir::DeriveBackward(g);
    if (trial % 3 == 2 && g.IsJoint() && g.nodes.size() <= 30) {
      passes::RecomputePolicy p;
      p.full = true;
      g = passes::Recompute(g, p).rewrite.graph;
    }
    if (g.nodes.size() > 30) continue;
    MemoryOptions o;
    o.tags.weight_multiplier = 1.0 / (1 + trial % 4);
    MemoryTimeline t = ComputeMemoryTimeline(g, o);
    std::vector<int64_t> oracle = testing::OracleCurve(g, o);
    ASSERT_EQ(t.curve, oracle) << "trial " << trial;
    EXPECT_EQ(t.max_allocated, *std::max_element(oracle.begin(), oracle.end()));
    EXPECT_EQ(t.curve.back(), t.persistent_bytes);
    int64_t at_peak = 0;
    for (const auto& [c, b] : t.components) at_peak += b;
    EXPECT_EQ(at_peak, t.max_allocated);
  }
}

TEST(MemoryTest, FullRecomputeMatchesOracleOnDenseBlock) {
  ir::ModelConfig cfg;
  cfg.hidden_size = 8;
  cfg.num_heads = 2;
  cfg.num_kv_heads = 2;
  cfg.head_dim = 4;
  cfg.ffn_hidden = 16;
  cfg.vocab_size = 32;
  cfg.seq_len = 4;
  OperatorGraph g = ir::DeriveBackward(ir::BuildDenseBlock(cfg));
  passes::RecomputePolicy p;
  p.full = true;
  OperatorGraph r = passes::Recompute(g, p).rewrite.graph;
  MemoryTimeline t = ComputeMemoryTimeline(r);
  EXPECT_EQ(t.curve, testing::OracleCurve(r, {}));
  // Backward holds no forward intermediates, so its working set never
  // exceeds one forward pass of the block plus its own gradients.
  EXPECT_LT(t.saved_activation_bytes, ComputeMemoryTimeline(g).saved_activation_bytes);
}

}  // namespace
}  // namespace charon::analysis
