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
#include <set>

#include "charon/common/status.h"
#include "charon/ir/backward.h"
#include "charon/ir/builders.h"
#include "charon/ir/cost.h"
#include "charon/ir/graph.h"
#include "charon/ir/ir_io.h"
#include "gtest/gtest.h"

namespace charon::ir {
namespace {

ModelConfig TinyConfig() {
  ModelConfig cfg;
  cfg.hidden_size = 8;
  cfg.num_heads = 2;
  cfg.num_kv_heads = 2;
  cfg.head_dim = 4;
  cfg.ffn_hidden = 16;
  cfg.num_layers = 2;
  cfg.vocab_size = 32;
  cfg.batch = 1;
  cfg.seq_len = 4;
  return cfg;
}

ModelConfig RandomConfig(std::mt19937& rng, bool moe) {
  auto pick = [&](std::vector<int64_t> v) { return v[rng() % v.size()]; };
  ModelConfig cfg;
  cfg.num_heads = pick({1, 2, 4});
  cfg.num_kv_heads = cfg.num_heads / pick({1, cfg.num_heads});
  cfg.head_dim = pick({2, 4, 8});
  cfg.hidden_size = cfg.num_heads * cfg.head_dim;
  cfg.ffn_hidden = pick({4, 8, 16, 24});
  cfg.num_layers = pick({1, 3, 8});
  cfg.vocab_size = 64;
  cfg.batch = pick({1, 2});
  cfg.seq_len = moe ? pick({4, 8}) : pick({2, 4, 8});
  cfg.precision = rng() % 2 ? Precision::kBF16 : Precision::kFP32;
  if (moe) {
    MoeConfig m;
    m.num_experts = pick({2, 4});
    m.top_k = pick({1, 2});
    m.expert_ffn_hidden = pick({4, 8});
    cfg.moe = m;
  }
  return cfg;
}

const OpNode& NodeById(const OperatorGraph& g, const std::string& id) {
  int i = g.FindNode(id);
  EXPECT_GE(i, 0) << id;
  return g.nodes.at(static_cast<size_t>(i));
}

int64_t PhaseFlops(const OperatorGraph& g, Phase phase, OpKind kind) {
  TensorTable table(g);
  int64_t total = 0;
  for (const auto& n : g.nodes) {
    if (n.phase == phase && n.kind == kind) total += OpFlops(n, table.InputMetas(n));
  }
  return total;
}

OperatorGraph SingleMatmul(int64_t b, int64_t s, int64_t h, int64_t f) {
  OperatorGraph g;
  g.inputs = {{"x", {{b, s, h}, Precision::kBF16, TensorRole::kActivation}},
              {"w", {{h, f}, Precision::kBF16, TensorRole::kWeight}}};
  OpNode mm;
  mm.id = "mm";
  mm.kind = OpKind::kMatmul;
  mm.inputs = {"x", "w"};
  mm.outputs = {{{b, s, f}, Precision::kBF16, TensorRole::kActivation}};
  g.nodes.push_back(mm);
  g.outputs = {"mm:0"};
  return g;
}

TEST(TensorMetaTest, ByteSizeFollowsPrecisionTable) {
  EXPECT_EQ(ElementSize(Precision::kFP32), 4);
  EXPECT_EQ(ElementSize(Precision::kBF16), 2);
  EXPECT_EQ(ElementSize(Precision::kFP16), 2);
  EXPECT_EQ(ElementSize(Precision::kFP8), 1);
  EXPECT_EQ(ElementSize(Precision::kINT8), 1);
  TensorMeta m{{3, 5, 7}, Precision::kFP32, TensorRole::kActivation};
  EXPECT_EQ(m.ByteSize(), 3 * 5 * 7 * 4);
}

TEST(BuildDenseBlockTest, QueryProjectionShape) {
  OperatorGraph g = BuildDenseBlock(TinyConfig());
  const OpNode& q = NodeById(g, "q_proj");
  EXPECT_EQ(q.outputs[0].shape, (std::vector<int64_t>{1, 4, 8}));
}

TEST(BuildDenseBlockTest, BlockMultiplierIsLayerCount) {
  ModelConfig cfg = TinyConfig();
  cfg.num_layers = 32;
  EXPECT_EQ(BuildDenseBlock(cfg).block_multiplier, 32);
}

TEST(BuildDenseBlockTest, LlamaProjectionParameterCount) {
  ModelConfig cfg;
  cfg.hidden_size = 4096;
  cfg.num_heads = 32;
  cfg.num_kv_heads = 32;
  cfg.head_dim = 128;
  cfg.ffn_hidden = 14336;
  cfg.num_layers = 32;
  cfg.vocab_size = 128256;
  cfg.seq_len = 16;
  const int64_t expected = 4 * 4096LL * 4096 + 3 * 4096LL * 14336;
  EXPECT_EQ(expected, 243269632);
  EXPECT_EQ(ProjectionParamCount(BuildDenseBlock(cfg)), expected);
}

TEST(BuildDenseBlockTest, RejectsNonSquareHeads) {
  ModelConfig cfg = TinyConfig();
  cfg.head_dim = 3;
  EXPECT_THROW(BuildDenseBlock(cfg), ConfigError);
  cfg.square_projections = false;
  EXPECT_NO_THROW(BuildDenseBlock(cfg));
}

TEST(BuildMoeBlockTest, UniformTokensPerExpert) {
  ModelConfig cfg = TinyConfig();
  cfg.seq_len = 8;
  cfg.moe = MoeConfig{4, 2, 16, {}};
  OperatorGraph g = BuildMoeBlock(cfg);
  for (int e = 0; e < 4; ++e) {
    const OpNode& gate = NodeById(g, "expert" + std::to_string(e) + ".gate_proj");
    EXPECT_EQ(gate.attrs.GetInt("tokens"), 8 * 2 / 4);
  }
}

TEST(BuildMoeBlockTest, SingleExpertMatchesDenseFlops) {
  ModelConfig moe = TinyConfig();
  moe.moe = MoeConfig{1, 1, 24, {}};
  ModelConfig dense = TinyConfig();
  dense.ffn_hidden = 24;
  EXPECT_EQ(GraphFlops(BuildMoeBlock(moe)), GraphFlops(BuildDenseBlock(dense)));
}

TEST(BuildMoeBlockTest, ExpertInputExtent) {
  ModelConfig cfg = TinyConfig();
  cfg.seq_len = 1024;
  cfg.moe = MoeConfig{8, 2, 16, {}};
  OperatorGraph g = BuildMoeBlock(cfg);
  TensorTable table(g);
  const OpNode& up = NodeById(g, "expert3.up_proj");
  EXPECT_EQ(table.Meta(up.inputs[0]).shape[0], 1024 * 2 / 8);
}

TEST(BuildMoeBlockTest, RejectsTopKAboveExperts) {
  ModelConfig cfg = TinyConfig();
  cfg.moe = MoeConfig{2, 3, 16, {}};
  EXPECT_THROW(BuildMoeBlock(cfg), ConfigError);
}

TEST(BuildDecodeBlockTest, CarriesKvCache) {
  OperatorGraph g = BuildDecodeBlock(TinyConfig(), 16);
  int caches = 0;
  for (const auto& in : g.inputs) caches += in.meta.role == TensorRole::kKvCache;
  EXPECT_EQ(caches, 2);
  EXPECT_EQ(NodeById(g, "q_proj").outputs[0].shape[1], 1);
}

TEST(ModelFlopsTest, BlockScaling) {
  ModelConfig cfg = TinyConfig();
  cfg.num_layers = 5;
  const double block = static_cast<double>(GraphFlops(BuildBlock(cfg)));
  EXPECT_EQ(ModelForwardFlops(cfg, false), 5 * block);
  EXPECT_EQ(ModelForwardFlops(cfg, true),
            5 * block + GraphFlops(BuildEmbedding(cfg)) + GraphFlops(BuildLmHead(cfg)));
}

TEST(OpCostTest, LargeMatmul) {
  OperatorGraph g = SingleMatmul(1, 4096, 4096, 4096);
  TensorTable table(g);
  const OpNode& mm = g.nodes[0];
  EXPECT_EQ(OpFlops(mm, table.InputMetas(mm)), 2LL * 4096 * 4096 * 4096);
  EXPECT_EQ(OpFlops(mm, table.InputMetas(mm)), 137438953472LL);
  EXPECT_EQ(OpBytes(mm, table.InputMetas(mm)), 100663296);
}

TEST(OpCostTest, ElementwiseAddAndNoop) {
  TensorMeta t{{1000000}, Precision::kFP32, TensorRole::kActivation};
  OpNode add;
  add.kind = OpKind::kAdd;
  add.outputs = {t};
  std::vector<TensorMeta> in = {t, t};
  EXPECT_EQ(OpFlops(add, in), 1000000);
  EXPECT_EQ(OpBytes(add, in), 12000000);
  OpNode noop;
  noop.kind = OpKind::kNoop;
  noop.outputs = {t};
  EXPECT_EQ(OpFlops(noop, std::vector<TensorMeta>{t}), 0);
}

TEST(OpCostTest, CausalAttentionHalvesScores) {
  ModelConfig cfg = TinyConfig();
  cfg.seq_len = 64;
  OperatorGraph g = BuildDenseBlock(cfg);
  TensorTable table(g);
  OpNode attn = NodeById(g, "attention");
  const int64_t causal = OpFlops(attn, table.InputMetas(attn));
  attn.attrs.Set(std::string(attr::kCountFull), int64_t{1});
  const int64_t full = OpFlops(attn, table.InputMetas(attn));
  EXPECT_EQ(full, 2 * 2 * 1 * 2 * 64 * 64 * 4);
  EXPECT_EQ(2 * causal, full);
}

TEST(OpCostTest, CommunicationHasNoFlops) {
  TensorMeta t{{16, 16}, Precision::kBF16, TensorRole::kActivation};
  OpNode ar;
  ar.kind = OpKind::kAllReduce;
  ar.outputs = {t};
  std::vector<TensorMeta> in = {t};
  EXPECT_EQ(OpFlops(ar, in), 0);
  EXPECT_EQ(OpBytes(ar, in), t.ByteSize());
}

TEST(DeriveBackwardTest, MatmulHasTwoGradientMatmuls) {
  OperatorGraph joint = DeriveBackward(SingleMatmul(2, 4, 8, 16));
  int matmuls = 0;
  for (const auto& n : joint.nodes) matmuls += n.phase == Phase::kBackward && n.kind == OpKind::kMatmul;
  EXPECT_EQ(matmuls, 2);
  EXPECT_EQ(PhaseFlops(joint, Phase::kBackward, OpKind::kMatmul),
            2 * PhaseFlops(joint, Phase::kForward, OpKind::kMatmul));
}

TEST(DeriveBackwardTest, AddIsPassThrough) {
  OperatorGraph g;
  TensorMeta t{{4, 4}, Precision::kFP32, TensorRole::kActivation};
  g.inputs = {{"a", t}, {"b", t}};
  OpNode add;
  add.id = "add";
  add.kind = OpKind::kAdd;
  add.inputs = {"a", "b"};
  add.outputs = {t};
  g.nodes = {add};
  g.outputs = {"add:0"};
  OperatorGraph joint = DeriveBackward(g);
  EXPECT_EQ(GraphFlops(joint), GraphFlops(g));
  EXPECT_EQ(joint.nodes.size(), 1u);
  // Both input gradients are the seed itself.
  EXPECT_EQ(joint.outputs, (std::vector<std::string>{"add:0", SeedName("add:0")}));
}

TEST(DeriveBackwardTest, DenseBlockMatmulFlopsDouble) {
  OperatorGraph joint = DeriveBackward(BuildDenseBlock(TinyConfig()));
  EXPECT_EQ(PhaseFlops(joint, Phase::kBackward, OpKind::kMatmul),
            2 * PhaseFlops(joint, Phase::kForward, OpKind::kMatmul));
}

TEST(DeriveBackwardTest, RejectsJointGraph) {
  OperatorGraph joint = DeriveBackward(BuildDenseBlock(TinyConfig()));
  EXPECT_THROW(DeriveBackward(joint), ConfigError);
}

TEST(DeriveBackwardTest, UnsupportedOpNamesNode) {
  OperatorGraph g = SingleMatmul(1, 2, 2, 2);
  OpNode send;
  send.id = "ship_it";
  send.kind = OpKind::kSend;
  send.inputs = {"mm:0"};
  send.outputs = {g.nodes[0].outputs[0]};
  send.attrs.Set(std::string(attr::kGroup), std::string("pp"));
  g.nodes.push_back(send);
  g.outputs = {"ship_it:0"};
  try {
    DeriveBackward(g);
    FAIL() << "expected UnsupportedOpError";
  } catch (const UnsupportedOpError& e) {
    EXPECT_NE(std::string(e.what()).find("ship_it"), std::string::npos);
  }
}

// Every weight gains exactly one gradient output of identical shape.
TEST(DeriveBackwardTest, WeightGradientBijection) {
  std::mt19937 rng(7);
  for (int iter = 0; iter < 40; ++iter) {
    ModelConfig cfg = RandomConfig(rng, iter % 2 == 1);
    OperatorGraph fwd = BuildBlock(cfg);
    OperatorGraph joint = DeriveBackward(fwd);
    ASSERT_NO_THROW(Validate(joint));
    TensorTable table(joint);
    std::multiset<std::vector<int64_t>> weight_shapes;
    for (const auto& in : fwd.inputs) {
      if (in.meta.role == TensorRole::kWeight) weight_shapes.insert(in.meta.shape);
    }
    std::multiset<std::vector<int64_t>> grad_shapes;
    for (const auto& out : joint.outputs) {
      if (table.Meta(out).role == TensorRole::kGradient) grad_shapes.insert(table.Meta(out).shape);
    }
    EXPECT_EQ(weight_shapes, grad_shapes);
  }
}

TEST(IrRoundTripTest, TinyDenseBlock) {
  OperatorGraph g = BuildDenseBlock(TinyConfig());
  std::string text = EmitIr(g);
  EXPECT_EQ(ParseIr(text), g);
  EXPECT_EQ(EmitIr(ParseIr(text)), text);
}

TEST(IrRoundTripTest, RandomGeneratorOutputs) {
  std::mt19937 rng(11);
  for (int iter = 0; iter < 60; ++iter) {
    ModelConfig cfg = RandomConfig(rng, iter % 3 == 0);
    std::vector<OperatorGraph> graphs = {BuildBlock(cfg), BuildDecodeBlock(cfg, 8)};
    graphs.push_back(DeriveBackward(graphs[0]));
    for (const auto& g : graphs) {
      std::string text = EmitIr(g);
      ASSERT_EQ(ParseIr(text), g);
      ASSERT_EQ(EmitIr(ParseIr(text)), text);
    }
  }
}

TEST(IrRoundTripTest, AcceptsShuffledNodeOrder) {
  OperatorGraph g = BuildDenseBlock(TinyConfig());
  OperatorGraph shuffled = g;
  std::reverse(shuffled.nodes.begin(), shuffled.nodes.end());
  OperatorGraph parsed = ParseIr(EmitIr(shuffled));
  auto by_id = [](const OpNode& a, const OpNode& b) { return a.id < b.id; };
  std::sort(parsed.nodes.begin(), parsed.nodes.end(), by_id);
  std::sort(g.nodes.begin(), g.nodes.end(), by_id);
  EXPECT_EQ(parsed, g);
}

TEST(IrParseTest, DanglingRefNamed) {
  OperatorGraph g = SingleMatmul(1, 2, 2, 2);
  g.nodes[0].inputs[1] = "missing_weight";
  try {
    ParseIr(EmitIr(g));
    FAIL() << "expected GraphError";
  } catch (const GraphError& e) {
    EXPECT_NE(std::string(e.what()).find("missing_weight"), std::string::npos);
  }
}

TEST(IrParseTest, CycleRejected) {
  OperatorGraph g = SingleMatmul(1, 2, 2, 2);
  OpNode loop = g.nodes[0];
  loop.id = "loop";
  loop.inputs = {"mm:0", "w"};
  g.nodes[0].inputs[0] = "loop:0";
  g.nodes.push_back(loop);
  EXPECT_THROW(ParseIr(EmitIr(g)), GraphError);
}

TEST(IrParseTest, SchemaViolationNamesNodeAndField) {
  std::string text = EmitIr(SingleMatmul(1, 2, 2, 2));
  size_t pos = text.find("\"bf16\"", text.find("\"nodes\""));
  text.replace(pos, 6, "\"bf17\"");
  try {
    ParseIr(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    std::string what = e.what();
    EXPECT_NE(what.find("'mm'"), std::string::npos) << what;
    EXPECT_NE(what.find("dtype"), std::string::npos) << what;
  }
}

TEST(IrParseTest, WrongVersionRejected) {
  std::string text = EmitIr(SingleMatmul(1, 2, 2, 2));
  text.replace(text.find("charon-ir/1"), 11, "charon-ir/9");
  EXPECT_THROW(ParseIr(text), ParseError);
}

}  // namespace
}  // namespace charon::ir
