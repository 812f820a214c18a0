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


#ifndef CHARON_TESTS_TEST_UTIL_H_
#define CHARON_TESTS_TEST_UTIL_H_

#include <random>
#include <string>
#include <vector>

#include "charon/engines/hardware.h"
#include "charon/ir/graph.h"
#include "charon/parallel/schedule.h"

namespace charon::testing {

// 1e14 FLOP/s at every precision, 2e12 B/s memory, no launch overhead, and
// one ring tier (alpha 5 us, 1e11 B/s) spanning 1024 ranks.
inline engines::HardwareSpec FlatHardware() {
  engines::HardwareSpec hw;
  hw.device_id = "test-gpu";
  for (auto p : {ir::Precision::kFP32, ir::Precision::kBF16, ir::Precision::kFP16, ir::Precision::kFP8,
                 ir::Precision::kINT8}) {
    hw.peak_flops[p] = 1e14;
  }
  hw.memory_bandwidth = 2e12;
  hw.memory_capacity = int64_t{80} << 30;
  hw.launch_overhead_s = 0;
  hw.tdp_w = 700;
  hw.tiers.push_back({"fabric", engines::TierKind::kRing, 1024, 5e-6, 1e11, 1});
  return hw;
}

// Eight-GPU switch islands (2e11 B/s, 2 us) under a ring fabric.
inline engines::HardwareSpec TwoTierHardware() {
  engines::HardwareSpec hw = FlatHardware();
  hw.tiers = {{"nvlink", engines::TierKind::kSwitch, 8, 2e-6, 2e11, 8},
              {"ib", engines::TierKind::kRing, 1024, 5e-6, 2.5e10, 8}};
  return hw;
}

// Minimal fluent builder for hand-written test graphs.
class Sketch {
 public:
  explicit Sketch(ir::Precision precision = ir::Precision::kFP32) : precision_(precision) {}

  std::string Input(const std::string& name, std::vector<int64_t> shape,
                    ir::TensorRole role = ir::TensorRole::kActivation) {
    g_.inputs.push_back({name, ir::TensorMeta{std::move(shape), precision_, role}});
    return name;
  }

  std::string Op(const std::string& id, ir::OpKind kind, std::vector<std::string> inputs,
                 std::vector<int64_t> shape, ir::Phase phase = ir::Phase::kForward) {
    ir::OpNode n;
    n.id = id;
    n.kind = kind;
    n.inputs = std::move(inputs);
    n.outputs.push_back(ir::TensorMeta{std::move(shape), precision_, ir::TensorRole::kActivation});
    n.phase = phase;
    g_.nodes.push_back(std::move(n));
    return id + ":0";
  }

  ir::OpNode& Last() { return g_.nodes.back(); }

  ir::OperatorGraph Finish(std::vector<std::string> outputs) {
    g_.outputs = std::move(outputs);
    ir::Validate(g_);
    return g_;
  }

 private:
  ir::Precision precision_;
  ir::OperatorGraph g_;
};

// Random valid DAG of `n` [4, 8] nodes over one activation and one weight
// input. Some nodes are dead and some are identity noops.
inline ir::OperatorGraph RandomDag(std::mt19937& rng, int n) {
  Sketch s;
  std::vector<std::string> refs = {s.Input("x", {4, 8}), s.Input("w", {8, 8}, ir::TensorRole::kWeight)};
  std::vector<std::string> acts = {"x"};
  auto any = [&] { return acts[rng() % acts.size()]; };
  for (int i = 0; i < n; ++i) {
    std::string id = "n" + std::to_string(i);
    switch (rng() % 5) {
      case 0:
        acts.push_back(s.Op(id, ir::OpKind::kMatmul, {any(), "w"}, {4, 8}));
        break;
      case 1:
        acts.push_back(s.Op(id, ir::OpKind::kAdd, {any(), any()}, {4, 8}));
        break;
      case 2:
        acts.push_back(s.Op(id, ir::OpKind::kSilu, {any()}, {4, 8}));
        break;
      case 3:
        acts.push_back(s.Op(id, ir::OpKind::kMul, {any(), any()}, {4, 8}));
        break;
      default:
        acts.push_back(s.Op(id, ir::OpKind::kNoop, {any()}, {4, 8}));
        break;
    }
  }
  std::vector<std::string> outputs = {acts.back()};
  for (size_t i = 1; i + 1 < acts.size(); ++i) {
    if (rng() % 5 == 0) outputs.push_back(acts[i]);
  }
  return s.Finish(outputs);
}

// Segment of fixed length in microseconds.
inline parallel::Segment Fixed(std::string name, int stream, double us, std::vector<int> deps = {}) {
  parallel::Segment s;
  s.name = std::move(name);
  s.stream = stream;
  s.fixed = Micros(us);
  s.deps = std::move(deps);
  if (stream != parallel::kComputeStream) {
    s.type = parallel::SegmentType::kCollective;
    s.key = s.name;
  }
  return s;
}

inline parallel::Segment P2p(std::string key, bool send, int peer, double us, std::vector<int> deps = {}) {
  parallel::Segment s;
  s.name = (send ? "send:" : "recv:") + key;
  s.type = send ? parallel::SegmentType::kSend : parallel::SegmentType::kRecv;
  s.stream = send ? parallel::kSendStream : parallel::kRecvStream;
  s.key = std::move(key);
  s.peer = peer;
  s.fixed = Micros(us);
  s.deps = std::move(deps);
  return s;
}

}  // namespace charon::testing

#endif  // CHARON_TESTS_TEST_UTIL_H_
