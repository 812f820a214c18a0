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


#include "charon/engines/sweep.h"

#include <cmath>
#include <random>

#include "charon/common/status.h"

namespace charon::engines {
namespace {

using ir::OpKind;
using ir::TensorMeta;

class ShapeSampler {
 public:
  explicit ShapeSampler(uint64_t seed) : rng_(seed) {}

  // Multiple of `quantum` drawn log-uniformly from [lo, hi].
  int64_t Extent(int64_t lo, int64_t hi, int64_t quantum) {
    std::uniform_real_distribution<double> u(std::log2(static_cast<double>(lo)), std::log2(static_cast<double>(hi)));
    int64_t v = static_cast<int64_t>(std::llround(std::exp2(u(rng_)) / static_cast<double>(quantum))) * quantum;
    return std::max(quantum, v);
  }

  int64_t Choice(std::initializer_list<int64_t> options) {
    std::uniform_int_distribution<size_t> pick(0, options.size() - 1);
    return options.begin()[pick(rng_)];
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

std::vector<SweepEntry> RandomSweep(OpKind kind, int count, ir::Precision precision, uint64_t seed) {
  ShapeSampler s(seed);
  auto meta = [&](std::vector<int64_t> shape) {
    return TensorMeta{std::move(shape), precision, ir::TensorRole::kActivation};
  };
  std::vector<SweepEntry> sweep;
  for (int i = 0; i < count; ++i) {
    SweepEntry e;
    e.node.id = "sweep" + std::to_string(i);
    e.node.kind = kind;
    switch (kind) {
      case OpKind::kMatmul: {
        int64_t m = s.Extent(64, 16384, 64), k = s.Extent(64, 16384, 64), n = s.Extent(64, 16384, 64);
        e.inputs = {meta({m, k}), meta({k, n})};
        e.node.outputs = {meta({m, n})};
        break;
      }
      case OpKind::kBatchedMatmul: {
        int64_t b = s.Extent(1, 64, 1), m = s.Extent(64, 4096, 64), k = s.Extent(64, 4096, 64),
                n = s.Extent(64, 4096, 64);
        e.inputs = {meta({b, m, k}), meta({b, k, n})};
        e.node.outputs = {meta({b, m, n})};
        break;
      }
      case OpKind::kAttention: {
        int64_t batch = s.Extent(1, 16, 1), seq = s.Extent(128, 16384, 128), head_dim = s.Choice({64, 128});
        int64_t heads = s.Choice({8, 16, 32, 64}), kv_heads = heads / s.Choice({1, 2, 4, 8});
        e.inputs = {meta({batch, seq, heads * head_dim}), meta({batch, seq, kv_heads * head_dim}),
                    meta({batch, seq, kv_heads * head_dim})};
        e.node.outputs = {meta({batch, seq, heads * head_dim})};
        e.node.attrs.Set("heads", heads);
        e.node.attrs.Set("kv_heads", kv_heads);
        e.node.attrs.Set("head_dim", head_dim);
        e.node.attrs.Set(std::string(ir::attr::kCausal), int64_t{1});
        break;
      }
      case OpKind::kRmsNorm:
      case OpKind::kLayerNorm: {
        int64_t t = s.Extent(64, 65536, 64), h = s.Extent(256, 16384, 256);
        e.inputs = {meta({t, h}), meta({h})};
        e.node.outputs = {meta({t, h})};
        break;
      }
      case OpKind::kSoftmax:
      case OpKind::kSilu:
      case OpKind::kGelu: {
        int64_t t = s.Extent(64, 65536, 64), h = s.Extent(256, 16384, 256);
        e.inputs = {meta({t, h})};
        e.node.outputs = {meta({t, h})};
        break;
      }
      case OpKind::kAdd:
      case OpKind::kMul: {
        int64_t t = s.Extent(64, 65536, 64), h = s.Extent(256, 16384, 256);
        e.inputs = {meta({t, h}), meta({t, h})};
        e.node.outputs = {meta({t, h})};
        break;
      }
      default:
        throw ConfigError("no random sweep for op kind " + std::string(ir::KindName(kind)));
    }
    sweep.push_back(std::move(e));
  }
  return sweep;
}

}  // namespace charon::engines
