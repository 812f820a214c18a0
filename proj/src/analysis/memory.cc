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


#include "charon/analysis/memory.h"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "charon/common/status.h"

namespace charon::analysis {
namespace {

using ir::OpNode;
using ir::TensorRole;

struct Interval {
  int alloc = 0;
  int free = 0;  // last step at which the tensor is live
  int64_t bytes = 0;
  MemComponent component = MemComponent::kTemporaries;
};

int64_t Scaled(int64_t bytes, double multiplier) {
  return static_cast<int64_t>(std::llround(static_cast<double>(bytes) * multiplier));
}

MemComponent Classify(const OpNode& producer, const ir::TensorMeta& meta) {
  if (ir::IsCommunication(producer.kind)) return MemComponent::kCommBuffers;
  switch (meta.role) {
    case TensorRole::kGradient:
      return MemComponent::kGradients;
    case TensorRole::kKvCache:
      return MemComponent::kKvCache;
    case TensorRole::kWeight:
      return MemComponent::kWeights;
    case TensorRole::kOptimizerState:
      return MemComponent::kOptimizerStates;
    default:
      break;
  }
  return producer.phase == ir::Phase::kForward ? MemComponent::kActivations : MemComponent::kTemporaries;
}

}  // namespace

std::string_view ComponentName(MemComponent c) {
  switch (c) {
    case MemComponent::kWeights:
      return "weights";
    case MemComponent::kGradients:
      return "gradients";
    case MemComponent::kOptimizerStates:
      return "optimizer_states";
    case MemComponent::kActivations:
      return "activations";
    case MemComponent::kTemporaries:
      return "temporaries";
    case MemComponent::kCommBuffers:
      return "comm_buffers";
    case MemComponent::kKvCache:
      return "kv_cache";
  }
  return "unknown";
}

const std::vector<MemComponent>& AllComponents() {
  static const std::vector<MemComponent> kAll = {
      MemComponent::kWeights,     MemComponent::kGradients,    MemComponent::kOptimizerStates,
      MemComponent::kActivations, MemComponent::kTemporaries, MemComponent::kCommBuffers,
      MemComponent::kKvCache};
  return kAll;
}

MemoryTimeline ComputeMemoryTimeline(const ir::OperatorGraph& g, const MemoryOptions& options) {
  const int n = static_cast<int>(g.nodes.size());
  const int last = std::max(n - 1, 0);
  ir::TensorTable table(g);
  const bool training = g.IsJoint();

  std::map<MemComponent, int64_t> persistent;
  for (MemComponent c : AllComponents()) persistent[c] = 0;
  std::vector<Interval> transients;

  auto last_use = [&](const std::string& ref, int fallback) {
    if (table.IsGraphOutput(ref)) return last;
    const auto& consumers = table.Consumers(ref);
    return consumers.empty() ? fallback : consumers.back();
  };

  for (const auto& in : g.inputs) {
    const int64_t bytes = in.meta.ByteSize();
    switch (in.meta.role) {
      case TensorRole::kWeight:
        persistent[MemComponent::kWeights] += Scaled(bytes, options.tags.weight_multiplier);
        if (training) {
          persistent[MemComponent::kGradients] += Scaled(bytes, options.tags.gradient_multiplier);
          persistent[MemComponent::kOptimizerStates] +=
              Scaled(static_cast<int64_t>(std::llround(static_cast<double>(in.meta.NumElements()) *
                                                       options.optimizer_bytes_per_param)),
                     options.tags.optimizer_multiplier);
        }
        break;
      case TensorRole::kKvCache:
        persistent[MemComponent::kKvCache] += bytes;
        break;
      case TensorRole::kOptimizerState:
        persistent[MemComponent::kOptimizerStates] += Scaled(bytes, options.tags.optimizer_multiplier);
        break;
      case TensorRole::kGradient:
        persistent[MemComponent::kGradients] += Scaled(bytes, options.tags.gradient_multiplier);
        break;
      default:
        if (n > 0) {
          transients.push_back({0, last_use(in.name, 0), bytes, MemComponent::kActivations});
        }
        break;
    }
  }

  int64_t saved = 0;
  auto is_saved = [&](const std::string& ref) {
    for (int c : table.Consumers(ref)) {
      if (g.nodes[c].phase != ir::Phase::kForward) return true;
    }
    return false;
  };
  auto has_forward_consumer = [&](const std::string& ref) {
    for (int c : table.Consumers(ref)) {
      if (g.nodes[c].phase == ir::Phase::kForward) return true;
    }
    return false;
  };
  for (const auto& in : g.inputs) {
    if (in.meta.role == TensorRole::kActivation && has_forward_consumer(in.name) && is_saved(in.name)) {
      saved += in.meta.ByteSize();
    }
  }

  for (int i = 0; i < n; ++i) {
    const OpNode& node = g.nodes[i];
    for (const auto& ref : node.inputs) {
      int p = table.Producer(ref);
      if (p >= i) {
        throw GraphError("node '" + node.id + "' at position " + std::to_string(i) + " reads '" + ref +
                         "' before its producer runs");
      }
    }
    const bool inplace = node.attrs.GetInt(ir::attr::kInplace) != 0;
    for (size_t k = 0; k < node.outputs.size(); ++k) {
      const auto& meta = node.outputs[k];
      MemComponent c = Classify(node, meta);
      if (inplace || c == MemComponent::kGradients) continue;
      std::string ref = node.OutputName(k);
      transients.push_back({i, last_use(ref, i), meta.ByteSize(), c});
      if (node.phase == ir::Phase::kForward && is_saved(ref)) saved += meta.ByteSize();
    }
  }

  MemoryTimeline t;
  t.saved_activation_bytes = saved;
  for (const auto& [c, b] : persistent) t.persistent_bytes += b;
  std::vector<int64_t> delta(n + 2, 0);
  for (const auto& iv : transients) {
    delta[iv.alloc] += iv.bytes;
    delta[iv.free + 1] -= iv.bytes;
  }
  t.curve.resize(n + 1);
  int64_t live = 0;
  for (int i = 0; i <= n; ++i) {
    live += delta[i];
    t.curve[i] = t.persistent_bytes + (i < n ? live : 0);
  }
  t.peak_step = static_cast<int>(std::max_element(t.curve.begin(), t.curve.end()) - t.curve.begin());
  t.max_allocated = t.curve[t.peak_step];
  t.max_reserved = Scaled(t.max_allocated, options.fragmentation) + Scaled(1, options.comm_buffer_bytes);
  t.persistent = persistent;
  t.components = persistent;
  for (const auto& iv : transients) {
    if (iv.alloc <= t.peak_step && t.peak_step <= iv.free && t.peak_step < n) t.components[iv.component] += iv.bytes;
  }
  return t;
}

StageMemory ScaleToStage(const MemoryTimeline& block, int64_t layers, int64_t inflight, const MemoryOptions& options) {
  if (layers < 1 || inflight < 1) throw ConfigError("stage needs at least one layer and one in-flight microbatch");
  StageMemory s;
  s.components = block.components;
  int64_t extra_persistent = 0;
  for (const auto& [c, bytes] : block.persistent) {
    s.components[c] += bytes * (layers - 1);
    extra_persistent += bytes * (layers - 1);
  }
  const int64_t extra_saved = (layers * inflight - 1) * block.saved_activation_bytes;
  s.components[MemComponent::kActivations] += extra_saved;
  s.max_allocated = block.max_allocated + extra_persistent + extra_saved;
  s.max_reserved = Scaled(s.max_allocated, options.fragmentation) + Scaled(1, options.comm_buffer_bytes);
  return s;
}

}  // namespace charon::analysis
