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


#ifndef CHARON_ANALYSIS_MEMORY_H_
#define CHARON_ANALYSIS_MEMORY_H_

#include <cstdint>
#include <map>
#include <string_view>
#include <vector>

#include "charon/ir/graph.h"

namespace charon::analysis {

enum class MemComponent {
  kWeights,
  kGradients,
  kOptimizerStates,
  kActivations,
  kTemporaries,
  kCommBuffers,
  kKvCache,
};

std::string_view ComponentName(MemComponent c);
const std::vector<MemComponent>& AllComponents();

// Per-rank sharding of the persistent training state, set by the
// data-parallel mode (1 means unsharded).
struct MemoryTags {
  double weight_multiplier = 1.0;
  double gradient_multiplier = 1.0;
  double optimizer_multiplier = 1.0;
};

struct MemoryOptions {
  MemoryTags tags;
  // Optimizer state per parameter; two FP32 moments by default.
  double optimizer_bytes_per_param = 8.0;
  double fragmentation = 1.05;
  double comm_buffer_bytes = 0.0;
};

// Allocated bytes over the execution order of one graph. curve[i] holds the
// bytes live while node i runs; the final entry is the state after the last
// node, which holds persistent components only.
struct MemoryTimeline {
  std::vector<int64_t> curve;
  int64_t max_allocated = 0;
  int64_t max_reserved = 0;
  int peak_step = 0;
  int64_t persistent_bytes = 0;
  std::map<MemComponent, int64_t> persistent;
  // Forward tensors kept alive for a backward consumer.
  int64_t saved_activation_bytes = 0;
  // Live bytes per component at the peak step.
  std::map<MemComponent, int64_t> components;
};

// Liveness walk over `g` in node order. Weights, optimizer state, gradient
// buffers and KV caches are persistent; every other tensor is allocated when
// its producer starts (graph inputs at step 0) and freed after its last
// consumer. Graph outputs stay live until the end of the walk. Outputs with
// attr inplace and gradient tensors, which accumulate into the persistent
// gradient buffer, add no bytes. Throws GraphError if a node reads a tensor
// produced at or after its own position.
MemoryTimeline ComputeMemoryTimeline(const ir::OperatorGraph& g, const MemoryOptions& options = {});

struct StageMemory {
  int64_t max_allocated = 0;
  int64_t max_reserved = 0;
  std::map<MemComponent, int64_t> components;
};

// Extends a one-block timeline to a pipeline stage holding `layers` blocks
// with `inflight` microbatches whose saved activations are live at once.
StageMemory ScaleToStage(const MemoryTimeline& block, int64_t layers, int64_t inflight,
                         const MemoryOptions& options = {});

}  // namespace charon::analysis

#endif  // CHARON_ANALYSIS_MEMORY_H_
