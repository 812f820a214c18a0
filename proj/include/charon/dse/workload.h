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


#ifndef CHARON_DSE_WORKLOAD_H_
#define CHARON_DSE_WORKLOAD_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "charon/analysis/memory.h"
#include "charon/analysis/report.h"
#include "charon/engines/engine.h"
#include "charon/engines/hardware.h"
#include "charon/ir/builders.h"
#include "charon/ir/graph.h"
#include "charon/parallel/config.h"
#include "charon/parallel/schedule.h"
#include "charon/passes/pipeline.h"
#include "charon/sched/simulator.h"

namespace charon::dse {

enum class Mode { kTrain, kPrefill, kDecode, kServe };

std::string_view ModeName(Mode m);
std::optional<Mode> ParseMode(std::string_view name);

// Everything needed to simulate one configuration end to end. The model
// batch is the per-microbatch batch of one data-parallel replica, so the
// global batch is batch * microbatches * dp.
struct Workload {
  std::string name = "workload";
  Mode mode = Mode::kTrain;
  ir::ModelConfig model;
  // Forward graph of one block used instead of the generated one. The
  // model still supplies the layer count.
  std::optional<ir::OperatorGraph> block;
  // KV-cache length of a decode step; 0 means model.seq_len.
  int64_t context_len = 0;
  // Decode batch per microbatch; 0 means model.batch.
  int64_t decode_batch = 0;
  // Prefill chunk length; 0 prefills the whole sequence at once.
  int64_t prefill_chunk = 0;
  engines::HardwareSpec hw;
  parallel::ParallelismConfig parallel;
  passes::PassPipeline passes;
  analysis::MemoryOptions memory;
  sched::SimOptions sim;
};

struct RunResult {
  analysis::Report report;
  // Serve mode appends the decode step after the prefill.
  sched::Timeline timeline;
};

// Builds the block, applies TP, EP (for rank 0 of the EP group) and, when
// training, backward derivation and DP synchronization, runs the pass
// pipeline, schedules the pipeline stages and simulates them. Throws
// ConfigError for invalid inputs and SimulationError from the simulator.
RunResult RunWorkload(const Workload& w, const engines::EngineStack& stack);

// Simulates a hand-written program; model FLOPs and memory are not known.
RunResult RunProgram(const std::string& name, const parallel::ScheduleProgram& program,
                     const engines::EngineStack& stack, const engines::HardwareSpec& hw,
                     const sched::SimOptions& options);

// Persistent bytes (weights, gradients, optimizer state, KV cache) of the
// fullest stage, from the sharded graphs alone. A lower bound on the peak
// memory of any simulation of `w`.
int64_t StaticMemoryBytes(const Workload& w);

// Appends `b` after `a` on the same ranks.
sched::Timeline Concatenate(const sched::Timeline& a, const sched::Timeline& b);

}  // namespace charon::dse

#endif  // CHARON_DSE_WORKLOAD_H_
