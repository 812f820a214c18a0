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


#include "charon/dse/workload.h"

#include <algorithm>
#include <map>
#include <tuple>

#include "charon/analysis/metrics.h"
#include "charon/common/status.h"
#include "charon/ir/backward.h"
#include "charon/parallel/shard.h"

namespace charon::dse {
namespace {

struct Sharded {
  ir::OperatorGraph graph;
  analysis::MemoryTags tags;
};

struct PhaseRun {
  sched::Timeline timeline;
  std::vector<analysis::StageMemoryReport> memory;
  double model_flops = 0;
  ir::Precision precision = ir::Precision::kBF16;
};

Sharded ShardBlock(const Workload& w, const ir::OperatorGraph& forward, bool training) {
  const parallel::ParallelismConfig& cfg = w.parallel;
  ir::OperatorGraph g = parallel::ApplyTp(forward, cfg.tp, cfg.sp > 1);
  if (cfg.ep > 1) g = parallel::ApplyEp(g, cfg.ep, 0, parallel::EpStride(cfg));
  Sharded s;
  if (training) {
    parallel::DpResult dp = parallel::ApplyDp(ir::DeriveBackward(g), cfg);
    s.graph = std::move(dp.graph);
    s.tags = dp.tags;
  } else {
    s.graph = std::move(g);
  }
  if (!w.passes.empty()) s.graph = w.passes.Run(s.graph).graph;
  return s;
}

// Layers hosted by each pipeline rank; a dualpipe rank also hosts the
// mirrored stage of the reverse pipeline.
std::vector<int64_t> RankLayers(const parallel::ParallelismConfig& cfg, int64_t layers) {
  std::vector<int64_t> per_stage = parallel::StageLayers(cfg, layers);
  if (cfg.pp_schedule != parallel::PpSchedule::kDualPipe) return per_stage;
  std::vector<int64_t> out(per_stage.size());
  for (size_t s = 0; s < per_stage.size(); ++s) out[s] = per_stage[s] + per_stage[per_stage.size() - 1 - s];
  return out;
}

double BoundaryBytes(const ir::OperatorGraph& g) {
  for (const auto& in : g.inputs) {
    if (in.meta.role == ir::TensorRole::kActivation) return static_cast<double>(in.meta.ByteSize());
  }
  return 0;
}

PhaseRun RunPhase(const Workload& w, const ir::OperatorGraph& forward, bool training,
                  const engines::EngineStack& stack) {
  const parallel::ParallelismConfig& cfg = w.parallel;
  if (forward.IsJoint()) throw ConfigError("the block graph must be forward-only; backward is derived");
  Sharded sh = ShardBlock(w, forward, training);

  const std::vector<int64_t> layers = parallel::StageLayers(cfg, w.model.num_layers);
  std::vector<parallel::StageSpec> stages;
  for (int64_t l : layers) {
    parallel::StageSpec st;
    st.block = sh.graph;
    st.layers = l;
    st.boundary_bytes = BoundaryBytes(sh.graph);
    st.training = training;
    stages.push_back(std::move(st));
  }
  parallel::ScheduleProgram program = parallel::BuildPpSchedule(stages, cfg);

  PhaseRun run;
  run.timeline = sched::Simulate(program, stack, w.hw, w.sim);

  analysis::MemoryOptions options = w.memory;
  options.tags = sh.tags;
  analysis::MemoryTimeline block = analysis::ComputeMemoryTimeline(sh.graph, options);
  const std::vector<int64_t> hosted = RankLayers(cfg, w.model.num_layers);
  for (int s = 0; s < cfg.pp; ++s) {
    const int rank = parallel::RankOf(cfg, {0, 0, s});
    const parallel::RankProgram* rp = program.FindRank(rank);
    const int64_t inflight = training && rp ? std::max(1, parallel::PeakInFlight(*rp)) : 1;
    run.memory.push_back({s, rank, hosted[s], inflight, analysis::ScaleToStage(block, hosted[s], inflight, options)});
  }

  const ir::OperatorGraph unsharded = training ? ir::DeriveBackward(forward) : forward;
  run.model_flops = static_cast<double>(ir::GraphFlops(unsharded)) * static_cast<double>(w.model.num_layers) *
                    cfg.microbatches * cfg.dp;
  run.precision = analysis::ModelPrecision(sh.graph);
  return run;
}

// Keeps the larger footprint per stage.
void MergeMemory(std::vector<analysis::StageMemoryReport>& into, const std::vector<analysis::StageMemoryReport>& from) {
  if (into.empty()) {
    into = from;
    return;
  }
  for (size_t i = 0; i < into.size() && i < from.size(); ++i) {
    if (from[i].memory.max_reserved > into[i].memory.max_reserved) into[i] = from[i];
  }
}

ir::ModelConfig DecodeModel(const Workload& w) {
  ir::ModelConfig m = w.model;
  if (w.decode_batch > 0) m.batch = w.decode_batch;
  return m;
}

int64_t ContextLen(const Workload& w) { return w.context_len > 0 ? w.context_len : w.model.seq_len; }

ir::OperatorGraph ForwardBlock(const Workload& w) { return w.block ? *w.block : ir::BuildBlock(w.model); }

PhaseRun RunPrefill(const Workload& w, const engines::EngineStack& stack) {
  const int64_t seq = w.model.seq_len;
  if (w.prefill_chunk <= 0 || w.prefill_chunk >= seq || w.block) return RunPhase(w, ForwardBlock(w), false, stack);
  if (seq % w.prefill_chunk != 0) {
    throw ConfigError("seq_len " + std::to_string(seq) + " is not a multiple of prefill_chunk " +
                      std::to_string(w.prefill_chunk));
  }
  PhaseRun total;
  for (int64_t prefix = 0; prefix < seq; prefix += w.prefill_chunk) {
    PhaseRun chunk = RunPhase(w, ir::BuildPrefillChunkBlock(w.model, w.prefill_chunk, prefix), false, stack);
    total.timeline = prefix == 0 ? chunk.timeline : Concatenate(total.timeline, chunk.timeline);
    MergeMemory(total.memory, chunk.memory);
    total.model_flops += chunk.model_flops;
    total.precision = chunk.precision;
  }
  return total;
}

PhaseRun RunDecode(const Workload& w, const engines::EngineStack& stack) {
  if (w.block) throw ConfigError("decode mode generates its own block; a block graph is not supported");
  return RunPhase(w, ir::BuildDecodeBlock(DecodeModel(w), ContextLen(w)), false, stack);
}

analysis::Report BaseReport(const std::string& name, std::string_view mode, const sched::Timeline& t,
                            const engines::HardwareSpec& hw, int world, int represented) {
  analysis::Report r;
  r.scenario = name;
  r.mode = std::string(mode);
  r.world_size = world;
  r.step_time = t.makespan;
  r.breakdown = analysis::ComputeBreakdown(t);
  r.exposed_comm = sched::ExposedComm(t);
  r.memory_capacity = hw.memory_capacity;
  r.energy_j = analysis::EnergyJoules(t, hw) * represented;
  const std::vector<int> ranks = t.Ranks();
  if (!ranks.empty()) r.operators = analysis::OperatorTable(t, ranks.front());
  r.iterations = t.iterations;
  r.converged = t.converged;
  return r;
}

}  // namespace

std::string_view ModeName(Mode m) {
  switch (m) {
    case Mode::kTrain:
      return "train";
    case Mode::kPrefill:
      return "prefill";
    case Mode::kDecode:
      return "decode";
    case Mode::kServe:
      return "serve";
  }
  return "train";
}

std::optional<Mode> ParseMode(std::string_view name) {
  for (Mode m : {Mode::kTrain, Mode::kPrefill, Mode::kDecode, Mode::kServe}) {
    if (ModeName(m) == name) return m;
  }
  return std::nullopt;
}

sched::Timeline Concatenate(const sched::Timeline& a, const sched::Timeline& b) {
  sched::Timeline out = a;
  std::map<int, int> next_index;
  for (const auto& s : a.segments) next_index[s.rank] = std::max(next_index[s.rank], s.index + 1);
  for (sched::TimelineSegment s : b.segments) {
    s.start += a.makespan;
    s.end += a.makespan;
    s.index += next_index[s.rank];
    out.segments.push_back(std::move(s));
  }
  std::stable_sort(out.segments.begin(), out.segments.end(), [](const auto& x, const auto& y) {
    return std::tie(x.rank, x.stream, x.index) < std::tie(y.rank, y.stream, y.index);
  });
  out.makespan = a.makespan + b.makespan;
  out.iterations = std::max(a.iterations, b.iterations);
  out.converged = a.converged && b.converged;
  return out;
}

RunResult RunWorkload(const Workload& w, const engines::EngineStack& stack) {
  const parallel::ParallelismConfig& cfg = w.parallel;
  parallel::ValidateForModel(cfg, w.model);
  engines::ValidateHardware(w.hw);
  sched::ValidateFactors(w.sim.factors);
  const int represented = cfg.tp * cfg.dp;

  RunResult out;
  PhaseRun main;
  std::optional<analysis::InferenceMetrics> inference;
  const double decode_batch = static_cast<double>(DecodeModel(w).batch) * cfg.microbatches * cfg.dp;
  switch (w.mode) {
    case Mode::kTrain:
      main = RunPhase(w, ForwardBlock(w), true, stack);
      break;
    case Mode::kPrefill:
      main = RunPrefill(w, stack);
      inference = analysis::InferenceMetrics{main.timeline.makespan, Duration{0}, 0, 0};
      break;
    case Mode::kDecode: {
      main = RunDecode(w, stack);
      const double tpot = ToSeconds(main.timeline.makespan);
      inference = analysis::InferenceMetrics{Duration{0}, main.timeline.makespan, 1.0 / tpot,
                                             decode_batch / tpot / cfg.world_size};
      break;
    }
    case Mode::kServe: {
      PhaseRun prefill = RunPrefill(w, stack);
      PhaseRun decode = RunDecode(w, stack);
      const double tpot = ToSeconds(decode.timeline.makespan);
      inference = analysis::InferenceMetrics{prefill.timeline.makespan, decode.timeline.makespan, 1.0 / tpot,
                                             decode_batch / tpot / cfg.world_size};
      main.timeline = Concatenate(prefill.timeline, decode.timeline);
      main.memory = prefill.memory;
      MergeMemory(main.memory, decode.memory);
      main.model_flops = prefill.model_flops + decode.model_flops;
      main.precision = prefill.precision;
      break;
    }
  }

  out.report = BaseReport(w.name, ModeName(w.mode), main.timeline, w.hw, cfg.world_size, represented);
  analysis::FlopsSummary flops =
      analysis::SummarizeFlops(main.model_flops, main.timeline, w.hw, cfg.world_size, main.precision);
  out.report.model_flops = flops.model_flops;
  out.report.mfu = flops.mfu;
  out.report.inference = inference;
  out.report.memory = std::move(main.memory);
  out.timeline = std::move(main.timeline);
  return out;
}

RunResult RunProgram(const std::string& name, const parallel::ScheduleProgram& program,
                     const engines::EngineStack& stack, const engines::HardwareSpec& hw,
                     const sched::SimOptions& options) {
  RunResult out;
  out.timeline = sched::Simulate(program, stack, hw, options);
  const int world = std::max<int>(1, static_cast<int>(program.ranks.size()));
  out.report = BaseReport(name, "program", out.timeline, hw, world, 1);
  return out;
}

int64_t StaticMemoryBytes(const Workload& w) {
  parallel::ValidateForModel(w.parallel, w.model);
  std::vector<ir::OperatorGraph> graphs;
  std::vector<analysis::MemoryTags> tags;
  auto add = [&](const ir::OperatorGraph& forward, bool training) {
    Sharded s = ShardBlock(w, forward, training);
    graphs.push_back(std::move(s.graph));
    tags.push_back(s.tags);
  };
  if (w.mode == Mode::kTrain) add(ForwardBlock(w), true);
  if (w.mode == Mode::kPrefill || w.mode == Mode::kServe) add(ForwardBlock(w), false);
  if (w.mode == Mode::kDecode || w.mode == Mode::kServe) add(ir::BuildDecodeBlock(DecodeModel(w), ContextLen(w)), false);

  const std::vector<int64_t> hosted = RankLayers(w.parallel, w.model.num_layers);
  const int64_t max_layers = *std::max_element(hosted.begin(), hosted.end());
  int64_t worst = 0;
  for (size_t i = 0; i < graphs.size(); ++i) {
    analysis::MemoryOptions options = w.memory;
    options.tags = tags[i];
    worst = std::max(worst, analysis::ComputeMemoryTimeline(graphs[i], options).persistent_bytes * max_layers);
  }
  return worst;
}

}  // namespace charon::dse
