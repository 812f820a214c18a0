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


#include "charon/cli/scenario.h"

#include <filesystem>
#include <memory>
#include <set>

#include <json.hpp>

#include "charon/common/file_util.h"
#include "charon/common/status.h"
#include "charon/engines/hardware.h"
#include "charon/engines/sweep.h"
#include "charon/ir/ir_io.h"
#include "charon/passes/pipeline.h"

namespace charon::cli {
namespace {

using Json = nlohmann::ordered_json;

Json ParseJson(std::string_view text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(what + " is not valid JSON: " + e.what());
  }
}

// Typed field access that rejects unknown keys once the caller is done.
class Fields {
 public:
  Fields(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ParseError(where_ + " must be an object");
  }

  bool Has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const Json& At(const std::string& key) {
    if (!Has(key)) throw ParseError(where_ + ": field '" + key + "' is missing");
    return j_.at(key);
  }

  template <typename T>
  T Require(const std::string& key) {
    return Convert<T>(At(key), key);
  }

  template <typename T>
  T Get(const std::string& key, T fallback) {
    return Has(key) ? Convert<T>(j_.at(key), key) : fallback;
  }

  void Done() const {
    for (const auto& [key, v] : j_.items()) {
      if (!seen_.count(key)) throw ParseError(where_ + ": unknown field '" + key + "'");
    }
  }

  const std::string& where() const { return where_; }

 private:
  template <typename T>
  T Convert(const Json& v, const std::string& key) const {
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ParseError(where_ + ": field '" + key + "' must be a boolean");
      } else if constexpr (std::is_arithmetic_v<T>) {
        if (!v.is_number()) throw ParseError(where_ + ": field '" + key + "' must be a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ParseError(where_ + ": field '" + key + "' must be a string");
      }
      return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where_ + ": field '" + key + "' has the wrong type");
    }
  }

  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::string Resolve(const std::string& base_dir, const std::string& path) {
  if (path.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_absolute() || base_dir.empty()) return path;
  return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

std::string DirOf(const std::string& path) { return std::filesystem::path(path).parent_path().string(); }

template <typename T, typename ParseFn>
T ParseEnum(Fields& f, const std::string& key, T fallback, ParseFn parse) {
  if (!f.Has(key)) return fallback;
  const std::string name = f.Require<std::string>(key);
  auto v = parse(name);
  if (!v) throw ParseError(f.where() + ": field '" + key + "' has unknown value '" + name + "'");
  return *v;
}

ir::ModelConfig ParseModel(const Json& j) {
  Fields f(j, "scenario model");
  ir::ModelConfig m;
  m.hidden_size = f.Require<int64_t>("hidden_size");
  m.num_heads = f.Require<int64_t>("num_heads");
  m.num_kv_heads = f.Get<int64_t>("num_kv_heads", m.num_heads);
  m.head_dim = f.Get<int64_t>("head_dim", m.hidden_size / std::max<int64_t>(1, m.num_heads));
  m.ffn_hidden = f.Require<int64_t>("ffn_hidden");
  m.num_layers = f.Require<int64_t>("num_layers");
  m.vocab_size = f.Get<int64_t>("vocab_size", 1);
  m.batch = f.Get<int64_t>("batch", 1);
  m.seq_len = f.Require<int64_t>("seq_len");
  m.square_projections = f.Get<bool>("square_projections", true);
  m.precision = ParseEnum(f, "precision", ir::Precision::kBF16, ir::ParsePrecision);
  if (f.Has("moe")) {
    Fields moe(f.At("moe"), "scenario model.moe");
    ir::MoeConfig c;
    c.num_experts = moe.Require<int64_t>("num_experts");
    c.top_k = moe.Require<int64_t>("top_k");
    c.expert_ffn_hidden = moe.Require<int64_t>("expert_ffn_hidden");
    c.load_factors = moe.Get<std::vector<double>>("load_factors", {});
    moe.Done();
    m.moe = c;
  }
  f.Done();
  ir::ValidateModel(m);
  return m;
}

parallel::ParallelismConfig ParseParallelism(const Json& j) {
  Fields f(j, "scenario parallelism");
  parallel::ParallelismConfig c;
  c.tp = f.Get<int>("tp", 1);
  if (f.Has("sp")) {
    const Json& sp = f.At("sp");
    if (sp.is_boolean()) {
      c.sp = sp.get<bool>() ? c.tp : 1;
    } else {
      c.sp = f.Require<int>("sp");
    }
  }
  c.ep = f.Get<int>("ep", 1);
  c.pp = f.Get<int>("pp", 1);
  c.dp = f.Get<int>("dp", 1);
  c.dp_mode = ParseEnum(f, "dp_mode", parallel::DpMode::kDdp, parallel::ParseDpMode);
  c.pp_schedule = ParseEnum(f, "pp_schedule", parallel::PpSchedule::kOneFOneB, parallel::ParsePpSchedule);
  c.microbatches = f.Get<int>("microbatches", 1);
  c.world_size = f.Get<int>("world_size", c.tp * c.pp * c.dp);
  c.stage_layers = f.Get<std::vector<int64_t>>("stage_layers", {});
  c.bucket_bytes = f.Get<double>("bucket_mib", 25.0) * kMiB;
  f.Done();
  parallel::ValidateConfig(c);
  return c;
}

passes::PassPipeline ParsePasses(const Json& j, const std::string& base_dir) {
  if (j.is_string()) return passes::LoadPipelineFile(Resolve(base_dir, j.get<std::string>()));
  return passes::ParsePipeline(j.dump());
}

void ParseOverlap(const Json& j, sched::SimOptions& sim) {
  Fields f(j, "scenario overlap");
  sim.overlap = ParseEnum(f, "mode", sched::OverlapMode::kRatio, sched::ParseOverlapMode);
  sim.factors.compute_under_comm = f.Get<double>("compute_under_comm", 1.0);
  sim.factors.comm_under_compute = f.Get<double>("comm_under_compute", 1.0);
  sim.factors.comm_comm = f.Get<double>("comm_comm", 1.0);
  sim.max_iterations = f.Get<int>("max_iterations", sim.max_iterations);
  f.Done();
  sched::ValidateFactors(sim.factors);
  if (sim.max_iterations < 1) throw ConfigError("overlap max_iterations must be positive");
}

int DefaultStream(parallel::SegmentType t) {
  switch (t) {
    case parallel::SegmentType::kCompute:
      return parallel::kComputeStream;
    case parallel::SegmentType::kCollective:
      return parallel::kCommStream;
    case parallel::SegmentType::kSend:
      return parallel::kSendStream;
    case parallel::SegmentType::kRecv:
      return parallel::kRecvStream;
  }
  return parallel::kComputeStream;
}

}  // namespace

parallel::ScheduleProgram ParseProgram(std::string_view text) {
  Json doc = ParseJson(text, "program");
  Fields f(doc, "program");
  if (f.Require<std::string>("version") != kProgramVersion) {
    throw ParseError("program: field 'version' must be '" + std::string(kProgramVersion) + "'");
  }
  parallel::ScheduleProgram p;
  std::set<int> ranks;
  const Json& rank_list = f.At("ranks");
  if (!rank_list.is_array()) throw ParseError("program: field 'ranks' must be an array");
  for (const auto& rj : rank_list) {
    Fields rf(rj, "program rank");
    parallel::RankProgram rp;
    rp.rank = rf.Require<int>("rank");
    if (rp.rank < 0 || !ranks.insert(rp.rank).second) {
      throw ParseError("program: rank " + std::to_string(rp.rank) + " is negative or listed twice");
    }
    const Json& segs = rf.At("segments");
    if (!segs.is_array()) throw ParseError("program rank " + std::to_string(rp.rank) + ": 'segments' must be an array");
    for (const auto& sj : segs) {
      const std::string where = "program rank " + std::to_string(rp.rank) + " segment " +
                                std::to_string(rp.segments.size());
      Fields sf(sj, where);
      parallel::Segment s;
      s.name = sf.Require<std::string>("name");
      s.type = ParseEnum(sf, "type", parallel::SegmentType::kCompute, parallel::ParseSegmentType);
      s.stream = sf.Get<int>("stream", DefaultStream(s.type));
      if (s.stream < 0 || s.stream >= parallel::kNumStreams) throw ParseError(where + ": stream out of range");
      if (sf.Has("duration_us")) {
        const double us = sf.Require<double>("duration_us");
        if (us < 0) throw ParseError(where + ": duration_us must be >= 0");
        s.fixed = Micros(us);
      } else if (s.type != parallel::SegmentType::kSend && s.type != parallel::SegmentType::kRecv) {
        throw ParseError(where + ": field 'duration_us' is missing");
      }
      s.deps = sf.Get<std::vector<int>>("deps", {});
      for (int d : s.deps) {
        if (d < 0 || d >= static_cast<int>(rp.segments.size())) {
          throw ParseError(where + ": dep " + std::to_string(d) + " is not an earlier segment");
        }
      }
      s.key = sf.Get<std::string>("key", s.type == parallel::SegmentType::kCompute ? "" : s.name);
      s.group = sf.Get<std::vector<int>>("group", {});
      s.peer = sf.Get<int>("peer", -1);
      s.bytes = sf.Get<double>("bytes", 0.0);
      s.microbatch = sf.Get<int>("microbatch", 0);
      s.layer = sf.Get<int>("layer", 0);
      s.phase = ParseEnum(sf, "phase", ir::Phase::kForward, ir::ParsePhase);
      if ((s.type == parallel::SegmentType::kSend || s.type == parallel::SegmentType::kRecv) && s.peer < 0) {
        throw ParseError(where + ": send and recv need a 'peer'");
      }
      if (s.type == parallel::SegmentType::kCollective && s.group.empty()) s.group = {rp.rank};
      sf.Done();
      rp.segments.push_back(std::move(s));
    }
    rf.Done();
    p.ranks.push_back(std::move(rp));
  }
  f.Done();
  return p;
}

std::string EmitProgram(const parallel::ScheduleProgram& p) {
  Json doc;
  doc["version"] = kProgramVersion;
  Json ranks = Json::array();
  for (const auto& rp : p.ranks) {
    Json segs = Json::array();
    for (const auto& s : rp.segments) {
      if (!s.fixed && s.node >= 0) throw ConfigError("only fixed-duration programs can be written");
      Json j = {{"name", s.name}, {"type", parallel::SegmentTypeName(s.type)}, {"stream", s.stream}};
      if (s.fixed) j["duration_us"] = ToMicros(*s.fixed);
      if (!s.deps.empty()) j["deps"] = s.deps;
      if (!s.key.empty()) j["key"] = s.key;
      if (!s.group.empty()) j["group"] = s.group;
      if (s.peer >= 0) j["peer"] = s.peer;
      if (s.bytes != 0) j["bytes"] = s.bytes;
      if (s.microbatch != 0) j["microbatch"] = s.microbatch;
      if (s.layer != 0) j["layer"] = s.layer;
      if (s.phase != ir::Phase::kForward) j["phase"] = ir::PhaseName(s.phase);
      segs.push_back(std::move(j));
    }
    ranks.push_back({{"rank", rp.rank}, {"segments", segs}});
  }
  doc["ranks"] = ranks;
  return doc.dump(2) + "\n";
}

Scenario ParseScenario(std::string_view text, const std::string& base_dir) {
  Json doc = ParseJson(text, "scenario");
  Fields f(doc, "scenario");
  if (f.Require<std::string>("version") != kScenarioVersion) {
    throw ParseError("scenario: field 'version' must be '" + std::string(kScenarioVersion) + "'");
  }
  Scenario s;
  dse::Workload& w = s.workload;
  w.name = f.Get<std::string>("name", "scenario");
  w.mode = ParseEnum(f, "mode", dse::Mode::kTrain, dse::ParseMode);
  w.hw = engines::LoadHardwareFile(Resolve(base_dir, f.Require<std::string>("hardware")));

  if (f.Has("program")) {
    s.program = ParseProgram(ReadFile(Resolve(base_dir, f.Require<std::string>("program"))));
  } else {
    w.model = ParseModel(f.At("model"));
    if (f.Has("block_ir")) w.block = ir::ParseIrFile(Resolve(base_dir, f.Require<std::string>("block_ir")));
    if (f.Has("parallelism")) w.parallel = ParseParallelism(f.At("parallelism"));
    if (f.Has("inference")) {
      Fields inf(f.At("inference"), "scenario inference");
      w.context_len = inf.Get<int64_t>("context_len", 0);
      w.decode_batch = inf.Get<int64_t>("decode_batch", 0);
      w.prefill_chunk = inf.Get<int64_t>("prefill_chunk", 0);
      inf.Done();
      if (w.context_len < 0 || w.decode_batch < 0 || w.prefill_chunk < 0) {
        throw ConfigError("scenario inference: lengths and batch sizes must be >= 0");
      }
    }
    if ((w.mode == dse::Mode::kDecode || w.mode == dse::Mode::kServe) && w.context_len == 0) {
      throw ConfigError("scenario: mode '" + std::string(dse::ModeName(w.mode)) +
                        "' needs inference.context_len (the KV-cache length)");
    }
    if (f.Has("passes")) w.passes = ParsePasses(f.At("passes"), base_dir);
    if (f.Has("memory")) {
      Fields m(f.At("memory"), "scenario memory");
      w.memory.fragmentation = m.Get<double>("fragmentation", w.memory.fragmentation);
      w.memory.optimizer_bytes_per_param = m.Get<double>("optimizer_bytes_per_param", w.memory.optimizer_bytes_per_param);
      w.memory.comm_buffer_bytes = m.Get<double>("comm_buffer_mib", 0.0) * kMiB;
      m.Done();
    }
  }
  if (f.Has("overlap")) ParseOverlap(f.At("overlap"), w.sim);
  if (f.Has("engines")) {
    Fields e(f.At("engines"), "scenario engines");
    s.engines = e.Get<std::vector<std::string>>("order", s.engines);
    if (e.Has("profile_db")) s.profile_db = Resolve(base_dir, e.Require<std::string>("profile_db"));
    e.Done();
  }
  if (f.Has("outputs")) {
    Fields o(f.At("outputs"), "scenario outputs");
    if (o.Has("report")) s.report_path = Resolve(base_dir, o.Require<std::string>("report"));
    if (o.Has("trace")) s.trace_path = Resolve(base_dir, o.Require<std::string>("trace"));
    o.Done();
  }
  f.Done();
  return s;
}

Scenario LoadScenario(const std::string& path) { return ParseScenario(ReadFile(path), DirOf(path)); }

SpaceFile LoadSpace(const std::string& path) {
  Json doc = ParseJson(ReadFile(path), "search space");
  Fields f(doc, "search space");
  if (f.Require<std::string>("version") != kSpaceVersion) {
    throw ParseError("search space: field 'version' must be '" + std::string(kSpaceVersion) + "'");
  }
  const std::string dir = DirOf(path);
  SpaceFile out;
  out.base = LoadScenario(Resolve(dir, f.Require<std::string>("scenario")));
  if (out.base.program) throw ConfigError("search space: the base scenario must describe a model");
  const dse::Workload& w = out.base.workload;
  const parallel::ParallelismConfig& p = w.parallel;

  dse::SearchSpace& s = out.space;
  s.world_sizes = {p.world_size};
  s.tp = {p.tp};
  s.pp = {p.pp};
  s.dp = {p.dp};
  s.ep = {p.ep};
  s.sequence_parallel = {p.sp > 1};
  s.microbatches = {p.microbatches};
  s.schedules = {p.pp_schedule};
  s.dp_modes = {p.dp_mode};
  s.batch = {w.model.batch};
  s.decode_batch = {w.decode_batch};
  s.prefill_chunk = {w.prefill_chunk};
  if (f.Has("axes")) {
    Fields a(f.At("axes"), "search space axes");
    s.world_sizes = a.Get("world_size", s.world_sizes);
    s.tp = a.Get("tp", s.tp);
    s.pp = a.Get("pp", s.pp);
    s.dp = a.Get("dp", s.dp);
    s.ep = a.Get("ep", s.ep);
    if (a.Has("sp")) {
      s.sequence_parallel.clear();
      for (const auto& v : a.At("sp")) {
        if (!v.is_boolean()) throw ParseError("search space axes: 'sp' lists booleans");
        s.sequence_parallel.push_back(v.get<bool>());
      }
    }
    s.microbatches = a.Get("microbatches", s.microbatches);
    if (a.Has("pp_schedule")) {
      s.schedules.clear();
      for (const auto& name : a.Require<std::vector<std::string>>("pp_schedule")) {
        auto v = parallel::ParsePpSchedule(name);
        if (!v) throw ParseError("search space axes: unknown pp_schedule '" + name + "'");
        s.schedules.push_back(*v);
      }
    }
    if (a.Has("dp_mode")) {
      s.dp_modes.clear();
      for (const auto& name : a.Require<std::vector<std::string>>("dp_mode")) {
        auto v = parallel::ParseDpMode(name);
        if (!v) throw ParseError("search space axes: unknown dp_mode '" + name + "'");
        s.dp_modes.push_back(*v);
      }
    }
    s.batch = a.Get("batch", s.batch);
    s.decode_batch = a.Get("decode_batch", s.decode_batch);
    s.prefill_chunk = a.Get("prefill_chunk", s.prefill_chunk);
    a.Done();
  }
  dse::ValidateSpace(s);
  if (f.Has("rules")) {
    out.default_rules = false;
    out.rules = f.Require<std::vector<std::string>>("rules");
    for (const auto& name : out.rules) dse::RuleByName(name, w);
  }
  if (f.Has("slo")) {
    Fields slo(f.At("slo"), "search space slo");
    if (slo.Has("ttft_us")) out.slo.ttft_max = Micros(slo.Require<double>("ttft_us"));
    if (slo.Has("tpot_us")) out.slo.tpot_max = Micros(slo.Require<double>("tpot_us"));
    if (slo.Has("tps_per_user_min")) out.slo.tps_per_user_min = slo.Require<double>("tps_per_user_min");
    slo.Done();
  }
  out.workers = f.Get<int>("workers", 1);
  if (out.workers < 1) throw ConfigError("search space: workers must be >= 1");
  if (f.Has("outputs")) {
    Fields o(f.At("outputs"), "search space outputs");
    if (o.Has("table")) out.table_path = Resolve(dir, o.Require<std::string>("table"));
    o.Done();
  }
  f.Done();
  return out;
}

std::vector<engines::SweepEntry> ParseSweep(std::string_view text, uint64_t seed) {
  Json doc = ParseJson(text, "sweep");
  Fields f(doc, "sweep");
  if (f.Require<std::string>("version") != kSweepVersion) {
    throw ParseError("sweep: field 'version' must be '" + std::string(kSweepVersion) + "'");
  }
  std::vector<engines::SweepEntry> out;
  if (f.Has("entries")) {
    for (const auto& ej : f.At("entries")) {
      const std::string where = "sweep entry " + std::to_string(out.size());
      Fields e(ej, where);
      engines::SweepEntry entry;
      entry.node.id = "op" + std::to_string(out.size());
      entry.node.kind = ParseEnum(e, "kind", ir::OpKind::kNoop, ir::ParseKind);
      const ir::Precision precision = ParseEnum(e, "precision", ir::Precision::kBF16, ir::ParsePrecision);
      for (const auto& shape : e.Require<std::vector<std::vector<int64_t>>>("inputs")) {
        entry.node.inputs.push_back("in" + std::to_string(entry.inputs.size()));
        entry.inputs.push_back({shape, precision, ir::TensorRole::kActivation});
      }
      entry.node.outputs.push_back({e.Require<std::vector<int64_t>>("output"), precision, ir::TensorRole::kActivation});
      if (e.Has("attrs")) {
        for (const auto& [key, v] : e.At("attrs").items()) {
          if (v.is_number_integer()) {
            entry.node.attrs.Set(key, v.get<int64_t>());
          } else if (v.is_number()) {
            entry.node.attrs.Set(key, v.get<double>());
          } else if (v.is_string()) {
            entry.node.attrs.Set(key, v.get<std::string>());
          } else {
            throw ParseError(where + ": attr '" + key + "' must be a scalar");
          }
        }
      }
      e.Done();
      out.push_back(std::move(entry));
    }
  }
  if (f.Has("random")) {
    uint64_t k = 0;
    for (const auto& rj : f.At("random")) {
      Fields r(rj, "sweep random entry");
      const ir::OpKind kind = ParseEnum(r, "kind", ir::OpKind::kMatmul, ir::ParseKind);
      const int count = r.Require<int>("count");
      const ir::Precision precision = ParseEnum(r, "precision", ir::Precision::kBF16, ir::ParsePrecision);
      r.Done();
      auto part = engines::RandomSweep(kind, count, precision, seed + 7919 * k++);
      out.insert(out.end(), part.begin(), part.end());
    }
  }
  f.Done();
  return out;
}

SamplesFile ParseSamples(std::string_view text) {
  Json doc = ParseJson(text, "samples");
  Fields f(doc, "samples");
  if (f.Require<std::string>("version") != kSamplesVersion) {
    throw ParseError("samples: field 'version' must be '" + std::string(kSamplesVersion) + "'");
  }
  SamplesFile out;
  out.kind = ParseEnum(f, "kind", ir::OpKind::kAllReduce, ir::ParseKind);
  if (f.Has("algo")) {
    const std::string algo = f.Require<std::string>("algo");
    if (algo == "ring") {
      out.algo = engines::CollectiveAlgo::kRing;
    } else if (algo == "tree") {
      out.algo = engines::CollectiveAlgo::kTree;
    } else {
      throw ParseError("samples: unknown algo '" + algo + "'");
    }
  }
  for (const auto& sj : f.At("samples")) {
    Fields s(sj, "samples entry");
    out.samples.push_back({s.Require<int64_t>("ranks"), s.Require<double>("bytes"), s.Require<double>("seconds")});
    s.Done();
  }
  f.Done();
  return out;
}

engines::EngineStack BuildStack(const Scenario& s, uint64_t seed) {
  std::shared_ptr<const engines::ProfileDb> db;
  if (!s.profile_db.empty()) db = std::make_shared<engines::ProfileDb>(engines::LoadProfileDbFile(s.profile_db));
  engines::ForestParams params;
  params.seed = seed;
  return engines::BuildEngineStack(s.engines, s.workload.hw, db, params);
}

dse::RunResult RunScenario(const Scenario& s, const engines::EngineStack& stack) {
  if (s.program) return dse::RunProgram(s.workload.name, *s.program, stack, s.workload.hw, s.workload.sim);
  return dse::RunWorkload(s.workload, stack);
}

}  // namespace charon::cli
