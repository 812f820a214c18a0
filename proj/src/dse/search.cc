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


#include "charon/dse/search.h"

#include <algorithm>
#include <atomic>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "charon/common/status.h"

namespace charon::dse {
namespace {

auto Key(const Candidate& c) {
  const auto& p = c.parallel;
  return std::make_tuple(p.world_size, p.tp, p.sp, p.ep, p.pp, p.dp, p.microbatches, static_cast<int>(p.pp_schedule),
                         static_cast<int>(p.dp_mode), c.batch, c.decode_batch, c.prefill_chunk);
}

template <typename T>
void RequireAxis(const std::vector<T>& axis, const char* name) {
  if (axis.empty()) throw ConfigError(std::string("search axis '") + name + "' is empty");
}

nlohmann::ordered_json CandidateJson(const Candidate& c) {
  const auto& p = c.parallel;
  return {{"world_size", p.world_size},
          {"tp", p.tp},
          {"sp", p.sp},
          {"ep", p.ep},
          {"pp", p.pp},
          {"dp", p.dp},
          {"dp_mode", parallel::DpModeName(p.dp_mode)},
          {"pp_schedule", parallel::PpScheduleName(p.pp_schedule)},
          {"microbatches", p.microbatches},
          {"batch", c.batch},
          {"decode_batch", c.decode_batch},
          {"prefill_chunk", c.prefill_chunk}};
}

}  // namespace

void ValidateSpace(const SearchSpace& s) {
  RequireAxis(s.world_sizes, "world_size");
  RequireAxis(s.tp, "tp");
  RequireAxis(s.pp, "pp");
  RequireAxis(s.dp, "dp");
  RequireAxis(s.ep, "ep");
  RequireAxis(s.sequence_parallel, "sp");
  RequireAxis(s.microbatches, "microbatches");
  RequireAxis(s.schedules, "pp_schedule");
  RequireAxis(s.dp_modes, "dp_mode");
  RequireAxis(s.batch, "batch");
  RequireAxis(s.decode_batch, "decode_batch");
  RequireAxis(s.prefill_chunk, "prefill_chunk");
}

bool LexLess(const Candidate& a, const Candidate& b) { return Key(a) < Key(b); }

std::string Describe(const Candidate& c) {
  const auto& p = c.parallel;
  std::string s = "world=" + std::to_string(p.world_size) + " tp=" + std::to_string(p.tp) +
                  " sp=" + std::to_string(p.sp) + " ep=" + std::to_string(p.ep) + " pp=" + std::to_string(p.pp) +
                  " dp=" + std::to_string(p.dp) + " m=" + std::to_string(p.microbatches) +
                  " " + std::string(parallel::PpScheduleName(p.pp_schedule)) + " " +
                  std::string(parallel::DpModeName(p.dp_mode)) + " batch=" + std::to_string(c.batch);
  if (c.decode_batch > 0) s += " decode_batch=" + std::to_string(c.decode_batch);
  if (c.prefill_chunk > 0) s += " chunk=" + std::to_string(c.prefill_chunk);
  return s;
}

std::vector<Candidate> EnumerateSpace(const SearchSpace& space, int world) {
  ValidateSpace(space);
  std::vector<Candidate> out;
  for (int tp : space.tp) {
    for (int pp : space.pp) {
      for (int dp : space.dp) {
        if (int64_t{tp} * pp * dp != world) continue;
        for (int ep : space.ep) {
          for (bool sp : space.sequence_parallel) {
            // sp = tp = 1 is the same configuration as sp off.
            if (sp && tp == 1) continue;
            for (int m : space.microbatches) {
              for (auto schedule : space.schedules) {
                for (auto mode : space.dp_modes) {
                  for (int64_t batch : space.batch) {
                    for (int64_t decode : space.decode_batch) {
                      for (int64_t chunk : space.prefill_chunk) {
                        Candidate c;
                        c.parallel = {tp, sp ? tp : 1, ep, pp, dp, mode, schedule, m, world};
                        c.batch = batch;
                        c.decode_batch = decode;
                        c.prefill_chunk = chunk;
                        if (parallel::ConfigDiagnostics(c.parallel).empty()) out.push_back(c);
                      }
                    }
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

std::vector<Candidate> EnumerateAll(const SearchSpace& space) {
  std::vector<Candidate> out;
  for (int world : space.world_sizes) {
    auto part = EnumerateSpace(space, world);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

Workload ApplyCandidate(const Workload& base, const Candidate& c) {
  Workload w = base;
  parallel::ParallelismConfig p = c.parallel;
  p.stage_layers = base.parallel.stage_layers.size() == static_cast<size_t>(p.pp) ? base.parallel.stage_layers
                                                                                   : std::vector<int64_t>{};
  p.bucket_bytes = base.parallel.bucket_bytes;
  w.parallel = p;
  w.model.batch = c.batch;
  if (c.decode_batch > 0) w.decode_batch = c.decode_batch;
  if (c.prefill_chunk > 0) w.prefill_chunk = c.prefill_chunk;
  return w;
}

PruneRule DivisibilityRule(const Workload& base) {
  return {"divisibility", "model dimensions must split evenly across the parallel groups", true,
          [base](const Candidate& c) {
            Workload w = ApplyCandidate(base, c);
            return !parallel::ModelDiagnostics(w.parallel, w.model).empty();
          }};
}

PruneRule TpIntraNodeRule(int max_tp) {
  return {"tp_intra_node", "tensor parallelism beyond one node (tp > " + std::to_string(max_tp) + ") is inefficient",
          false, [max_tp](const Candidate& c) { return c.parallel.tp > max_tp; }};
}

PruneRule StaticMemoryRule(const Workload& base) {
  return {"static_memory", "persistent state alone exceeds device memory", true, [base](const Candidate& c) {
            try {
              return StaticMemoryBytes(ApplyCandidate(base, c)) > base.hw.memory_capacity;
            } catch (const Error&) {
              return false;
            }
          }};
}

PruneRule MicrobatchRule() {
  return {"microbatch_ge_pp", "fewer microbatches than stages leaves the pipeline starved", true,
          [](const Candidate& c) { return c.parallel.pp > 1 && c.parallel.microbatches < c.parallel.pp; }};
}

std::vector<PruneRule> DefaultRules(const Workload& base) {
  return {DivisibilityRule(base), TpIntraNodeRule(), StaticMemoryRule(base), MicrobatchRule()};
}

PruneRule RuleByName(const std::string& name, const Workload& base) {
  if (name == "divisibility") return DivisibilityRule(base);
  if (name == "tp_intra_node") return TpIntraNodeRule();
  if (name == "static_memory") return StaticMemoryRule(base);
  if (name == "microbatch_ge_pp") return MicrobatchRule();
  throw ConfigError("unknown prune rule '" + name + "'");
}

PruneResult Prune(const std::vector<Candidate>& candidates, const std::vector<PruneRule>& rules) {
  PruneResult r;
  for (const auto& c : candidates) {
    const PruneRule* hit = nullptr;
    for (const auto& rule : rules) {
      if (rule.prune(c)) {
        hit = &rule;
        break;
      }
    }
    if (hit) {
      r.pruned.push_back({c, hit->name});
    } else {
      r.kept.push_back(c);
    }
  }
  return r;
}

EvalPoint Evaluate(const Candidate& c, const Workload& base, const engines::EngineStack& stack) {
  EvalPoint p;
  p.candidate = c;
  try {
    Workload w = ApplyCandidate(base, c);
    const int64_t persistent = StaticMemoryBytes(w);
    if (persistent > w.hw.memory_capacity) {
      p.feasible = false;
      p.reason = "memory";
      p.metrics.peak_mem = persistent;
      return p;
    }
    RunResult r = RunWorkload(w, stack);
    p.metrics.step_time = r.report.step_time;
    p.metrics.mfu = r.report.mfu;
    p.metrics.peak_mem = r.report.PeakMemory();
    if (r.report.inference) {
      p.metrics.ttft = r.report.inference->ttft;
      p.metrics.tpot = r.report.inference->tpot;
      p.metrics.tps_per_user = r.report.inference->tps_per_user;
      p.metrics.tps_per_gpu = r.report.inference->tps_per_gpu;
    }
    if (!r.report.FitsMemory()) {
      p.feasible = false;
      p.reason = "memory";
    }
  } catch (const Error& e) {
    p.feasible = false;
    p.reason = std::string("error: ") + e.what();
  }
  return p;
}

std::optional<std::string> SloViolation(const Metrics& m, const Slo& slo) {
  if (slo.ttft_max && m.ttft > *slo.ttft_max) return "slo:ttft";
  if (slo.tpot_max && m.tpot > *slo.tpot_max) return "slo:tpot";
  if (slo.tps_per_user_min && m.tps_per_user < *slo.tps_per_user_min) return "slo:tps_per_user";
  return std::nullopt;
}

std::vector<size_t> ParetoFrontier(const std::vector<std::pair<double, double>>& points) {
  std::vector<size_t> order(points.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (points[a].first != points[b].first) return points[a].first > points[b].first;
    return points[a].second > points[b].second;
  });
  // Sweep groups of equal first objective in descending order. Within a
  // group only the points with the group's largest second objective can
  // survive, and they do unless an earlier group reached that second value.
  std::vector<size_t> out;
  double best_second = -std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < order.size();) {
    size_t end = k;
    while (end < order.size() && points[order[end]].first == points[order[k]].first) ++end;
    const double group_second = points[order[k]].second;
    if (group_second > best_second) {
      for (size_t j = k; j < end && points[order[j]].second == group_second; ++j) out.push_back(order[j]);
      best_second = group_second;
    }
    k = end;
  }
  std::stable_sort(out.begin(), out.end(), [&](size_t a, size_t b) {
    if (points[a].first != points[b].first) return points[a].first > points[b].first;
    return a < b;
  });
  return out;
}

std::vector<size_t> ParetoFrontier(const std::vector<EvalPoint>& points) {
  std::vector<size_t> index;
  std::vector<std::pair<double, double>> values;
  for (size_t i = 0; i < points.size(); ++i) {
    if (!points[i].feasible) continue;
    index.push_back(i);
    values.emplace_back(points[i].metrics.tps_per_gpu, points[i].metrics.tps_per_user);
  }
  std::vector<size_t> out;
  for (size_t k : ParetoFrontier(values)) out.push_back(index[k]);
  return out;
}

std::optional<size_t> BestUnderSlo(const std::vector<EvalPoint>& points, const Slo& slo) {
  std::optional<size_t> best;
  for (size_t i = 0; i < points.size(); ++i) {
    const EvalPoint& p = points[i];
    if (!p.feasible || SloViolation(p.metrics, slo)) continue;
    if (!best) {
      best = i;
      continue;
    }
    const EvalPoint& b = points[*best];
    if (p.metrics.tps_per_gpu != b.metrics.tps_per_gpu) {
      if (p.metrics.tps_per_gpu > b.metrics.tps_per_gpu) best = i;
    } else if (p.candidate.parallel.world_size != b.candidate.parallel.world_size) {
      if (p.candidate.parallel.world_size < b.candidate.parallel.world_size) best = i;
    } else if (LexLess(p.candidate, b.candidate)) {
      best = i;
    }
  }
  return best;
}

SearchResult Search(const SearchSpace& space, const Workload& base, const std::vector<PruneRule>& rules,
                    const engines::EngineStack& stack, const Slo& slo, int workers) {
  PruneResult pruned = Prune(EnumerateAll(space), rules);
  SearchResult r;
  r.pruned = std::move(pruned.pruned);
  r.points.resize(pruned.kept.size());

  std::atomic<size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (size_t i = next++; i < pruned.kept.size(); i = next++) {
      try {
        r.points[i] = Evaluate(pruned.kept[i], base, stack);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n = std::clamp<int>(workers, 1, std::max<int>(1, static_cast<int>(pruned.kept.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  for (auto& p : r.points) {
    if (!p.feasible) continue;
    if (auto v = SloViolation(p.metrics, slo)) {
      p.feasible = false;
      p.reason = *v;
    }
  }
  r.frontier = ParetoFrontier(r.points);
  r.best = BestUnderSlo(r.points, slo);
  return r;
}

std::string EmitSearchTable(const SearchResult& r) {
  using nlohmann::ordered_json;
  ordered_json doc;
  doc["version"] = "charon-table/1";
  ordered_json rows = ordered_json::array();
  for (size_t i = 0; i < r.points.size(); ++i) {
    const EvalPoint& p = r.points[i];
    ordered_json row = {{"index", i}};
    row["config"] = CandidateJson(p.candidate);
    row["step_time_us"] = RoundMicros(p.metrics.step_time);
    row["ttft_us"] = RoundMicros(p.metrics.ttft);
    row["tpot_us"] = RoundMicros(p.metrics.tpot);
    row["tps_per_gpu"] = p.metrics.tps_per_gpu;
    row["tps_per_user"] = p.metrics.tps_per_user;
    row["peak_mem"] = p.metrics.peak_mem;
    row["mfu"] = p.metrics.mfu;
    row["feasible"] = p.feasible;
    row["reason"] = p.reason;
    rows.push_back(row);
  }
  doc["rows"] = rows;
  doc["frontier"] = r.frontier;
  doc["best"] = r.best ? ordered_json(*r.best) : ordered_json(nullptr);
  ordered_json pruned = ordered_json::array();
  for (const auto& p : r.pruned) pruned.push_back({{"config", CandidateJson(p.candidate)}, {"rule", p.rule}});
  doc["pruned"] = pruned;
  return doc.dump(2) + "\n";
}

}  // namespace charon::dse
