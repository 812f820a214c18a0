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


#ifndef CHARON_DSE_SEARCH_H_
#define CHARON_DSE_SEARCH_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "charon/common/units.h"
#include "charon/dse/workload.h"
#include "charon/engines/engine.h"
#include "charon/parallel/config.h"

namespace charon::dse {

// Candidate values per axis. The sequence-parallel axis chooses sp = 1
// (false) or sp = tp (true).
struct SearchSpace {
  std::vector<int> world_sizes = {1};
  std::vector<int> tp = {1};
  std::vector<int> pp = {1};
  std::vector<int> dp = {1};
  std::vector<int> ep = {1};
  std::vector<bool> sequence_parallel = {false};
  std::vector<int> microbatches = {1};
  std::vector<parallel::PpSchedule> schedules = {parallel::PpSchedule::kOneFOneB};
  std::vector<parallel::DpMode> dp_modes = {parallel::DpMode::kDdp};
  std::vector<int64_t> batch = {1};
  // 0 keeps the base workload's value.
  std::vector<int64_t> decode_batch = {0};
  std::vector<int64_t> prefill_chunk = {0};
};

// Throws ConfigError naming the first empty axis.
void ValidateSpace(const SearchSpace& space);

struct Candidate {
  parallel::ParallelismConfig parallel;
  int64_t batch = 1;
  int64_t decode_batch = 0;
  int64_t prefill_chunk = 0;

  bool operator==(const Candidate&) const = default;
};

// Total order used for deterministic tie-breaking.
bool LexLess(const Candidate& a, const Candidate& b);
std::string Describe(const Candidate& c);

// Cartesian product of the axes at world size `world`, keeping candidates
// with tp*pp*dp = world that pass the structural parallelism checks.
std::vector<Candidate> EnumerateSpace(const SearchSpace& space, int world);

// EnumerateSpace over every listed world size, in axis order.
std::vector<Candidate> EnumerateAll(const SearchSpace& space);

// `base` with the candidate's parallelism and batch sizes.
Workload ApplyCandidate(const Workload& base, const Candidate& c);

struct PruneRule {
  std::string name;
  std::string rationale;
  // Safe rules only remove candidates that cannot be feasible.
  bool safe = true;
  std::function<bool(const Candidate&)> prune;
};

PruneRule DivisibilityRule(const Workload& base);
PruneRule TpIntraNodeRule(int max_tp = 8);
PruneRule StaticMemoryRule(const Workload& base);
PruneRule MicrobatchRule();

// divisibility, tp_intra_node, static_memory, microbatch_ge_pp.
std::vector<PruneRule> DefaultRules(const Workload& base);
// Throws ConfigError for an unknown name.
PruneRule RuleByName(const std::string& name, const Workload& base);

struct PrunedCandidate {
  Candidate candidate;
  std::string rule;
};

struct PruneResult {
  std::vector<Candidate> kept;
  std::vector<PrunedCandidate> pruned;
};

// Tags each pruned candidate with the first matching rule. Order within
// both lists follows the input.
PruneResult Prune(const std::vector<Candidate>& candidates, const std::vector<PruneRule>& rules);

struct Metrics {
  Duration step_time{0};
  Duration ttft{0};
  Duration tpot{0};
  double tps_per_gpu = 0;
  double tps_per_user = 0;
  int64_t peak_mem = 0;
  double mfu = 0;
};

struct EvalPoint {
  Candidate candidate;
  Metrics metrics;
  bool feasible = true;
  // Violated constraint: "memory", "slo:ttft", "slo:tpot", "slo:tps_per_user"
  // or "error: <message>".
  std::string reason;
};

// Simulates the candidate. Running out of memory or an invalid
// combination gives an infeasible point rather than an exception.
EvalPoint Evaluate(const Candidate& c, const Workload& base, const engines::EngineStack& stack);

struct Slo {
  std::optional<Duration> ttft_max;
  std::optional<Duration> tpot_max;
  std::optional<double> tps_per_user_min;
};

// First violated constraint, if any.
std::optional<std::string> SloViolation(const Metrics& m, const Slo& slo);

// Indices of the points not dominated under (maximize first, maximize
// second), ordered by descending first objective then index.
std::vector<size_t> ParetoFrontier(const std::vector<std::pair<double, double>>& points);

// Frontier over feasible points of (tps_per_gpu, tps_per_user); indices
// refer to `points`.
std::vector<size_t> ParetoFrontier(const std::vector<EvalPoint>& points);

// Feasible point meeting `slo` with the highest TPS per GPU; ties go to the
// smaller world size, then to the lexicographically smaller candidate.
std::optional<size_t> BestUnderSlo(const std::vector<EvalPoint>& points, const Slo& slo);

struct SearchResult {
  std::vector<EvalPoint> points;
  std::vector<PrunedCandidate> pruned;
  std::vector<size_t> frontier;
  std::optional<size_t> best;
};

// Enumerates, prunes and evaluates the kept candidates on `workers`
// threads. Points keep candidate order regardless of completion order and
// SLO violations mark points infeasible.
SearchResult Search(const SearchSpace& space, const Workload& base, const std::vector<PruneRule>& rules,
                    const engines::EngineStack& stack, const Slo& slo, int workers);

// charon-table/1 document of the points plus the frontier indices.
std::string EmitSearchTable(const SearchResult& r);

}  // namespace charon::dse

#endif  // CHARON_DSE_SEARCH_H_
