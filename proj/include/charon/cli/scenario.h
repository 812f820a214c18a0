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


#ifndef CHARON_CLI_SCENARIO_H_
#define CHARON_CLI_SCENARIO_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "charon/dse/search.h"
#include "charon/dse/workload.h"
#include "charon/engines/engine.h"
#include "charon/engines/calibrate.h"
#include "charon/engines/profile_db.h"
#include "charon/parallel/schedule.h"

namespace charon::cli {

inline constexpr std::string_view kScenarioVersion = "charon-scenario/1";
inline constexpr std::string_view kProgramVersion = "charon-program/1";
inline constexpr std::string_view kSpaceVersion = "charon-space/1";
inline constexpr std::string_view kSweepVersion = "charon-sweep/1";
inline constexpr std::string_view kSamplesVersion = "charon-samples/1";

// A loaded scenario. Relative paths inside the file resolve against the
// file's directory.
struct Scenario {
  dse::Workload workload;
  // A hand-written program replaces the model pipeline when present.
  std::optional<parallel::ScheduleProgram> program;
  std::vector<std::string> engines = {"analytical"};
  std::string profile_db;
  std::string report_path;
  std::string trace_path;
};

// Throws ParseError for malformed documents and ConfigError naming any
// referenced file that cannot be read.
Scenario ParseScenario(std::string_view text, const std::string& base_dir);
Scenario LoadScenario(const std::string& path);

// Programs list fixed-duration segments per rank. Send and recv segments
// without a duration are priced from their bytes.
parallel::ScheduleProgram ParseProgram(std::string_view text);
std::string EmitProgram(const parallel::ScheduleProgram& p);

struct SpaceFile {
  Scenario base;
  dse::SearchSpace space;
  // Empty selects the default rules.
  std::vector<std::string> rules;
  bool default_rules = true;
  dse::Slo slo;
  int workers = 1;
  std::string table_path;
};

SpaceFile LoadSpace(const std::string& path);

// Profile-db sweep: explicit operator instances plus seeded random ones.
std::vector<engines::SweepEntry> ParseSweep(std::string_view text, uint64_t seed);

struct SamplesFile {
  ir::OpKind kind = ir::OpKind::kAllReduce;
  engines::CollectiveAlgo algo = engines::CollectiveAlgo::kRing;
  std::vector<engines::LinkSample> samples;
};

SamplesFile ParseSamples(std::string_view text);

// Engine stack in the scenario's order; `seed` seeds predictor training.
engines::EngineStack BuildStack(const Scenario& s, uint64_t seed);

dse::RunResult RunScenario(const Scenario& s, const engines::EngineStack& stack);

}  // namespace charon::cli

#endif  // CHARON_CLI_SCENARIO_H_
