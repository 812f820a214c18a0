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


#include "charon/cli/commands.h"

#include <algorithm>
#include <iomanip>
#include <memory>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "charon/analysis/metrics.h"
#include "charon/analysis/report.h"
#include "charon/analysis/trace.h"
#include "charon/cli/scenario.h"
#include "charon/common/file_util.h"
#include "charon/common/status.h"
#include "charon/dse/search.h"
#include "charon/engines/calibrate.h"
#include "charon/engines/hardware.h"
#include "charon/engines/profile_db.h"

namespace charon::cli {
namespace {

struct GlobalOptions {
  uint64_t seed = 42;
  std::string engines;
  std::string overlap;
  bool verbose = false;
};

class Logger {
 public:
  Logger(std::ostream& err, bool verbose) : err_(err), verbose_(verbose) {}
  void Info(const std::string& msg) const {
    if (verbose_) err_ << "charon: " << msg << "\n";
  }
  void Warn(const std::string& msg) const { err_ << "charon: warning: " << msg << "\n"; }

 private:
  std::ostream& err_;
  bool verbose_;
};

std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void ApplyGlobals(const GlobalOptions& g, Scenario& s) {
  if (!g.engines.empty()) s.engines = SplitList(g.engines);
  if (!g.overlap.empty()) {
    auto mode = sched::ParseOverlapMode(g.overlap);
    if (!mode) throw ConfigError("unknown overlap mode '" + g.overlap + "' (expected ratio or bandwidth)");
    s.workload.sim.overlap = *mode;
  }
}

// Writes to `path`, or to `out` when the path is empty.
void Emit(const std::string& path, const std::string& contents, std::ostream& out) {
  if (path.empty()) {
    out << contents;
  } else {
    WriteFileAtomic(path, contents);
  }
}

dse::RunResult Run(const std::string& path, const GlobalOptions& g, const Logger& log) {
  Scenario s = LoadScenario(path);
  ApplyGlobals(g, s);
  log.Info("scenario '" + s.workload.name + "' mode " + std::string(dse::ModeName(s.workload.mode)));
  engines::EngineStack stack = BuildStack(s, g.seed);
  std::string names;
  for (const auto& e : stack.engines()) names += (names.empty() ? "" : ",") + std::string(e->Name());
  log.Info("engine stack: " + names);
  dse::RunResult r = RunScenario(s, stack);
  log.Info("makespan " + std::to_string(ToMicros(r.timeline.makespan)) + " us after " +
           std::to_string(r.timeline.iterations) + " overlap iteration(s)");
  if (!r.timeline.converged) log.Warn("overlap fixpoint did not converge");
  if (!r.report.memory.empty() && !r.report.FitsMemory()) {
    log.Warn("peak memory " + std::to_string(r.report.PeakMemory()) + " B exceeds capacity " +
             std::to_string(r.report.memory_capacity) + " B");
  }
  return r;
}

int CmdSimulate(const std::string& path, const std::string& out_path, const GlobalOptions& g, const Logger& log,
                std::ostream& out) {
  dse::RunResult r = Run(path, g, log);
  const std::string target = !out_path.empty() ? out_path : LoadScenario(path).report_path;
  Emit(target, analysis::EmitReport(r.report), out);
  if (!target.empty()) log.Info("report written to " + target);
  return kExitOk;
}

int CmdTrace(const std::string& path, const std::string& out_path, const GlobalOptions& g, const Logger& log,
             std::ostream& out) {
  dse::RunResult r = Run(path, g, log);
  const std::string target = !out_path.empty() ? out_path : LoadScenario(path).trace_path;
  Emit(target, analysis::EmitChromeTrace(r.timeline) + "\n", out);
  if (!target.empty()) log.Info("trace written to " + target);
  return kExitOk;
}

std::string FormatMicros(Duration d) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(3) << RoundMicros(d);
  return ss.str();
}

int CmdBreakdown(const std::string& path, const GlobalOptions& g, const Logger& log, std::ostream& out) {
  dse::RunResult r = Run(path, g, log);
  std::vector<std::string> columns;
  for (const char* c : {"F", "B", "O"}) {
    for (const auto& [cat, cols] : r.report.breakdown) {
      if (cols.count(c)) {
        columns.push_back(c);
        break;
      }
    }
  }
  out << "Breakdown (us)\n" << std::left << std::setw(16) << "category";
  for (const auto& c : columns) out << std::right << std::setw(14) << c;
  out << "\n";
  for (const auto& [cat, cols] : r.report.breakdown) {
    out << std::left << std::setw(16) << cat;
    for (const auto& c : columns) {
      auto it = cols.find(c);
      out << std::right << std::setw(14) << (it == cols.end() ? "-" : FormatMicros(it->second));
    }
    out << "\n";
  }
  out << "step time (us): " << FormatMicros(r.report.step_time) << "\n";
  for (const auto& [rank, d] : r.report.exposed_comm) {
    out << "exposed communication on rank " << rank << " (us): " << FormatMicros(d) << "\n";
  }
  return kExitOk;
}

int CmdSearch(const std::string& path, const std::string& out_path, int workers, const GlobalOptions& g,
              const Logger& log, std::ostream& out) {
  SpaceFile space = LoadSpace(path);
  ApplyGlobals(g, space.base);
  const dse::Workload& base = space.base.workload;
  std::vector<dse::PruneRule> rules;
  if (space.default_rules) {
    rules = dse::DefaultRules(base);
  } else {
    for (const auto& name : space.rules) rules.push_back(dse::RuleByName(name, base));
  }
  engines::EngineStack stack = BuildStack(space.base, g.seed);
  dse::SearchResult r =
      dse::Search(space.space, base, rules, stack, space.slo, workers > 0 ? workers : space.workers);
  for (const auto& p : r.pruned) log.Info("pruned [" + p.rule + "] " + dse::Describe(p.candidate));
  if (r.points.empty()) log.Warn("every candidate was pruned or the space is empty; the table is empty");
  log.Info(std::to_string(r.points.size()) + " candidate(s) evaluated, " + std::to_string(r.pruned.size()) +
           " pruned, " + std::to_string(r.frontier.size()) + " on the frontier");
  Emit(!out_path.empty() ? out_path : space.table_path, dse::EmitSearchTable(r), out);
  return kExitOk;
}

int CmdGenProfileDb(const std::string& hw_path, const std::string& sweep_path, const std::string& out_path,
                    const GlobalOptions& g, const Logger& log, std::ostream& out) {
  engines::HardwareSpec hw = engines::LoadHardwareFile(hw_path);
  std::vector<engines::SweepEntry> sweep = ParseSweep(ReadFile(sweep_path), g.seed);
  engines::SyntheticDbResult db = engines::GenerateSyntheticDb(hw, sweep);
  if (db.duplicates > 0) log.Warn(std::to_string(db.duplicates) + " duplicate sweep entries skipped");
  log.Info(std::to_string(db.db.size()) + " record(s) for device '" + hw.device_id + "'");
  Emit(out_path, engines::EmitProfileDb(db.db), out);
  return kExitOk;
}

int CmdCalibrate(const std::string& samples_path, const std::string& out_path, const Logger& log,
                 std::ostream& out) {
  SamplesFile s = ParseSamples(ReadFile(samples_path));
  engines::LinkFit fit = engines::CalibrateLinks(s.samples, s.kind, s.algo);
  log.Info("fitted " + std::to_string(s.samples.size()) + " sample(s)");
  nlohmann::ordered_json doc = {{"version", "charon-link-fit/1"},
                                {"kind", ir::KindName(s.kind)},
                                {"alpha_s", fit.alpha_s},
                                {"bandwidth", fit.bandwidth},
                                {"rms_residual_s", fit.rms_residual_s}};
  Emit(out_path, doc.dump(2) + "\n", out);
  return kExitOk;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Distributed training and inference performance simulator", "charon"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--seed", g.seed, "Seed for predictor training and random sweeps")->capture_default_str();
  app.add_option("--engines", g.engines, "Engine order, e.g. profile,predict,analytical");
  app.add_option("--overlap", g.overlap, "Overlap model: ratio or bandwidth");
  app.add_flag("--verbose,-v", g.verbose, "Log progress to stderr");

  std::string input, out_path, sweep_path;
  int workers = 0;
  auto* simulate = app.add_subcommand("simulate", "Simulate a scenario and write its report");
  simulate->add_option("scenario", input, "Scenario file")->required();
  simulate->add_option("--out,-o", out_path, "Report path (default: the scenario's outputs.report, else stdout)");
  auto* trace = app.add_subcommand("trace", "Simulate a scenario and write a Chrome trace");
  trace->add_option("scenario", input, "Scenario file")->required();
  trace->add_option("--out,-o", out_path, "Trace path (default: the scenario's outputs.trace, else stdout)");
  auto* search = app.add_subcommand("search", "Explore a design space");
  search->add_option("space", input, "Search-space file")->required();
  search->add_option("--out,-o", out_path, "Table path (default: the space's outputs.table, else stdout)");
  search->add_option("--workers,-j", workers, "Concurrent evaluations (default: from the space file)");
  auto* breakdown = app.add_subcommand("breakdown", "Print the time breakdown of a scenario");
  breakdown->add_option("scenario", input, "Scenario file")->required();
  auto* gen = app.add_subcommand("gen-profile-db", "Write a roofline-priced profile database");
  gen->add_option("hardware", input, "Hardware file")->required();
  gen->add_option("--sweep", sweep_path, "Sweep file")->required();
  gen->add_option("--out,-o", out_path, "Database path (default: stdout)");
  auto* calibrate = app.add_subcommand("calibrate", "Fit link latency and bandwidth to measurements");
  calibrate->add_option("samples", input, "Samples file")->required();
  calibrate->add_option("--out,-o", out_path, "Fit path (default: stdout)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "charon: " << e.what() << "\n" << "Run with --help for usage.\n";
    return kExitConfig;
  }

  const Logger log(err, g.verbose);
  try {
    if (*simulate) return CmdSimulate(input, out_path, g, log, out);
    if (*trace) return CmdTrace(input, out_path, g, log, out);
    if (*search) return CmdSearch(input, out_path, workers, g, log, out);
    if (*breakdown) return CmdBreakdown(input, g, log, out);
    if (*gen) return CmdGenProfileDb(input, sweep_path, out_path, g, log, out);
    if (*calibrate) return CmdCalibrate(input, out_path, log, out);
  } catch (const ConfigError& e) {
    err << "charon: configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TrainingError& e) {
    err << "charon: configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SimulationError& e) {
    err << "charon: simulation error: " << e.what() << "\n";
    return kExitSimulation;
  } catch (const RewriteError& e) {
    err << "charon: simulation error: " << e.what() << "\n";
    return kExitSimulation;
  } catch (const std::exception& e) {
    err << "charon: error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace charon::cli
