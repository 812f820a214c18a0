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


#include "charon/analysis/report.h"

#include <algorithm>
#include <json.hpp>

namespace charon::analysis {

using nlohmann::ordered_json;

int64_t Report::PeakMemory() const {
  int64_t peak = 0;
  for (const auto& m : memory) peak = std::max(peak, m.memory.max_reserved);
  return peak;
}

std::string EmitReport(const Report& r) {
  ordered_json doc;
  doc["version"] = kReportVersion;
  doc["scenario"] = r.scenario;
  doc["mode"] = r.mode;
  doc["world_size"] = r.world_size;
  doc["model_flops"] = r.model_flops;
  doc["mfu"] = std::round(r.mfu * 1e6) / 1e6;
  doc["step_time_us"] = RoundMicros(r.step_time);
  if (r.inference) {
    doc["inference"] = {{"ttft_us", RoundMicros(r.inference->ttft)},
                        {"tpot_us", RoundMicros(r.inference->tpot)},
                        {"tps_per_user", std::round(r.inference->tps_per_user * 1e3) / 1e3},
                        {"tps_per_gpu", std::round(r.inference->tps_per_gpu * 1e3) / 1e3}};
  }
  ordered_json breakdown = ordered_json::object();
  for (const auto& [cat, cols] : r.breakdown) {
    ordered_json row = ordered_json::object();
    for (const auto& [col, d] : cols) row[col] = RoundMicros(d);
    breakdown[cat] = row;
  }
  doc["breakdown_us"] = breakdown;
  ordered_json exposed = ordered_json::object();
  for (const auto& [rank, d] : r.exposed_comm) exposed[std::to_string(rank)] = RoundMicros(d);
  doc["exposed_comm_us"] = exposed;
  ordered_json mem = ordered_json::array();
  for (const auto& m : r.memory) {
    ordered_json comps = ordered_json::object();
    for (const auto& [c, b] : m.memory.components) comps[std::string(ComponentName(c))] = b;
    mem.push_back({{"stage", m.stage},
                   {"rank", m.rank},
                   {"layers", m.layers},
                   {"inflight", m.inflight},
                   {"max_allocated", m.memory.max_allocated},
                   {"max_reserved", m.memory.max_reserved},
                   {"components", comps}});
  }
  doc["memory"] = {{"capacity", r.memory_capacity}, {"fits", r.FitsMemory()}, {"stages", mem}};
  doc["energy_j"] = std::round(r.energy_j * 1e6) / 1e6;
  doc["overlap"] = {{"iterations", r.iterations}, {"converged", r.converged}};
  ordered_json ops = ordered_json::array();
  for (const auto& o : r.operators) {
    ops.push_back({{"name", o.name}, {"kind", o.kind}, {"count", o.count}, {"total_us", RoundMicros(o.total)},
                   {"engine", o.engine}});
  }
  doc["operators"] = ops;
  return doc.dump(2) + "\n";
}

}  // namespace charon::analysis
