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


#include "charon/analysis/trace.h"

#include <json.hpp>

#include "charon/common/status.h"

namespace charon::analysis {

using nlohmann::json;

std::string EmitChromeTrace(const sched::Timeline& t) {
  json events = json::array();
  for (const auto& s : t.segments) {
    json args = {{"engine", s.engine},
                 {"phase", std::string(ir::PhaseName(s.phase))},
                 {"microbatch", std::to_string(s.microbatch)},
                 {"layer", std::to_string(s.layer)},
                 {"module", s.module}};
    if (s.slowdown != 1.0) args["slowdown"] = std::to_string(s.slowdown);
    events.push_back({{"name", s.name},
                      {"cat", s.kind ? std::string(ir::KindName(*s.kind))
                                     : std::string(parallel::SegmentTypeName(s.type))},
                      {"ph", "X"},
                      {"ts", ToMicros(s.start)},
                      {"dur", ToMicros(s.Length())},
                      {"pid", s.rank},
                      {"tid", s.stream},
                      {"args", args}});
  }
  return json{{"traceEvents", events}}.dump();
}

std::vector<TraceEvent> ParseChromeTrace(std::string_view text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("traceEvents") || !doc["traceEvents"].is_array()) {
    throw ParseError("trace document needs a traceEvents array");
  }
  std::vector<TraceEvent> out;
  try {
    for (const auto& e : doc["traceEvents"]) {
      TraceEvent ev;
      ev.name = e.at("name").get<std::string>();
      ev.cat = e.value("cat", "");
      ev.ph = e.at("ph").get<std::string>();
      ev.ts = e.at("ts").get<double>();
      ev.dur = e.value("dur", 0.0);
      ev.pid = e.at("pid").get<int>();
      ev.tid = e.at("tid").get<int>();
      if (e.contains("args")) {
        for (const auto& [k, v] : e["args"].items()) ev.args[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
      if (ev.dur < 0) throw ParseError("event '" + ev.name + "' has negative duration");
      out.push_back(std::move(ev));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed trace event: ") + e.what());
  }
  return out;
}

}  // namespace charon::analysis
