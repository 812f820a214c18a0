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


#ifndef CHARON_ANALYSIS_TRACE_H_
#define CHARON_ANALYSIS_TRACE_H_

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "charon/sched/simulator.h"

namespace charon::analysis {

struct TraceEvent {
  std::string name;
  std::string cat;
  std::string ph;
  double ts = 0;   // microseconds
  double dur = 0;  // microseconds
  int pid = 0;
  int tid = 0;
  std::map<std::string, std::string> args;

  bool operator==(const TraceEvent&) const = default;
};

// Trace Event document {"traceEvents":[...]} with one complete ("X")
// event per segment: pid is the rank, tid the stream.
std::string EmitChromeTrace(const sched::Timeline& t);

// Throws ParseError on malformed documents.
std::vector<TraceEvent> ParseChromeTrace(std::string_view text);

}  // namespace charon::analysis

#endif  // CHARON_ANALYSIS_TRACE_H_
