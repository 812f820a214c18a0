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


#include "charon/analysis/metrics.h"

#include <algorithm>

#include "charon/common/status.h"
#include "charon/engines/roofline.h"

namespace charon::analysis {
namespace {

struct Interval {
  double start;
  double end;
};

double UnionLength(std::vector<Interval> v) {
  std::sort(v.begin(), v.end(), [](const Interval& a, const Interval& b) { return a.start < b.start; });
  double total = 0, cur_s = 0, cur_e = 0;
  bool open = false;
  for (const auto& x : v) {
    if (x.end <= x.start) continue;
    if (open && x.start <= cur_e) {
      cur_e = std::max(cur_e, x.end);
      continue;
    }
    if (open) total += cur_e - cur_s;
    cur_s = x.start;
    cur_e = x.end;
    open = true;
  }
  if (open) total += cur_e - cur_s;
  return total;
}

}  // namespace

FlopsSummary SummarizeFlops(double model_flops, const sched::Timeline& t, const engines::HardwareSpec& hw, int world,
                            ir::Precision precision) {
  if (world < 1) throw ConfigError("world size must be positive");
  FlopsSummary s;
  s.model_flops = model_flops;
  const double seconds = ToSeconds(t.makespan);
  if (seconds > 0) s.mfu = model_flops / (seconds * world * hw.PeakFlops(precision));
  return s;
}

ir::Precision ModelPrecision(const ir::OperatorGraph& g) {
  ir::TensorTable table(g);
  for (const auto& n : g.nodes) {
    if (n.kind == ir::OpKind::kMatmul || n.kind == ir::OpKind::kBatchedMatmul) {
      return engines::NodePrecision(n, table.InputMetas(n));
    }
  }
  if (!g.nodes.empty()) return engines::NodePrecision(g.nodes[0], table.InputMetas(g.nodes[0]));
  return ir::Precision::kBF16;
}

std::string DefaultCategory(const sched::TimelineSegment& s) {
  if (s.kind) {
    switch (*s.kind) {
      case ir::OpKind::kAllGather:
        return kAllGather;
      case ir::OpKind::kReduceScatter:
        return kReduceScatter;
      case ir::OpKind::kAllReduce:
        return kAllReduce;
      case ir::OpKind::kAllToAll:
        return kAllToAll;
      case ir::OpKind::kSend:
      case ir::OpKind::kRecv:
        return kSendRecv;
      default:
        break;
    }
  }
  if (s.module == "attention") return kAttention;
  if (s.module == "ffn") return kFeedForward;
  return kOthers;
}

std::string PhaseColumn(ir::Phase p) {
  switch (p) {
    case ir::Phase::kForward:
      return "F";
    case ir::Phase::kBackward:
      return "B";
    case ir::Phase::kOptimizer:
      return "O";
  }
  return "F";
}

Breakdown ComputeBreakdown(const sched::Timeline& t, const CategoryMap& map) {
  Breakdown b;
  for (const auto& s : t.segments) b[map(s)][PhaseColumn(s.phase)] += s.Length();
  return b;
}

Duration BreakdownTotal(const Breakdown& b) {
  Duration total{0};
  for (const auto& [cat, cols] : b) {
    for (const auto& [col, d] : cols) total += d;
  }
  return total;
}

std::map<int, Duration> BusyTime(const sched::Timeline& t) {
  std::map<int, std::vector<Interval>> per_rank;
  for (const auto& s : t.segments) per_rank[s.rank].push_back({s.start.count(), s.end.count()});
  std::map<int, Duration> out;
  for (auto& [rank, v] : per_rank) out[rank] = Duration{UnionLength(std::move(v))};
  return out;
}

double EnergyJoules(const sched::Timeline& t, const engines::HardwareSpec& hw) {
  double joules = 0;
  for (const auto& [rank, busy] : BusyTime(t)) joules += hw.tdp_w * ToSeconds(busy);
  return joules;
}

std::vector<OperatorRow> OperatorTable(const sched::Timeline& t, int rank) {
  std::map<std::string, OperatorRow> rows;
  for (const auto& s : t.segments) {
    if (s.rank != rank) continue;
    OperatorRow& r = rows[s.name];
    r.name = s.name;
    r.kind = s.kind ? std::string(ir::KindName(*s.kind)) : std::string(parallel::SegmentTypeName(s.type));
    r.engine = s.engine;
    ++r.count;
    r.total += s.Length();
  }
  std::vector<OperatorRow> out;
  for (auto& [name, r] : rows) out.push_back(std::move(r));
  std::stable_sort(out.begin(), out.end(), [](const OperatorRow& a, const OperatorRow& b) { return a.total > b.total; });
  return out;
}

}  // namespace charon::analysis
