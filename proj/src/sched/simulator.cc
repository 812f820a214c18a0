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


#include "charon/sched/simulator.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <string>

#include "charon/common/status.h"
#include "charon/engines/collective.h"
#include "charon/ir/cost.h"
#include "charon/sched/contention.h"

namespace charon::sched {
namespace {

using parallel::ScheduleProgram;
using parallel::Segment;
using parallel::SegmentType;

struct Ref {
  int r = 0;  // index into program.ranks
  int i = 0;
};

struct Interval {
  double start;
  double end;
};

std::vector<Interval> Union(std::vector<Interval> v) {
  std::sort(v.begin(), v.end(), [](const Interval& a, const Interval& b) { return a.start < b.start; });
  std::vector<Interval> out;
  for (const auto& x : v) {
    if (x.end <= x.start) continue;
    if (!out.empty() && x.start <= out.back().end) {
      out.back().end = std::max(out.back().end, x.end);
    } else {
      out.push_back(x);
    }
  }
  return out;
}

double Overlap(const Interval& x, const std::vector<Interval>& merged) {
  double total = 0;
  auto it = std::upper_bound(merged.begin(), merged.end(), x.start,
                             [](double t, const Interval& m) { return t < m.end; });
  for (; it != merged.end() && it->start < x.end; ++it) {
    total += std::max(0.0, std::min(x.end, it->end) - std::max(x.start, it->start));
  }
  return total;
}

struct Priced {
  double base = 0;  // ns
  std::string engine;
  std::vector<engines::LinkPhase> phases;
  double flops = 0;
  double bytes = 0;
  std::optional<ir::OpKind> kind;
  std::string module;
};

using Grid = std::vector<std::vector<double>>;

class Executor {
 public:
  explicit Executor(const ScheduleProgram& p) : p_(p) {
    const int nr = static_cast<int>(p.ranks.size());
    for (int r = 0; r < nr; ++r) {
      if (!rank_index_.emplace(p.ranks[r].rank, r).second) {
        throw SimulationError("rank " + std::to_string(p.ranks[r].rank) + " has two programs");
      }
    }
    streams_.resize(nr);
    partners_.resize(nr);
    std::vector<std::map<std::string, int>> keys(nr);
    for (int r = 0; r < nr; ++r) {
      const auto& segs = p.ranks[r].segments;
      partners_[r].resize(segs.size());
      for (int i = 0; i < static_cast<int>(segs.size()); ++i) {
        const Segment& s = segs[i];
        if (s.stream < 0 || s.stream >= parallel::kNumStreams) {
          throw SimulationError("segment '" + s.name + "' has unknown stream " + std::to_string(s.stream));
        }
        for (int d : s.deps) {
          if (d < 0 || d >= i) {
            throw SimulationError("segment '" + s.name + "' depends on index " + std::to_string(d) +
                                  " which does not precede it");
          }
        }
        streams_[r][s.stream].push_back(i);
        if (s.type != SegmentType::kCompute) {
          std::string k = std::string(parallel::SegmentTypeName(s.type)) + "|" + std::to_string(s.peer) + "|" + s.key;
          if (!keys[r].emplace(k, i).second) {
            throw SimulationError("rank " + std::to_string(p.ranks[r].rank) + " repeats key '" + s.key + "'");
          }
        }
      }
    }
    for (int r = 0; r < nr; ++r) {
      const auto& segs = p.ranks[r].segments;
      const int rank = p.ranks[r].rank;
      for (int i = 0; i < static_cast<int>(segs.size()); ++i) {
        const Segment& s = segs[i];
        auto find = [&](int other, const std::string& k) -> std::optional<Ref> {
          auto ri = rank_index_.find(other);
          if (ri == rank_index_.end()) return std::nullopt;
          auto it = keys[ri->second].find(k);
          if (it == keys[ri->second].end()) {
            throw SimulationError("segment '" + s.name + "' on rank " + std::to_string(rank) +
                                  " has no partner on rank " + std::to_string(other) + " (key '" + s.key + "')");
          }
          return Ref{ri->second, it->second};
        };
        if (s.type == SegmentType::kCollective) {
          for (int m : s.group) {
            if (m == rank) continue;
            if (auto ref = find(m, "collective|" + std::to_string(s.peer) + "|" + s.key)) partners_[r][i].push_back(*ref);
          }
        } else if (s.type == SegmentType::kSend || s.type == SegmentType::kRecv) {
          const char* other = s.type == SegmentType::kSend ? "recv" : "send";
          if (auto ref = find(s.peer, std::string(other) + "|" + std::to_string(rank) + "|" + s.key)) {
            partners_[r][i].push_back(*ref);
          }
        }
      }
    }
  }

  void Run(const Grid& dur, Grid& start, Grid& end) const {
    const int nr = static_cast<int>(p_.ranks.size());
    start.assign(nr, {});
    end.assign(nr, {});
    std::vector<std::vector<char>> resolved(nr);
    std::vector<std::array<size_t, parallel::kNumStreams>> head(nr);
    size_t total = 0, done = 0;
    for (int r = 0; r < nr; ++r) {
      const size_t n = p_.ranks[r].segments.size();
      start[r].assign(n, 0);
      end[r].assign(n, 0);
      resolved[r].assign(n, 0);
      head[r].fill(0);
      total += n;
    }
    auto ready = [&](int r, int i) -> std::optional<double> {
      const Segment& s = p_.ranks[r].segments[i];
      const auto& st = streams_[r][s.stream];
      const size_t h = head[r][s.stream];
      if (h >= st.size() || st[h] != i) return std::nullopt;
      double t = h > 0 ? end[r][st[h - 1]] : 0.0;
      for (int d : s.deps) {
        if (!resolved[r][d]) return std::nullopt;
        t = std::max(t, end[r][d]);
      }
      return t;
    };
    for (bool progress = true; progress && done < total;) {
      progress = false;
      for (int r = 0; r < nr; ++r) {
        for (int sid = 0; sid < parallel::kNumStreams; ++sid) {
          const auto& st = streams_[r][sid];
          while (head[r][sid] < st.size()) {
            const int i = st[head[r][sid]];
            auto t = ready(r, i);
            if (!t) break;
            double begin = *t, length = dur[r][i];
            bool ok = true;
            for (const Ref& q : partners_[r][i]) {
              auto tq = ready(q.r, q.i);
              if (!tq) {
                ok = false;
                break;
              }
              begin = std::max(begin, *tq);
              length = std::max(length, dur[q.r][q.i]);
            }
            if (!ok) break;
            auto settle = [&](int rr, int ii) {
              start[rr][ii] = begin;
              end[rr][ii] = begin + length;
              resolved[rr][ii] = 1;
              ++head[rr][p_.ranks[rr].segments[ii].stream];
              ++done;
            };
            settle(r, i);
            for (const Ref& q : partners_[r][i]) settle(q.r, q.i);
            progress = true;
          }
        }
      }
    }
    if (done < total) Deadlock(resolved, head);
  }

 private:
  [[noreturn]] void Deadlock(const std::vector<std::vector<char>>& resolved,
                             const std::vector<std::array<size_t, parallel::kNumStreams>>& head) const {
    // Each blocked stream head waits on exactly one other stream; following
    // those edges from any blocked head must revisit a head.
    auto head_of = [&](int r, int sid) { return streams_[r][sid][head[r][sid]]; };
    struct Wait {
      std::pair<int, int> stream;
      std::string via;  // rendezvous partner passed on the way, if any
    };
    auto label = [&](int r, int i) {
      return "rank " + std::to_string(p_.ranks[r].rank) + " '" + p_.ranks[r].segments[i].name + "'";
    };
    auto waits_on = [&](int r, int sid) -> Wait {
      const int i = head_of(r, sid);
      const Segment& s = p_.ranks[r].segments[i];
      for (int d : s.deps) {
        if (!resolved[r][d]) return {{r, p_.ranks[r].segments[d].stream}, ""};
      }
      for (const Ref& q : partners_[r][i]) {
        const int qs = p_.ranks[q.r].segments[q.i].stream;
        if (head_of(q.r, qs) != q.i) return {{q.r, qs}, label(q.r, q.i)};
        for (int d : p_.ranks[q.r].segments[q.i].deps) {
          if (!resolved[q.r][d]) return {{q.r, p_.ranks[q.r].segments[d].stream}, label(q.r, q.i)};
        }
      }
      return {{r, sid}, ""};
    };
    std::pair<int, int> cur{-1, -1};
    for (int r = 0; r < static_cast<int>(p_.ranks.size()) && cur.first < 0; ++r) {
      for (int sid = 0; sid < parallel::kNumStreams; ++sid) {
        if (head[r][sid] < streams_[r][sid].size()) {
          cur = {r, sid};
          break;
        }
      }
    }
    std::vector<std::pair<int, int>> path;
    std::vector<std::string> vias;
    std::map<std::pair<int, int>, size_t> seen;
    while (!seen.count(cur)) {
      seen[cur] = path.size();
      path.push_back(cur);
      Wait w = waits_on(cur.first, cur.second);
      vias.push_back(w.via);
      cur = w.stream;
    }
    std::string msg = "deadlock:";
    for (size_t k = seen[cur]; k <= path.size(); ++k) {
      const auto& [r, sid] = k < path.size() ? path[k] : cur;
      if (k > seen[cur]) msg += " ->";
      msg += " " + label(r, head_of(r, sid)) + " on stream " + std::to_string(sid);
      if (k < path.size() && !vias[k].empty()) msg += " -> partner " + vias[k];
    }
    throw SimulationError(msg);
  }

  const ScheduleProgram& p_;
  std::map<int, int> rank_index_;
  std::vector<std::array<std::vector<int>, parallel::kNumStreams>> streams_;
  std::vector<std::vector<std::vector<Ref>>> partners_;
};

std::vector<std::vector<Priced>> PriceAll(const ScheduleProgram& p, const engines::EngineStack& stack,
                                          const engines::HardwareSpec& hw) {
  std::vector<ir::TensorTable> tables;
  for (const auto& g : p.graphs) tables.emplace_back(g);
  std::map<std::pair<int, int>, Priced> cache;
  std::vector<std::vector<Priced>> out(p.ranks.size());
  for (size_t r = 0; r < p.ranks.size(); ++r) {
    const int rank = p.ranks[r].rank;
    for (const Segment& s : p.ranks[r].segments) {
      Priced pr;
      if (s.graph >= 0) {
        if (s.graph >= static_cast<int>(p.graphs.size()) || s.node < 0 ||
            s.node >= static_cast<int>(p.graphs[s.graph].nodes.size())) {
          throw SimulationError("segment '" + s.name + "' references a missing node");
        }
        auto key = std::make_pair(s.graph, s.node);
        auto it = cache.find(key);
        if (it == cache.end()) {
          const ir::OpNode& n = p.graphs[s.graph].nodes[s.node];
          const auto metas = tables[s.graph].InputMetas(n);
          Priced np;
          engines::PricedOp op = stack.Dispatch(n, metas);
          np.base = op.time.count();
          np.engine = op.engine;
          np.phases = op.phases;
          np.kind = n.kind;
          np.module = n.attrs.GetString(ir::attr::kModule, "other");
          if (ir::IsCommunication(n.kind)) {
            np.bytes = static_cast<double>(ir::OpBytes(n, metas));
          } else {
            np.flops = static_cast<double>(ir::OpFlops(n, metas));
          }
          it = cache.emplace(key, std::move(np)).first;
        }
        pr = it->second;
      } else {
        pr.module = "other";
        pr.bytes = s.bytes;
        if (s.type == SegmentType::kSend || s.type == SegmentType::kRecv) {
          pr.kind = s.type == SegmentType::kSend ? ir::OpKind::kSend : ir::OpKind::kRecv;
          if (!s.fixed && s.bytes > 0) {
            engines::CommGroup group{2, std::max(1, std::abs(s.peer - rank))};
            auto cost = engines::CollectiveTime(ir::OpKind::kSend, s.bytes, group, hw);
            pr.base = cost.time.count();
            pr.phases = cost.phases;
            pr.engine = "analytical";
          }
        }
      }
      if (s.fixed) {
        pr.base = s.fixed->count();
        pr.engine = "fixed";
        pr.phases.clear();
      }
      if (pr.base < 0) throw SimulationError("segment '" + s.name + "' has a negative duration");
      out[r].push_back(std::move(pr));
    }
  }
  return out;
}

}  // namespace

void ValidateFactors(const SlowdownFactors& f) {
  for (double v : {f.compute_under_comm, f.comm_under_compute, f.comm_comm}) {
    if (!(v >= 1.0) || !std::isfinite(v)) throw ConfigError("slowdown factors must be finite and >= 1");
  }
}

std::string_view OverlapModeName(OverlapMode m) { return m == OverlapMode::kRatio ? "ratio" : "bandwidth"; }

std::optional<OverlapMode> ParseOverlapMode(std::string_view name) {
  if (name == "ratio") return OverlapMode::kRatio;
  if (name == "bandwidth") return OverlapMode::kBandwidth;
  return std::nullopt;
}

std::vector<int> Timeline::Ranks() const {
  std::set<int> r;
  for (const auto& s : segments) r.insert(s.rank);
  return {r.begin(), r.end()};
}

Duration Timeline::RankMakespan(int rank) const {
  Duration m{0};
  for (const auto& s : segments) {
    if (s.rank == rank) m = std::max(m, s.end);
  }
  return m;
}

Timeline Simulate(const ScheduleProgram& program, const engines::EngineStack& stack, const engines::HardwareSpec& hw,
                  const SimOptions& options) {
  ValidateFactors(options.factors);
  if (options.max_iterations < 1) throw ConfigError("max_iterations must be positive");
  Executor exec(program);
  const auto priced = PriceAll(program, stack, hw);
  const int nr = static_cast<int>(program.ranks.size());
  Grid base(nr), dur(nr), start, end;
  for (int r = 0; r < nr; ++r) {
    for (const auto& pr : priced[r]) base[r].push_back(pr.base);
  }
  dur = base;
  exec.Run(dur, start, end);
  Timeline t;
  t.iterations = 1;
  t.converged = true;
  std::vector<double> capacity;
  for (const auto& tier : hw.tiers) capacity.push_back(tier.bandwidth * static_cast<double>(tier.links_per_node));
  const auto& f = options.factors;
  for (;;) {
    Grid next = dur;
    double change = 0;
    for (int r = 0; r < nr; ++r) {
      const auto& segs = program.ranks[r].segments;
      std::vector<Interval> compute;
      std::array<std::vector<Interval>, parallel::kNumStreams> per_stream;
      for (size_t i = 0; i < segs.size(); ++i) per_stream[segs[i].stream].push_back({start[r][i], end[r][i]});
      compute = Union(per_stream[parallel::kComputeStream]);
      std::vector<Interval> all_comm;
      std::array<std::vector<Interval>, parallel::kNumStreams> others;
      for (int s = 1; s < parallel::kNumStreams; ++s) {
        all_comm.insert(all_comm.end(), per_stream[s].begin(), per_stream[s].end());
        std::vector<Interval> o;
        for (int q = 1; q < parallel::kNumStreams; ++q) {
          if (q != s) o.insert(o.end(), per_stream[q].begin(), per_stream[q].end());
        }
        others[s] = Union(std::move(o));
      }
      all_comm = Union(std::move(all_comm));
      std::vector<FluidTransfer> transfers;
      std::vector<size_t> transfer_of;
      const bool bandwidth = options.overlap == OverlapMode::kBandwidth && !capacity.empty();
      for (size_t i = 0; i < segs.size(); ++i) {
        const double b = base[r][i];
        const Interval x{start[r][i], end[r][i]};
        double d = b;
        if (segs[i].stream == parallel::kComputeStream) {
          d += std::min(Overlap(x, all_comm), b) * (f.compute_under_comm - 1);
        } else {
          d += std::min(Overlap(x, compute), b) * (f.comm_under_compute - 1);
          if (bandwidth && !priced[r][i].phases.empty()) {
            FluidTransfer tr;
            tr.start = Duration{start[r][i]};
            for (const auto& ph : priced[r][i].phases) {
              tr.phases.push_back({ph.tier, ph.latency, ph.bytes, ph.bandwidth});
            }
            transfers.push_back(std::move(tr));
            transfer_of.push_back(i);
          } else if (!bandwidth) {
            d += std::min(Overlap(x, others[segs[i].stream]), b) * (f.comm_comm - 1);
          }
        }
        next[r][i] = d;
      }
      if (!transfers.empty()) {
        FluidResult fr = IntegrateFluid(transfers, capacity);
        for (size_t k = 0; k < transfers.size(); ++k) {
          const size_t i = transfer_of[k];
          const double contended = (fr.finish[k] - transfers[k].start).count();
          next[r][i] += std::max(0.0, contended - base[r][i]);
        }
      }
      for (size_t i = 0; i < segs.size(); ++i) {
        next[r][i] = std::max(next[r][i], dur[r][i]);
        change = std::max(change, next[r][i] - dur[r][i]);
      }
    }
    if (change < options.tolerance.count()) break;
    if (t.iterations >= options.max_iterations) {
      t.converged = false;
      break;
    }
    dur = std::move(next);
    exec.Run(dur, start, end);
    ++t.iterations;
  }

  for (int r = 0; r < nr; ++r) {
    const auto& segs = program.ranks[r].segments;
    std::vector<int> order(segs.size());
    for (size_t i = 0; i < segs.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return segs[a].stream < segs[b].stream; });
    for (int i : order) {
      const Segment& s = segs[i];
      const Priced& pr = priced[r][i];
      TimelineSegment ts;
      ts.rank = program.ranks[r].rank;
      ts.stream = s.stream;
      ts.index = i;
      ts.name = s.name;
      ts.type = s.type;
      ts.kind = pr.kind;
      ts.phase = s.phase;
      ts.module = pr.module;
      ts.microbatch = s.microbatch;
      ts.layer = s.layer;
      ts.start = Duration{start[r][i]};
      ts.end = Duration{end[r][i]};
      ts.base = Duration{base[r][i]};
      ts.engine = pr.engine;
      ts.slowdown = base[r][i] > 0 ? dur[r][i] / base[r][i] : 1.0;
      ts.flops = pr.flops;
      ts.bytes = pr.bytes;
      t.makespan = std::max(t.makespan, ts.end);
      t.segments.push_back(std::move(ts));
    }
  }
  std::stable_sort(t.segments.begin(), t.segments.end(),
                   [](const TimelineSegment& a, const TimelineSegment& b) { return a.rank < b.rank; });
  return t;
}

std::map<int, Duration> ExposedComm(const Timeline& t) {
  std::map<int, std::vector<Interval>> compute, comm;
  for (const auto& s : t.segments) {
    auto& bucket = parallel::IsCommStream(s.stream) ? comm[s.rank] : compute[s.rank];
    bucket.push_back({s.start.count(), s.end.count()});
    compute[s.rank];
  }
  std::map<int, Duration> out;
  for (auto& [rank, c] : compute) {
    const auto busy = Union(c);
    double exposed = 0;
    for (const auto& x : Union(comm[rank])) exposed += (x.end - x.start) - Overlap(x, busy);
    out[rank] = Duration{exposed};
  }
  return out;
}

}  // namespace charon::sched
