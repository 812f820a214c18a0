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


#include "charon/parallel/schedule.h"

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <tuple>

#include "charon/common/status.h"
#include "charon/ir/backward.h"

namespace charon::parallel {
namespace {

using ir::OperatorGraph;
using ir::Phase;

struct Item {
  int pipeline = 0;  // 0 forward direction, 1 reverse direction (dualpipe)
  bool forward = true;
  int mb = 0;
};

// Per-stage order of forward and backward items of one pipeline.
std::vector<Item> StageOrder(int s, int p, const std::vector<int>& mbs, bool training, int pipeline) {
  std::vector<Item> order;
  const int m = static_cast<int>(mbs.size());
  if (!training) {
    for (int i = 0; i < m; ++i) order.push_back({pipeline, true, mbs[i]});
    return order;
  }
  const int warm = std::min(p - s, m);
  int next_f = 0;
  for (; next_f < warm; ++next_f) order.push_back({pipeline, true, mbs[next_f]});
  for (int b = 0; b < m; ++b) {
    order.push_back({pipeline, false, mbs[b]});
    if (next_f < m) order.push_back({pipeline, true, mbs[next_f++]});
  }
  return order;
}

struct Slot {
  Item item;
  int stage = 0;
  double start = 0;
  double end = 0;
};

int StageOf(int rank, int direction, int p) { return direction == 0 ? rank : p - 1 - rank; }

// Greedy list schedule of every direction at once with unit costs (forward
// 1, backward 2, free transfers). queues[r][d] is the item order of rank r
// in direction d; an item also needs the same item on the upstream stage.
// Each step runs the ready queue head with the earliest start, ties going
// to the lower rank and then the lower direction.
std::vector<std::vector<Slot>> JointSlots(const std::vector<std::vector<std::vector<Item>>>& queues, int p) {
  const int directions = static_cast<int>(queues.front().size());
  std::map<std::tuple<int, int, bool, int>, double> finished;  // (direction, stage, forward, mb)
  std::vector<std::vector<size_t>> head(p, std::vector<size_t>(directions, 0));
  std::vector<double> free(p, 0.0);
  std::vector<std::vector<Slot>> slots(p);
  size_t total = 0;
  for (const auto& r : queues) {
    for (const auto& q : r) total += q.size();
  }
  for (size_t step = 0; step < total; ++step) {
    int best_r = -1, best_d = -1;
    double best_t = 0;
    for (int r = 0; r < p; ++r) {
      for (int d = 0; d < directions; ++d) {
        if (head[r][d] >= queues[r][d].size()) continue;
        const Item& it = queues[r][d][head[r][d]];
        const int stage = StageOf(r, d, p);
        const int up = it.forward ? stage - 1 : stage + 1;
        double t = free[r];
        if (up >= 0 && up < p) {
          auto f = finished.find({d, up, it.forward, it.mb});
          if (f == finished.end()) continue;
          t = std::max(t, f->second);
        }
        if (best_r < 0 || t < best_t) {
          best_r = r;
          best_d = d;
          best_t = t;
        }
      }
    }
    if (best_r < 0) throw ConfigError("pipeline item order has no feasible execution");
    const Item& it = queues[best_r][best_d][head[best_r][best_d]++];
    const int stage = StageOf(best_r, best_d, p);
    const double end = best_t + (it.forward ? 1.0 : 2.0);
    free[best_r] = end;
    finished[{best_d, stage, it.forward, it.mb}] = end;
    slots[best_r].push_back({it, stage, best_t, end});
  }
  return slots;
}

// Program order key. Transfers sort by their ideal time and key on both
// ends, so the send and recv streams of neighbors agree on order.
struct OrderKey {
  double time = 0;
  int cls = 0;  // 0 transfer, 1 work
  std::string key;
  int seq = 0;

  bool operator<(const OrderKey& o) const { return std::tie(time, cls, key, seq) < std::tie(o.time, o.cls, o.key, o.seq); }
};

struct BlockInfo {
  std::string x, y, seed, dx;
  std::vector<int> forward, backward, optimizer;
};

BlockInfo Analyze(const OperatorGraph& g) {
  BlockInfo info;
  if (g.nodes.empty()) return info;
  ir::TensorTable table(g);
  for (const auto& in : g.inputs) {
    if (in.meta.role != ir::TensorRole::kActivation) continue;
    bool read_forward = false;
    for (int c : table.Consumers(in.name)) read_forward |= g.nodes[c].phase == Phase::kForward;
    if (read_forward) {
      info.x = in.name;
      break;
    }
  }
  for (const auto& out : g.outputs) {
    int p = table.Producer(out);
    if (p >= 0 && g.nodes[p].phase == Phase::kForward) {
      info.y = out;
      break;
    }
  }
  for (int i = 0; i < static_cast<int>(g.nodes.size()); ++i) {
    switch (g.nodes[i].phase) {
      case Phase::kForward:
        info.forward.push_back(i);
        break;
      case Phase::kBackward:
        info.backward.push_back(i);
        break;
      case Phase::kOptimizer:
        info.optimizer.push_back(i);
        break;
    }
  }
  if (!info.backward.empty() && !info.y.empty()) {
    info.seed = ir::SeedName(info.y);
    if (!table.Contains(info.seed)) info.seed.clear();
    if (!info.x.empty()) {
      const ir::TensorMeta& xm = table.Meta(info.x);
      for (const auto& out : g.outputs) {
        int p = table.Producer(out);
        const ir::TensorMeta& m = table.Meta(out);
        if (p >= 0 && g.nodes[p].phase == Phase::kBackward && m.role != ir::TensorRole::kGradient &&
            m.shape == xm.shape) {
          info.dx = out;
          break;
        }
      }
    }
  }
  return info;
}

class RankEmitter {
 public:
  RankEmitter(const ScheduleProgram& program, const std::vector<StageSpec>& stages,
              const std::vector<BlockInfo>& infos, RankProgram& out)
      : program_(program), stages_(stages), infos_(infos), out_(out) {}

  // `stage` is the position along the item's direction; neighbors are
  // ranks. `start` is the ideal start of the item, `recv_time` the ideal
  // end of the upstream item and `send_time` the ideal end of this one.
  void Forward(int stage, int mb, bool first, bool last, int prev_rank, int next_rank, double start,
               double recv_time, double send_time) {
    const StageSpec& spec = stages_[stage];
    const BlockInfo& info = infos_[stage];
    work_time_ = start;
    int recv = -1;
    if (!first) {
      recv = P2p(SegmentType::kRecv, "recv_act", Key("act", mb, stage), prev_rank, spec, mb, Phase::kForward,
                 recv_time);
    }
    int last_seg = recv;
    if (spec.block.nodes.empty()) {
      last_seg = Fixed("forward", spec.forward, mb, Phase::kForward, recv);
    } else {
      if (recv >= 0) producer_[{stage, mb, 0, info.x}] = recv;
      for (int l = 0; l < spec.layers; ++l) {
        if (l > 0) Alias(stage, mb, l, info.x, l - 1, info.y);
        for (int i : info.forward) EmitNode(stage, mb, l, i);
      }
      last_seg = Lookup(stage, mb, static_cast<int>(spec.layers) - 1, info.y);
    }
    if (!last) {
      int send = P2p(SegmentType::kSend, "send_act", Key("act", mb, stage + 1), next_rank, spec, mb, Phase::kForward,
                     send_time);
      if (last_seg >= 0) out_.segments[send].deps.push_back(last_seg);
    }
  }

  void Backward(int stage, int mb, bool first, bool last, int prev_rank, int next_rank, bool sync, double start,
                double recv_time, double send_time) {
    const StageSpec& spec = stages_[stage];
    const BlockInfo& info = infos_[stage];
    work_time_ = start;
    int recv = -1;
    if (!last) {
      recv = P2p(SegmentType::kRecv, "recv_grad", Key("grad", mb, stage), next_rank, spec, mb, Phase::kBackward,
                 recv_time);
    }
    int last_seg = recv;
    const int layers = static_cast<int>(spec.layers);
    if (spec.block.nodes.empty()) {
      last_seg = Fixed("backward", spec.backward, mb, Phase::kBackward, recv);
    } else {
      if (recv >= 0 && !info.seed.empty()) producer_[{stage, mb, layers - 1, info.seed}] = recv;
      for (int l = layers - 1; l >= 0; --l) {
        if (l < layers - 1) Alias(stage, mb, l, info.seed, l + 1, info.dx);
        for (int i : info.backward) {
          if (!sync && spec.block.nodes[i].attrs.GetInt(ir::attr::kDpSync)) continue;
          EmitNode(stage, mb, l, i);
        }
        if (sync) {
          for (int i : info.optimizer) EmitNode(stage, mb, l, i);
        }
      }
      last_seg = info.dx.empty() ? static_cast<int>(out_.segments.size()) - 1 : Lookup(stage, mb, 0, info.dx);
    }
    if (!first) {
      int send = P2p(SegmentType::kSend, "send_grad", Key("grad", mb, stage - 1), prev_rank, spec, mb,
                     Phase::kBackward, send_time);
      if (last_seg >= 0) out_.segments[send].deps.push_back(last_seg);
    }
  }

  // Reorders segments by their order keys, remapping deps.
  void Finish() {
    std::vector<int> order(out_.segments.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return keys_[a] < keys_[b]; });
    std::vector<int> where(order.size());
    for (size_t k = 0; k < order.size(); ++k) where[order[k]] = static_cast<int>(k);
    std::vector<Segment> sorted;
    for (int i : order) {
      Segment s = std::move(out_.segments[i]);
      for (int& d : s.deps) d = where[d];
      std::sort(s.deps.begin(), s.deps.end());
      sorted.push_back(std::move(s));
    }
    out_.segments = std::move(sorted);
  }

 private:
  using Slot = std::tuple<int, int, int, std::string>;

  static std::string Key(const char* what, int mb, int stage) {
    return std::string(what) + "/mb" + std::to_string(mb) + "/s" + std::to_string(stage);
  }

  int Push(Segment s, OrderKey key) {
    key.seq = static_cast<int>(out_.segments.size());
    keys_.push_back(std::move(key));
    out_.segments.push_back(std::move(s));
    return static_cast<int>(out_.segments.size()) - 1;
  }

  int PushWork(Segment s) { return Push(std::move(s), {work_time_, 1, "", 0}); }

  int P2p(SegmentType type, const char* name, std::string key, int peer, const StageSpec& spec, int mb, Phase phase,
          double time) {
    Segment s;
    s.name = std::string(name) + "/mb" + std::to_string(mb);
    s.type = type;
    s.stream = type == SegmentType::kSend ? kSendStream : kRecvStream;
    s.fixed = spec.p2p_time;
    s.microbatch = mb;
    s.phase = phase;
    s.key = key;
    s.peer = peer;
    s.bytes = spec.boundary_bytes;
    return Push(std::move(s), {time, 0, std::move(key), 0});
  }

  int Fixed(const char* name, Duration d, int mb, Phase phase, int dep) {
    Segment s;
    s.name = std::string(name) + "/mb" + std::to_string(mb);
    s.fixed = d;
    s.microbatch = mb;
    s.phase = phase;
    if (dep >= 0) s.deps.push_back(dep);
    return PushWork(std::move(s));
  }

  int Lookup(int stage, int mb, int layer, const std::string& ref) const {
    auto it = producer_.find({stage, mb, layer, ref});
    return it == producer_.end() ? -1 : it->second;
  }

  void Alias(int stage, int mb, int layer, const std::string& ref, int from_layer, const std::string& from_ref) {
    if (ref.empty()) return;
    int p = Lookup(stage, mb, from_layer, from_ref);
    if (p >= 0) producer_[{stage, mb, layer, ref}] = p;
  }

  void EmitNode(int stage, int mb, int layer, int i) {
    const ir::OpNode& n = program_.graphs[stage].nodes[i];
    Segment s;
    s.name = n.id;
    s.graph = stage;
    s.node = i;
    s.microbatch = mb;
    s.layer = layer;
    s.phase = n.phase;
    if (ir::IsCollective(n.kind)) {
      s.type = SegmentType::kCollective;
      s.stream = kCommStream;
      s.group = GroupMembers(n, out_.rank);
      s.key = "coll/s" + std::to_string(stage) + "/mb" + std::to_string(mb) + "/l" + std::to_string(layer) + "/" + n.id;
    }
    std::set<int> deps;
    for (const auto& ref : n.inputs) {
      int p = Lookup(stage, mb, layer, ref);
      if (p >= 0) deps.insert(p);
    }
    s.deps.assign(deps.begin(), deps.end());
    int idx = PushWork(std::move(s));
    for (size_t k = 0; k < n.outputs.size(); ++k) producer_[{stage, mb, layer, n.OutputName(k)}] = idx;
  }

  const ScheduleProgram& program_;
  const std::vector<StageSpec>& stages_;
  const std::vector<BlockInfo>& infos_;
  RankProgram& out_;
  std::map<Slot, int> producer_;
  std::vector<OrderKey> keys_;
  double work_time_ = 0;
};

}  // namespace

std::string_view SegmentTypeName(SegmentType t) {
  switch (t) {
    case SegmentType::kCompute:
      return "compute";
    case SegmentType::kCollective:
      return "collective";
    case SegmentType::kSend:
      return "send";
    case SegmentType::kRecv:
      return "recv";
  }
  return "compute";
}

std::optional<SegmentType> ParseSegmentType(std::string_view name) {
  for (auto t : {SegmentType::kCompute, SegmentType::kCollective, SegmentType::kSend, SegmentType::kRecv}) {
    if (SegmentTypeName(t) == name) return t;
  }
  return std::nullopt;
}

bool IsCommStream(int stream) { return stream != kComputeStream; }

const RankProgram* ScheduleProgram::FindRank(int rank) const {
  for (const auto& r : ranks) {
    if (r.rank == rank) return &r;
  }
  return nullptr;
}

std::vector<int> GroupMembers(const ir::OpNode& n, int rank) {
  const int size = static_cast<int>(std::max<int64_t>(1, n.attrs.GetInt(ir::attr::kGroupSize, 1)));
  const int stride = static_cast<int>(std::max<int64_t>(1, n.attrs.GetInt(ir::attr::kGroupStride, 1)));
  const int base = rank - ((rank / stride) % size) * stride;
  std::vector<int> members;
  for (int i = 0; i < size; ++i) members.push_back(base + i * stride);
  return members;
}

ScheduleProgram BuildPpSchedule(const std::vector<StageSpec>& stages, const ParallelismConfig& cfg) {
  const int p = cfg.pp;
  const int m = cfg.microbatches;
  if (static_cast<int>(stages.size()) != p) {
    throw ConfigError("expected " + std::to_string(p) + " stages, got " + std::to_string(stages.size()));
  }
  if (m < 1) throw ConfigError("microbatches must be positive");
  bool training = true;
  for (const auto& s : stages) {
    if (s.layers < 1) throw ConfigError("every stage needs at least one layer");
    training &= s.training;
  }
  const bool dual = cfg.pp_schedule == PpSchedule::kDualPipe;
  if (training && !dual && m < p) {
    throw ConfigError("1F1B needs microbatches >= pp (" + std::to_string(m) + " < " + std::to_string(p) + ")");
  }
  if (dual && (p % 2 != 0 || m % 2 != 0)) throw ConfigError("dualpipe needs an even pp and microbatch count");

  ScheduleProgram program;
  std::vector<BlockInfo> infos;
  for (const auto& s : stages) {
    program.graphs.push_back(s.block);
    infos.push_back(Analyze(s.block));
  }
  std::vector<int> rank_of(p);
  for (int s = 0; s < p; ++s) rank_of[s] = RankOf(cfg, {0, 0, s});

  const int directions = dual ? 2 : 1;
  std::vector<std::vector<int>> mbs(directions);
  for (int i = 0; i < m; ++i) mbs[dual ? i * 2 / m : 0].push_back(i);
  std::vector<std::vector<std::vector<Item>>> queues(p, std::vector<std::vector<Item>>(directions));
  for (int r = 0; r < p; ++r) {
    for (int d = 0; d < directions; ++d) queues[r][d] = StageOrder(StageOf(r, d, p), p, mbs[d], training, d);
  }
  const auto slots = JointSlots(queues, p);
  std::map<std::tuple<int, int, bool, int>, double> ideal_end;  // (direction, stage, forward, mb)
  for (const auto& rs : slots) {
    for (const auto& sl : rs) ideal_end[{sl.item.pipeline, sl.stage, sl.item.forward, sl.item.mb}] = sl.end;
  }
  for (int r = 0; r < p; ++r) {
    RankProgram prog;
    prog.rank = rank_of[r];
    RankEmitter emit(program, stages, infos, prog);
    std::vector<int> last_backward(directions, -1);
    for (const auto& sl : slots[r]) {
      if (!sl.item.forward) last_backward[sl.item.pipeline] = sl.item.mb;
    }
    for (const auto& sl : slots[r]) {
      const int d = sl.item.pipeline;
      const int s = sl.stage;
      auto rank_at = [&](int stage) { return rank_of[StageOf(stage, d, p)]; };
      const int prev = s > 0 ? rank_at(s - 1) : -1;
      const int next = s < p - 1 ? rank_at(s + 1) : -1;
      const int up = sl.item.forward ? s - 1 : s + 1;
      const double recv_time = up >= 0 && up < p ? ideal_end.at({d, up, sl.item.forward, sl.item.mb}) : sl.start;
      if (sl.item.forward) {
        emit.Forward(s, sl.item.mb, s == 0, s == p - 1, prev, next, sl.start, recv_time, sl.end);
      } else {
        emit.Backward(s, sl.item.mb, s == 0, s == p - 1, prev, next, sl.item.mb == last_backward[d], sl.start,
                      recv_time, sl.end);
      }
    }
    emit.Finish();
    program.ranks.push_back(std::move(prog));
  }
  return program;
}

std::vector<std::string> CheckPairing(const ScheduleProgram& p) {
  using End = std::tuple<int, int, std::string>;  // (from, to, key)
  std::map<End, int> sends, recvs;
  for (const auto& r : p.ranks) {
    for (const auto& s : r.segments) {
      if (s.type == SegmentType::kSend) ++sends[{r.rank, s.peer, s.key}];
      if (s.type == SegmentType::kRecv) ++recvs[{s.peer, r.rank, s.key}];
    }
  }
  std::vector<std::string> problems;
  auto describe = [](const End& e) {
    return std::to_string(std::get<0>(e)) + "->" + std::to_string(std::get<1>(e)) + " '" + std::get<2>(e) + "'";
  };
  for (const auto& [e, n] : sends) {
    auto it = recvs.find(e);
    if (it == recvs.end() || it->second != n || n != 1) problems.push_back("unmatched send " + describe(e));
  }
  for (const auto& [e, n] : recvs) {
    if (!sends.count(e)) problems.push_back("unmatched recv " + describe(e));
  }
  return problems;
}

int PeakInFlight(const RankProgram& p) {
  std::set<int> started, released;
  int live = 0, peak = 0;
  for (const auto& s : p.segments) {
    if (s.stream != kComputeStream) continue;
    if (s.phase == Phase::kForward && started.insert(s.microbatch).second) peak = std::max(peak, ++live);
    if (s.phase == Phase::kBackward && released.insert(s.microbatch).second) --live;
  }
  return peak;
}

}  // namespace charon::parallel
