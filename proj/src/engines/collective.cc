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


#include "charon/engines/collective.h"

#include <cmath>

#include "charon/common/status.h"
#include "charon/ir/cost.h"

namespace charon::engines {
namespace {

using ir::OpKind;

int64_t CeilLog2(int64_t p) {
  int64_t steps = 0;
  while ((int64_t{1} << steps) < p) ++steps;
  return steps;
}

// Single-tier closed forms.
LinkPhase FlatPhase(OpKind kind, double s, int64_t p, int tier_index, const LinkTier& tier,
                    CollectiveAlgo algo) {
  LinkPhase ph;
  ph.tier = tier_index;
  ph.bandwidth = tier.bandwidth;
  const double a = tier.alpha_s;
  const double steps = static_cast<double>(p - 1);
  switch (kind) {
    case OpKind::kAllReduce:
      if (algo == CollectiveAlgo::kTree) {
        const double hops = 2.0 * static_cast<double>(CeilLog2(p));
        ph.latency = Seconds(hops * a);
        ph.bytes = hops * s;
      } else {
        ph.latency = Seconds(2 * steps * a);
        ph.bytes = 2 * steps * s / static_cast<double>(p);
      }
      break;
    case OpKind::kAllGather:
    case OpKind::kReduceScatter:
      ph.latency = Seconds(steps * a);
      ph.bytes = steps * s / static_cast<double>(p);
      break;
    case OpKind::kAllToAll:
      ph.latency = Seconds(tier.kind == TierKind::kSwitch ? a : steps * a);
      ph.bytes = steps * s / static_cast<double>(p);
      break;
    case OpKind::kSend:
    case OpKind::kRecv:
      ph.latency = Seconds(a);
      ph.bytes = s;
      break;
    default:
      throw ConfigError("not a communication kind: " + std::string(ir::KindName(kind)));
  }
  return ph;
}

}  // namespace

CollectiveCost CollectiveTime(OpKind kind, double payload_bytes, CommGroup group, const HardwareSpec& hw,
                              CollectiveAlgo algo) {
  CollectiveCost cost;
  const int64_t p = group.size;
  if (p <= 1 || kind == OpKind::kNoop) return cost;
  if (hw.tiers.empty()) throw TopologyError("hardware '" + hw.device_id + "' has no link tiers");
  if (kind == OpKind::kAllReduce && algo == CollectiveAlgo::kRing) {
    // Priced as its reduce_scatter and all_gather halves so the identity
    // holds bit for bit.
    CollectiveCost rs = CollectiveTime(OpKind::kReduceScatter, payload_bytes, group, hw, algo);
    CollectiveCost ag = CollectiveTime(OpKind::kAllGather, payload_bytes, group, hw, algo);
    rs.phases.insert(rs.phases.end(), ag.phases.begin(), ag.phases.end());
    rs.time = rs.time + ag.time;
    return rs;
  }
  const int64_t span = (p - 1) * group.stride + 1;
  int outer = -1;
  for (size_t i = 0; i < hw.tiers.size(); ++i) {
    if (hw.tiers[i].group_size >= span) {
      outer = static_cast<int>(i);
      break;
    }
  }
  if (outer < 0) {
    throw TopologyError("group of " + std::to_string(p) + " ranks (stride " + std::to_string(group.stride) +
                        ") spans " + std::to_string(span) + " ranks, beyond the outermost tier '" +
                        hw.tiers.back().name + "' (" + std::to_string(hw.tiers.back().group_size) + ")");
  }
  // Members sharing one instance of the next-inner tier.
  int64_t m = 1;
  if (outer > 0) {
    m = std::min<int64_t>(p, std::max<int64_t>(1, hw.tiers[outer - 1].group_size / group.stride));
  }
  const bool hierarchical = m > 1 && m < p && p % m == 0 && kind != OpKind::kAllToAll &&
                            kind != OpKind::kSend && kind != OpKind::kRecv;
  if (!hierarchical) {
    cost.phases.push_back(FlatPhase(kind, payload_bytes, p, outer, hw.tiers[outer], algo));
  } else {
    const int inner = outer - 1;
    const LinkTier& in_tier = hw.tiers[inner];
    const LinkTier& out_tier = hw.tiers[outer];
    const int64_t leaders = p / m;
    const double s = payload_bytes;
    if (kind == OpKind::kAllReduce) {
      cost.phases.push_back(FlatPhase(OpKind::kReduceScatter, s, m, inner, in_tier, algo));
      cost.phases.push_back(FlatPhase(OpKind::kAllReduce, s / m, leaders, outer, out_tier, algo));
      cost.phases.push_back(FlatPhase(OpKind::kAllGather, s, m, inner, in_tier, algo));
    } else if (kind == OpKind::kReduceScatter) {
      cost.phases.push_back(FlatPhase(OpKind::kReduceScatter, s, m, inner, in_tier, algo));
      cost.phases.push_back(FlatPhase(OpKind::kReduceScatter, s / m, leaders, outer, out_tier, algo));
    } else {
      cost.phases.push_back(FlatPhase(OpKind::kAllGather, s / m, leaders, outer, out_tier, algo));
      cost.phases.push_back(FlatPhase(OpKind::kAllGather, s, m, inner, in_tier, algo));
    }
  }
  for (const auto& ph : cost.phases) cost.time += ph.Time();
  return cost;
}

CollectiveCost CollectiveTime(const ir::OpNode& n, std::span<const ir::TensorMeta> inputs,
                              const HardwareSpec& hw, CollectiveAlgo default_algo) {
  CommGroup group;
  group.size = n.attrs.GetInt(ir::attr::kGroupSize, 1);
  group.stride = n.attrs.GetInt(ir::attr::kGroupStride, 1);
  if (n.kind == OpKind::kSend || n.kind == OpKind::kRecv) group.size = std::max<int64_t>(group.size, 2);
  CollectiveAlgo algo = default_algo;
  std::string name = n.attrs.GetString(ir::attr::kAlgo);
  if (name == "tree") algo = CollectiveAlgo::kTree;
  if (name == "ring") algo = CollectiveAlgo::kRing;
  // All-gather payload is the gathered (output) size; the others move
  // their input.
  double bytes = static_cast<double>(ir::OpBytes(n, inputs));
  return CollectiveTime(n.kind, bytes, group, hw, algo);
}

}  // namespace charon::engines
