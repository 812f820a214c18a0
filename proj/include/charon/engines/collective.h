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


#ifndef CHARON_ENGINES_COLLECTIVE_H_
#define CHARON_ENGINES_COLLECTIVE_H_

#include <span>
#include <vector>

#include "charon/common/units.h"
#include "charon/engines/hardware.h"
#include "charon/ir/op.h"
#include "charon/ir/tensor.h"

namespace charon::engines {

enum class CollectiveAlgo { kRing, kTree };

// Members are ranks base, base+stride, ..., base+(size-1)*stride.
struct CommGroup {
  int64_t size = 1;
  int64_t stride = 1;
};

// A step of a collective that occupies one link tier: a fixed handshake
// part followed by `bytes` streamed at `bandwidth` bytes/s. Phases of one
// collective run back to back.
struct LinkPhase {
  int tier = 0;
  Duration latency{0};
  double bytes = 0;
  double bandwidth = 1;

  Duration Time() const { return latency + Seconds(bytes / bandwidth); }
};

struct CollectiveCost {
  Duration time{0};
  std::vector<LinkPhase> phases;
};

// Closed-form alpha-beta cost of one collective with `payload_bytes` S:
//   ring all_reduce            2(p-1)(a + S/(pB))
//   all_gather/reduce_scatter  (p-1)(a + S/(pB))
//   tree all_reduce            2 ceil(log2 p)(a + S/B)
//   all_to_all                 ring: (p-1)(a + S/(pB)); switch: a + (p-1)S/(pB)
//   send/recv                  a + S/B
// Ring all_reduce is priced as its reduce_scatter half followed by its
// all_gather half. A group that straddles two tiers runs hierarchically
// (intra-tier then inter-tier reduce_scatter, the reverse for all_gather).
// Throws TopologyError when the group spans beyond the outermost tier.
CollectiveCost CollectiveTime(ir::OpKind kind, double payload_bytes, CommGroup group,
                              const HardwareSpec& hw, CollectiveAlgo algo = CollectiveAlgo::kRing);

// Reads group_size, group_stride, algo and payload from the node.
CollectiveCost CollectiveTime(const ir::OpNode& n, std::span<const ir::TensorMeta> inputs,
                              const HardwareSpec& hw, CollectiveAlgo default_algo = CollectiveAlgo::kRing);

}  // namespace charon::engines

#endif  // CHARON_ENGINES_COLLECTIVE_H_
