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


#ifndef CHARON_SCHED_CONTENTION_H_
#define CHARON_SCHED_CONTENTION_H_

#include <vector>

#include "charon/common/units.h"

namespace charon::sched {

// One step of a transfer: a handshake of `latency` followed by `bytes`
// streamed over `link` at up to `demand` bytes/s.
struct FluidPhase {
  int link = 0;
  Duration latency{0};
  double bytes = 0;
  double demand = 1;
};

struct FluidTransfer {
  Duration start{0};
  std::vector<FluidPhase> phases;
};

struct FluidResult {
  std::vector<Duration> finish;
  // Bytes integrated over time per transfer, summed over its phases.
  std::vector<double> delivered;
};

// Progress-based integration of concurrent transfers. While n transfers
// stream over a link of capacity B, transfer i receives
// B * d_i / max(B, sum d), so a lone transfer runs at its own demand and an
// oversubscribed link divides in proportion to demand. Phases of a transfer
// run back to back. Throws SimulationError on a non-positive capacity or
// demand, or a link index out of range.
FluidResult IntegrateFluid(const std::vector<FluidTransfer>& transfers, const std::vector<double>& capacity);

}  // namespace charon::sched

#endif  // CHARON_SCHED_CONTENTION_H_
