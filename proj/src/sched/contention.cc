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


#include "charon/sched/contention.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "charon/common/status.h"

namespace charon::sched {
namespace {

struct State {
  size_t phase = 0;
  double latency_left = 0;  // ns
  double bytes_left = 0;
  bool started = false;
  bool done = false;
};

}  // namespace

FluidResult IntegrateFluid(const std::vector<FluidTransfer>& transfers, const std::vector<double>& capacity) {
  for (double c : capacity) {
    if (!(c > 0)) throw SimulationError("link capacity must be positive");
  }
  const size_t n = transfers.size();
  FluidResult result;
  result.finish.assign(n, Duration{0});
  result.delivered.assign(n, 0.0);
  std::vector<State> st(n);
  for (size_t i = 0; i < n; ++i) {
    for (const auto& p : transfers[i].phases) {
      if (p.link < 0 || p.link >= static_cast<int>(capacity.size())) {
        throw SimulationError("transfer " + std::to_string(i) + " uses unknown link " + std::to_string(p.link));
      }
      if (!(p.demand > 0)) throw SimulationError("transfer " + std::to_string(i) + " has non-positive demand");
    }
  }
  // Enters the next phase with work left, completing the transfer if none.
  auto settle = [&](size_t i, double now) {
    State& s = st[i];
    const auto& phases = transfers[i].phases;
    while (s.latency_left <= 0 && s.bytes_left <= 0) {
      if (++s.phase >= phases.size()) {
        s.done = true;
        result.finish[i] = Duration{now};
        return;
      }
      s.latency_left = phases[s.phase].latency.count();
      s.bytes_left = phases[s.phase].bytes;
    }
  };

  double now = 0;
  size_t remaining = n;
  std::vector<double> demand(capacity.size());
  std::vector<double> rate(n);
  while (remaining > 0) {
    for (size_t i = 0; i < n; ++i) {
      State& s = st[i];
      if (!s.started && transfers[i].start.count() <= now) {
        s.started = true;
        if (transfers[i].phases.empty()) {
          s.done = true;
          result.finish[i] = Duration{now};
          --remaining;
          continue;
        }
        s.latency_left = transfers[i].phases[0].latency.count();
        s.bytes_left = transfers[i].phases[0].bytes;
        settle(i, now);
        if (s.done) --remaining;
      }
    }
    if (remaining == 0) break;
    std::fill(demand.begin(), demand.end(), 0.0);
    for (size_t i = 0; i < n; ++i) {
      const State& s = st[i];
      if (s.started && !s.done && s.latency_left <= 0) {
        const FluidPhase& p = transfers[i].phases[s.phase];
        demand[p.link] += p.demand;
      }
    }
    double horizon = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < n; ++i) {
      const State& s = st[i];
      rate[i] = 0;
      if (!s.started) {
        horizon = std::min(horizon, transfers[i].start.count() - now);
        continue;
      }
      if (s.done) continue;
      if (s.latency_left > 0) {
        horizon = std::min(horizon, s.latency_left);
        continue;
      }
      const FluidPhase& p = transfers[i].phases[s.phase];
      const double cap = capacity[p.link];
      rate[i] = cap * p.demand / std::max(cap, demand[p.link]) * 1e-9;  // bytes per ns
      horizon = std::min(horizon, s.bytes_left / rate[i]);
    }
    if (!std::isfinite(horizon)) throw SimulationError("contention integrator stalled");
    now += horizon;
    for (size_t i = 0; i < n; ++i) {
      State& s = st[i];
      if (!s.started || s.done) continue;
      if (s.latency_left > 0) {
        s.latency_left -= horizon;
        if (s.latency_left <= 1e-9) s.latency_left = 0;
      } else {
        const double moved = std::min(s.bytes_left, rate[i] * horizon);
        result.delivered[i] += moved;
        s.bytes_left -= moved;
        // Snap float residue left by the event that drained this phase.
        if (s.bytes_left <= 1e-9 * std::max(1.0, transfers[i].phases[s.phase].bytes)) {
          result.delivered[i] += s.bytes_left;
          s.bytes_left = 0;
        }
      }
      settle(i, now);
      if (s.done) --remaining;
    }
  }
  return result;
}

}  // namespace charon::sched
