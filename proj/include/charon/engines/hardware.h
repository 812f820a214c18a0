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


#ifndef CHARON_ENGINES_HARDWARE_H_
#define CHARON_ENGINES_HARDWARE_H_

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "charon/ir/tensor.h"

namespace charon::engines {

enum class TierKind { kRing, kSwitch, kMesh };

std::string_view TierKindName(TierKind k);

// One level of the interconnect hierarchy. Ranks are grouped into
// consecutive blocks of `group_size`; each block is one instance of the
// tier (an NVLink island, a rail, the whole fabric...). Tiers are listed
// innermost first and each group_size divides the next.
struct LinkTier {
  std::string name;
  TierKind kind = TierKind::kRing;
  int64_t group_size = 1;
  double alpha_s = 0.0;         // per-hop handshake latency
  double bandwidth = 1.0;       // effective per-link bytes/s
  int64_t links_per_node = 1;
};

struct HardwareSpec {
  std::string device_id;
  std::map<ir::Precision, double> peak_flops;  // FLOP/s
  double memory_bandwidth = 1.0;               // bytes/s
  int64_t memory_capacity = 0;                 // bytes
  double launch_overhead_s = 2e-6;
  double tdp_w = 0.0;
  std::vector<LinkTier> tiers;

  // Throws ConfigError when the precision has no entry.
  double PeakFlops(ir::Precision p) const;
};

// Throws ConfigError on non-positive rates or a broken tier hierarchy.
void ValidateHardware(const HardwareSpec& hw);

inline constexpr std::string_view kHardwareVersion = "charon-hw/1";

HardwareSpec ParseHardware(std::string_view text);
HardwareSpec LoadHardwareFile(const std::string& path);
std::string EmitHardware(const HardwareSpec& hw);

}  // namespace charon::engines

#endif  // CHARON_ENGINES_HARDWARE_H_
