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


#include "charon/engines/roofline.h"

#include <algorithm>

#include "charon/ir/cost.h"

namespace charon::engines {

ir::Precision NodePrecision(const ir::OpNode& n, std::span<const ir::TensorMeta> inputs) {
  if (!n.outputs.empty()) return n.outputs[0].precision;
  if (!inputs.empty()) return inputs[0].precision;
  return ir::Precision::kBF16;
}

Duration RooflineTime(double flops, double bytes, ir::Precision precision, const HardwareSpec& hw) {
  const double peak = hw.PeakFlops(precision);
  const double seconds = std::max(flops / peak, bytes / hw.memory_bandwidth);
  return Seconds(seconds + hw.launch_overhead_s);
}

Duration RooflineTime(const ir::OpNode& n, std::span<const ir::TensorMeta> inputs, const HardwareSpec& hw) {
  return RooflineTime(static_cast<double>(ir::OpFlops(n, inputs)), static_cast<double>(ir::OpBytes(n, inputs)),
                      NodePrecision(n, inputs), hw);
}

}  // namespace charon::engines
