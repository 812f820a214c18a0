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


#ifndef CHARON_ENGINES_ROOFLINE_H_
#define CHARON_ENGINES_ROOFLINE_H_

#include <span>

#include "charon/common/units.h"
#include "charon/engines/hardware.h"
#include "charon/ir/op.h"
#include "charon/ir/tensor.h"

namespace charon::engines {

// Precision a node computes in: that of its first output, else its first
// input, else BF16.
ir::Precision NodePrecision(const ir::OpNode& n, std::span<const ir::TensorMeta> inputs);

// max(flops / peak[precision], bytes / memory_bandwidth) + launch overhead.
// A fused node is one kernel, so it pays the launch overhead once.
Duration RooflineTime(const ir::OpNode& n, std::span<const ir::TensorMeta> inputs, const HardwareSpec& hw);

// Same formula on raw counts.
Duration RooflineTime(double flops, double bytes, ir::Precision precision, const HardwareSpec& hw);

}  // namespace charon::engines

#endif  // CHARON_ENGINES_ROOFLINE_H_
