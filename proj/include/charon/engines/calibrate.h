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


#ifndef CHARON_ENGINES_CALIBRATE_H_
#define CHARON_ENGINES_CALIBRATE_H_

#include <cstdint>
#include <span>

#include "charon/engines/collective.h"
#include "charon/ir/op.h"

namespace charon::engines {

// One measured collective: p ranks moving `bytes` took `seconds`.
struct LinkSample {
  int64_t ranks = 2;
  double bytes = 0;
  double seconds = 0;
};

struct LinkFit {
  double alpha_s = 0;
  double bandwidth = 0;
  double rms_residual_s = 0;  // root-mean-square misfit of the samples
};

// Least-squares fit of (alpha, 1/B) to the single-tier closed form of
// `kind` (ring all_reduce, all_gather, reduce_scatter, all_to_all on a
// ring tier, or send). Throws ConfigError for fewer than two samples or a
// degenerate design.
LinkFit CalibrateLinks(std::span<const LinkSample> samples, ir::OpKind kind = ir::OpKind::kAllReduce,
                       CollectiveAlgo algo = CollectiveAlgo::kRing);

}  // namespace charon::engines

#endif  // CHARON_ENGINES_CALIBRATE_H_
