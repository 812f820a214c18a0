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


#include "charon/engines/calibrate.h"

#include <Eigen/Dense>
#include <cmath>

#include "charon/common/status.h"

namespace charon::engines {
namespace {

// Coefficients (c_alpha, c_beta) with T = c_alpha * alpha + c_beta / B.
std::pair<double, double> Coefficients(const LinkSample& s, ir::OpKind kind, CollectiveAlgo algo) {
  const double p = static_cast<double>(s.ranks);
  switch (kind) {
    case ir::OpKind::kAllReduce:
      if (algo == CollectiveAlgo::kTree) {
        const double hops = 2.0 * std::ceil(std::log2(p));
        return {hops, hops * s.bytes};
      }
      return {2 * (p - 1), 2 * (p - 1) * s.bytes / p};
    case ir::OpKind::kAllGather:
    case ir::OpKind::kReduceScatter:
    case ir::OpKind::kAllToAll:
      return {p - 1, (p - 1) * s.bytes / p};
    case ir::OpKind::kSend:
    case ir::OpKind::kRecv:
      return {1, s.bytes};
    default:
      throw ConfigError("cannot calibrate links from " + std::string(ir::KindName(kind)) + " samples");
  }
}

}  // namespace

LinkFit CalibrateLinks(std::span<const LinkSample> samples, ir::OpKind kind, CollectiveAlgo algo) {
  if (samples.size() < 2) throw ConfigError("link calibration needs at least two samples");
  const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd a(n, 2);
  Eigen::VectorXd t(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto [ca, cb] = Coefficients(samples[i], kind, algo);
    a(i, 0) = ca;
    a(i, 1) = cb;
    t(i) = samples[i].seconds;
  }
  // Column scaling keeps the normal equations well conditioned when bytes
  // and hop counts differ by many orders of magnitude.
  Eigen::Vector2d scale(a.col(0).norm(), a.col(1).norm());
  if (scale(0) == 0 || scale(1) == 0) throw ConfigError("link calibration samples are degenerate");
  Eigen::MatrixXd scaled = a;
  scaled.col(0) /= scale(0);
  scaled.col(1) /= scale(1);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
  if (qr.rank() < 2) throw ConfigError("link calibration samples do not determine both alpha and bandwidth");
  Eigen::Vector2d x = qr.solve(t);
  x = x.cwiseQuotient(scale);
  LinkFit fit;
  fit.alpha_s = x(0);
  fit.bandwidth = x(1) > 0 ? 1.0 / x(1) : INFINITY;
  Eigen::VectorXd r = a * x - t;
  fit.rms_residual_s = std::sqrt(r.squaredNorm() / static_cast<double>(n));
  return fit;
}

}  // namespace charon::engines
