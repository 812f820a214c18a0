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


#include "charon/engines/predictor.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "charon/common/status.h"
#include "charon/ir/cost.h"

namespace charon::engines {
namespace {

struct SplitChoice {
  int feature = -1;
  double threshold = 0;
  double score = 0;  // sum of squared errors after the split
};

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<FeatureVector>& x, const std::vector<double>& y, const ForestParams& params,
              std::mt19937_64& rng)
      : x_(x), y_(y), params_(params), rng_(rng) {}

  template <typename Tree>
  int Build(Tree& tree, std::vector<int>& rows, int depth) {
    const int index = static_cast<int>(tree.size());
    tree.emplace_back();
    double sum = 0;
    for (int r : rows) sum += y_[r];
    tree[index].value = sum / static_cast<double>(rows.size());
    if (depth >= params_.max_depth || static_cast<int>(rows.size()) < 2 * params_.min_leaf) return index;
    SplitChoice best = BestSplit(rows);
    if (best.feature < 0) return index;
    std::vector<int> left, right;
    for (int r : rows) (x_[r][best.feature] <= best.threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    tree[index].feature = best.feature;
    tree[index].threshold = best.threshold;
    int l = Build(tree, left, depth + 1);
    int r = Build(tree, right, depth + 1);
    tree[index].left = l;
    tree[index].right = r;
    return index;
  }

 private:
  SplitChoice BestSplit(const std::vector<int>& rows) {
    std::vector<int> features(kNumFeatures);
    std::iota(features.begin(), features.end(), 0);
    std::shuffle(features.begin(), features.end(), rng_);
    const int keep = std::max(1, static_cast<int>(std::ceil(params_.feature_fraction * kNumFeatures)));
    features.resize(keep);
    std::sort(features.begin(), features.end());

    double total = 0, total_sq = 0;
    for (int r : rows) {
      total += y_[r];
      total_sq += y_[r] * y_[r];
    }
    const double n = static_cast<double>(rows.size());
    const double parent = total_sq - total * total / n;
    SplitChoice best;
    best.score = parent - 1e-12 * std::max(1.0, std::abs(parent));
    std::vector<int> sorted = rows;
    for (int f : features) {
      std::sort(sorted.begin(), sorted.end(), [&](int a, int b) {
        return x_[a][f] != x_[b][f] ? x_[a][f] < x_[b][f] : a < b;
      });
      double left_sum = 0, left_sq = 0;
      for (size_t i = 0; i + 1 < sorted.size(); ++i) {
        const double v = y_[sorted[i]];
        left_sum += v;
        left_sq += v * v;
        const double lo = x_[sorted[i]][f];
        const double hi = x_[sorted[i + 1]][f];
        const int left_n = static_cast<int>(i + 1);
        const int right_n = static_cast<int>(sorted.size()) - left_n;
        if (lo == hi || left_n < params_.min_leaf || right_n < params_.min_leaf) continue;
        const double right_sum = total - left_sum;
        const double right_sq = total_sq - left_sq;
        const double sse = (left_sq - left_sum * left_sum / left_n) + (right_sq - right_sum * right_sum / right_n);
        if (sse < best.score) {
          best.score = sse;
          best.feature = f;
          best.threshold = 0.5 * (lo + hi);
        }
      }
    }
    return best;
  }

  const std::vector<FeatureVector>& x_;
  const std::vector<double>& y_;
  const ForestParams& params_;
  std::mt19937_64& rng_;
};

double SafeLog2(double v) { return std::log2(std::max(v, 1.0)); }

double Linear(const std::array<double, kNumFeatures + 1>& w, const FeatureVector& x) {
  double v = w[0];
  for (int i = 0; i < kNumFeatures; ++i) v += w[i + 1] * x[i];
  return v;
}

// Ridge regression on standardized features. Several features are exact
// linear combinations of others (intensity = FLOPs - bytes in log space),
// so an unregularized fit yields huge cancelling weights.
std::array<double, kNumFeatures + 1> FitLinear(const std::vector<FeatureVector>& x, const std::vector<double>& y) {
  constexpr double kRidge = 1e-3;
  const Eigen::Index n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd a(n, kNumFeatures);
  Eigen::VectorXd b(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (int i = 0; i < kNumFeatures; ++i) a(r, i) = x[r][i];
    b(r) = y[r];
  }
  const Eigen::RowVectorXd mean = a.colwise().mean();
  a.rowwise() -= mean;
  const double y_mean = b.mean();
  b.array() -= y_mean;
  Eigen::RowVectorXd scale = (a.colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt();
  for (int i = 0; i < kNumFeatures; ++i) {
    if (scale(i) < 1e-12) {
      scale(i) = 0;
      a.col(i).setZero();
    } else {
      a.col(i) /= scale(i);
    }
  }
  Eigen::MatrixXd gram = a.transpose() * a;
  gram.diagonal().array() += kRidge * static_cast<double>(n);
  const Eigen::VectorXd w = gram.ldlt().solve(a.transpose() * b);
  std::array<double, kNumFeatures + 1> out{};
  out[0] = y_mean;
  for (int i = 0; i < kNumFeatures; ++i) {
    if (scale(i) == 0) continue;
    out[i + 1] = w(i) / scale(i);
    out[0] -= out[i + 1] * mean(i);
  }
  return out;
}

}  // namespace

FeatureVector ExtractFeatures(const ir::OpNode& n, std::span<const ir::TensorMeta> inputs) {
  FeatureVector f{};
  for (size_t i = 0; i < 3 && i < inputs.size(); ++i) {
    const auto& shape = inputs[i].shape;
    for (size_t d = 0; d < 4 && d < shape.size(); ++d) {
      f[i * 4 + 3 - d] = SafeLog2(static_cast<double>(shape[shape.size() - 1 - d]));
    }
  }
  ir::Precision p = n.outputs.empty() ? (inputs.empty() ? ir::Precision::kBF16 : inputs[0].precision)
                                      : n.outputs[0].precision;
  f[12] = static_cast<double>(ir::ElementSize(p));
  const double flops = static_cast<double>(ir::OpFlops(n, inputs));
  const double bytes = static_cast<double>(ir::OpBytes(n, inputs));
  f[13] = SafeLog2(flops);
  f[14] = SafeLog2(bytes);
  f[15] = std::log2((flops + 1.0) / (bytes + 1.0));
  return f;
}

void RandomForest::Fit(const std::vector<FeatureVector>& x, const std::vector<double>& y,
                       const ForestParams& params) {
  trees_.clear();
  if (x.empty()) throw TrainingError("random forest needs at least one sample");
  std::mt19937_64 rng(params.seed);
  const int n = static_cast<int>(x.size());
  for (int t = 0; t < params.num_trees; ++t) {
    std::vector<int> rows(n);
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int& r : rows) r = pick(rng);
    std::sort(rows.begin(), rows.end());
    Tree tree;
    TreeBuilder(x, y, params, rng).Build(tree, rows, 0);
    trees_.push_back(std::move(tree));
  }
}

double RandomForest::Predict(const FeatureVector& x) const {
  double sum = 0;
  for (const auto& tree : trees_) {
    int i = 0;
    while (tree[i].feature >= 0) i = x[tree[i].feature] <= tree[i].threshold ? tree[i].left : tree[i].right;
    sum += tree[i].value;
  }
  return sum / static_cast<double>(trees_.size());
}

double Predictor::PredictNs(const ir::OpNode& n, std::span<const ir::TensorMeta> inputs) const {
  const FeatureVector f = ExtractFeatures(n, inputs);
  return std::exp(Linear(linear, f) + forest.Predict(f));
}

Predictor TrainPredictor(const ProfileDb& db, const std::string& device_id, ir::OpKind kind,
                         const ForestParams& params) {
  std::vector<ProfileRecord> records = db.RecordsFor(device_id, kind);
  if (static_cast<int>(records.size()) < kMinTrainingRecords) {
    throw TrainingError("cannot train predictor for " + std::string(ir::KindName(kind)) + " on '" + device_id +
                        "': " + std::to_string(records.size()) + " records, need at least " +
                        std::to_string(kMinTrainingRecords));
  }
  std::vector<FeatureVector> features;
  std::vector<double> targets;
  for (const auto& r : records) {
    DecodedSignature d = DecodeSignature(r.key.kind, r.key.precision, r.key.signature);
    features.push_back(ExtractFeatures(d.node, d.inputs));
    targets.push_back(std::log(r.latency_ns_mean));
  }
  std::vector<int> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(params.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const size_t train_n = records.size() * 4 / 5;
  std::vector<FeatureVector> train_x;
  std::vector<double> train_y;
  for (size_t i = 0; i < train_n; ++i) {
    train_x.push_back(features[order[i]]);
    train_y.push_back(targets[order[i]]);
  }
  Predictor p;
  p.kind = kind;
  p.device_id = device_id;
  p.samples = static_cast<int64_t>(records.size());
  p.linear = FitLinear(train_x, train_y);
  std::vector<double> residual(train_y.size());
  for (size_t i = 0; i < train_y.size(); ++i) residual[i] = train_y[i] - Linear(p.linear, train_x[i]);
  p.forest.Fit(train_x, residual, params);
  double err = 0;
  const size_t test_n = records.size() - train_n;
  for (size_t i = train_n; i < records.size(); ++i) {
    const double truth = records[order[i]].latency_ns_mean;
    const double pred = std::exp(Linear(p.linear, features[order[i]]) + p.forest.Predict(features[order[i]]));
    err += std::abs(pred - truth) / truth;
  }
  p.holdout_mae = test_n ? err / static_cast<double>(test_n) : 0.0;
  return p;
}

}  // namespace charon::engines
