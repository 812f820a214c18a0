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


#ifndef CHARON_ENGINES_PREDICTOR_H_
#define CHARON_ENGINES_PREDICTOR_H_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "charon/engines/profile_db.h"
#include "charon/ir/op.h"
#include "charon/ir/tensor.h"

namespace charon::engines {

inline constexpr int kNumFeatures = 16;
using FeatureVector = std::array<double, kNumFeatures>;

// log2 extents of the last four dims of the first three inputs (1 when
// absent), precision element-size code, log2 FLOPs, log2 bytes and log2
// arithmetic intensity. Defined for every op kind.
FeatureVector ExtractFeatures(const ir::OpNode& n, std::span<const ir::TensorMeta> inputs);

struct ForestParams {
  int num_trees = 50;
  int max_depth = 12;
  int min_leaf = 2;
  double feature_fraction = 0.8;
  uint64_t seed = 42;
};

// Bagged CART regression trees with per-split feature subsampling.
class RandomForest {
 public:
  void Fit(const std::vector<FeatureVector>& x, const std::vector<double>& y, const ForestParams& params);
  double Predict(const FeatureVector& x) const;
  bool trained() const { return !trees_.empty(); }

 private:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0;
    double value = 0;
    int left = -1;
    int right = -1;
  };
  using Tree = std::vector<Node>;

  std::vector<Tree> trees_;
};

inline constexpr int kMinTrainingRecords = 50;

struct Predictor {
  ir::OpKind kind = ir::OpKind::kNoop;
  std::string device_id;
  // Natural-log latency in ns is linear(features) + forest(features); the
  // forest fits the residual of the least-squares linear term.
  std::array<double, kNumFeatures + 1> linear{};  // intercept first
  RandomForest forest;
  int64_t samples = 0;
  double holdout_mae = 0;  // mean relative absolute error on the 20% split

  // Strictly positive latency in ns.
  double PredictNs(const ir::OpNode& n, std::span<const ir::TensorMeta> inputs) const;
};

// Trains on the db's records for (device_id, kind) with an 80/20 split.
// Throws TrainingError naming the kind when fewer than 50 records exist.
Predictor TrainPredictor(const ProfileDb& db, const std::string& device_id, ir::OpKind kind,
                         const ForestParams& params = {});

}  // namespace charon::engines

#endif  // CHARON_ENGINES_PREDICTOR_H_
