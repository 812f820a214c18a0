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


#ifndef CHARON_ENGINES_ENGINE_H_
#define CHARON_ENGINES_ENGINE_H_

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "charon/common/units.h"
#include "charon/engines/collective.h"
#include "charon/engines/hardware.h"
#include "charon/engines/predictor.h"
#include "charon/engines/profile_db.h"
#include "charon/ir/op.h"

namespace charon::engines {

struct PricedOp {
  Duration time{0};
  std::string engine;
  // Link-level decomposition for communication ops; empty for compute.
  std::vector<LinkPhase> phases;
};

class Engine {
 public:
  virtual ~Engine() = default;
  virtual std::string_view Name() const = 0;
  // Registry check: whether this engine ever prices `kind`.
  virtual bool Supports(ir::OpKind kind) const = 0;
  // nullopt on a miss, letting the stack fall through.
  virtual std::optional<PricedOp> Price(const ir::OpNode& n, std::span<const ir::TensorMeta> inputs) const = 0;
};

// Roofline for compute, alpha-beta link model for communication. Prices
// every kind.
class AnalyticalEngine final : public Engine {
 public:
  explicit AnalyticalEngine(HardwareSpec hw, CollectiveAlgo algo = CollectiveAlgo::kRing)
      : hw_(std::move(hw)), algo_(algo) {}

  std::string_view Name() const override { return "analytical"; }
  bool Supports(ir::OpKind) const override { return true; }
  std::optional<PricedOp> Price(const ir::OpNode& n, std::span<const ir::TensorMeta> inputs) const override;

 private:
  HardwareSpec hw_;
  CollectiveAlgo algo_;
};

// Exact-key lookup; never interpolates.
class ProfileEngine final : public Engine {
 public:
  ProfileEngine(std::shared_ptr<const ProfileDb> db, std::string device_id);

  std::string_view Name() const override { return "profile"; }
  bool Supports(ir::OpKind kind) const override;
  std::optional<PricedOp> Price(const ir::OpNode& n, std::span<const ir::TensorMeta> inputs) const override;

 private:
  std::shared_ptr<const ProfileDb> db_;
  std::string device_id_;
};

class PredictionEngine final : public Engine {
 public:
  explicit PredictionEngine(std::map<ir::OpKind, Predictor> predictors) : predictors_(std::move(predictors)) {}

  std::string_view Name() const override { return "prediction"; }
  bool Supports(ir::OpKind kind) const override { return predictors_.count(kind) > 0; }
  std::optional<PricedOp> Price(const ir::OpNode& n, std::span<const ir::TensorMeta> inputs) const override;

 private:
  std::map<ir::OpKind, Predictor> predictors_;
};

// Prioritized fallback: the first engine that supports the kind and
// returns a price wins.
class EngineStack {
 public:
  EngineStack() = default;
  explicit EngineStack(std::vector<std::shared_ptr<const Engine>> engines) : engines_(std::move(engines)) {}

  // Throws SimulationError when no engine prices the node.
  PricedOp Dispatch(const ir::OpNode& n, std::span<const ir::TensorMeta> inputs) const;

  const std::vector<std::shared_ptr<const Engine>>& engines() const { return engines_; }

 private:
  std::vector<std::shared_ptr<const Engine>> engines_;
};

// Builds a stack from names in {profile, predict, prediction, analytical}.
// Predictors are trained for every compute kind with enough db records.
// The analytical engine is appended when absent so dispatch stays total.
EngineStack BuildEngineStack(const std::vector<std::string>& names, const HardwareSpec& hw,
                             std::shared_ptr<const ProfileDb> db, const ForestParams& params = {},
                             CollectiveAlgo algo = CollectiveAlgo::kRing);

}  // namespace charon::engines

#endif  // CHARON_ENGINES_ENGINE_H_
