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


#include "charon/engines/engine.h"

#include <cmath>

#include "charon/common/status.h"
#include "charon/engines/roofline.h"

namespace charon::engines {

std::optional<PricedOp> AnalyticalEngine::Price(const ir::OpNode& n,
                                                std::span<const ir::TensorMeta> inputs) const {
  PricedOp out;
  out.engine = "analytical";
  if (ir::IsCommunication(n.kind)) {
    CollectiveCost cost = CollectiveTime(n, inputs, hw_, algo_);
    out.time = cost.time;
    out.phases = std::move(cost.phases);
  } else {
    out.time = RooflineTime(n, inputs, hw_);
  }
  return out;
}

ProfileEngine::ProfileEngine(std::shared_ptr<const ProfileDb> db, std::string device_id)
    : db_(std::move(db)), device_id_(std::move(device_id)) {}

bool ProfileEngine::Supports(ir::OpKind kind) const {
  return db_ != nullptr && !ir::IsCommunication(kind) && db_->HasKind(device_id_, kind);
}

std::optional<PricedOp> ProfileEngine::Price(const ir::OpNode& n, std::span<const ir::TensorMeta> inputs) const {
  if (db_ == nullptr) return std::nullopt;
  auto hit = db_->Lookup(MakeKey(device_id_, n, inputs));
  if (!hit) return std::nullopt;
  return PricedOp{Nanos(*hit), "profile", {}};
}

std::optional<PricedOp> PredictionEngine::Price(const ir::OpNode& n,
                                                std::span<const ir::TensorMeta> inputs) const {
  auto it = predictors_.find(n.kind);
  if (it == predictors_.end()) return std::nullopt;
  const double ns = it->second.PredictNs(n, inputs);
  if (!(ns > 0) || !std::isfinite(ns)) return std::nullopt;
  return PricedOp{Nanos(ns), "prediction", {}};
}

PricedOp EngineStack::Dispatch(const ir::OpNode& n, std::span<const ir::TensorMeta> inputs) const {
  for (const auto& engine : engines_) {
    if (!engine->Supports(n.kind)) continue;
    if (auto priced = engine->Price(n, inputs)) return *priced;
  }
  throw SimulationError("no engine prices node '" + n.id + "' (" + std::string(ir::KindName(n.kind)) + ")");
}

EngineStack BuildEngineStack(const std::vector<std::string>& names, const HardwareSpec& hw,
                             std::shared_ptr<const ProfileDb> db, const ForestParams& params,
                             CollectiveAlgo algo) {
  std::vector<std::shared_ptr<const Engine>> engines;
  bool analytical = false;
  for (const auto& name : names) {
    if (name == "profile") {
      if (db) engines.push_back(std::make_shared<ProfileEngine>(db, hw.device_id));
    } else if (name == "predict" || name == "prediction") {
      if (!db) continue;
      std::map<ir::OpKind, Predictor> predictors;
      for (ir::OpKind kind : ir::AllKinds()) {
        if (ir::IsCommunication(kind)) continue;
        if (static_cast<int>(db->RecordsFor(hw.device_id, kind).size()) < kMinTrainingRecords) continue;
        predictors.emplace(kind, TrainPredictor(*db, hw.device_id, kind, params));
      }
      if (!predictors.empty()) engines.push_back(std::make_shared<PredictionEngine>(std::move(predictors)));
    } else if (name == "analytical") {
      engines.push_back(std::make_shared<AnalyticalEngine>(hw, algo));
      analytical = true;
    } else {
      throw ConfigError("unknown engine '" + name + "' (expected profile, predict or analytical)");
    }
  }
  if (!analytical) engines.push_back(std::make_shared<AnalyticalEngine>(hw, algo));
  return EngineStack(std::move(engines));
}

}  // namespace charon::engines
