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

#include "charon/ir/tensor.h"

#include <array>
#include <sstream>
#include <utility>

namespace charon::ir {
namespace {

constexpr std::array<std::pair<Precision, std::string_view>, 5> kPrecisionNames = {{
    {Precision::kFP32, "fp32"},
    {Precision::kBF16, "bf16"},
    {Precision::kFP16, "fp16"},
    {Precision::kFP8, "fp8"},
    {Precision::kINT8, "int8"},
}};

constexpr std::array<std::pair<TensorRole, std::string_view>, 6> kRoleNames = {{
    {TensorRole::kActivation, "activation"},
    {TensorRole::kWeight, "weight"},
    {TensorRole::kGradient, "gradient"},
    {TensorRole::kOptimizerState, "optimizer_state"},
    {TensorRole::kKvCache, "kv_cache"},
    {TensorRole::kBuffer, "buffer"},
}};

}  // namespace

int64_t ElementSize(Precision p) {
  switch (p) {
    case Precision::kFP32:
      return 4;
    case Precision::kBF16:
    case Precision::kFP16:
      return 2;
    case Precision::kFP8:
    case Precision::kINT8:
      return 1;
  }
  return 0;
}

std::string_view PrecisionName(Precision p) {
  for (const auto& [value, name] : kPrecisionNames) {
    if (value == p) return name;
  }
  return "?";
}

std::optional<Precision> ParsePrecision(std::string_view name) {
  for (const auto& [value, n] : kPrecisionNames) {
    if (n == name) return value;
  }
  return std::nullopt;
}

std::string_view RoleName(TensorRole r) {
  for (const auto& [value, name] : kRoleNames) {
    if (value == r) return name;
  }
  return "?";
}

std::optional<TensorRole> ParseRole(std::string_view name) {
  for (const auto& [value, n] : kRoleNames) {
    if (n == name) return value;
  }
  return std::nullopt;
}

int64_t TensorMeta::NumElements() const {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

std::string ShapeString(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  return os.str();
}

}  // namespace charon::ir
