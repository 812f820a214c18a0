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

#ifndef CHARON_IR_TENSOR_H_
#define CHARON_IR_TENSOR_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace charon::ir {

enum class Precision { kFP32, kBF16, kFP16, kFP8, kINT8 };

enum class TensorRole {
  kActivation,
  kWeight,
  kGradient,
  kOptimizerState,
  kKvCache,
  kBuffer,
};

int64_t ElementSize(Precision p);
std::string_view PrecisionName(Precision p);
std::optional<Precision> ParsePrecision(std::string_view name);

std::string_view RoleName(TensorRole r);
std::optional<TensorRole> ParseRole(std::string_view name);

// Shape, element type and memory role of one tensor. No values ever flow.
struct TensorMeta {
  std::vector<int64_t> shape;
  Precision precision = Precision::kBF16;
  TensorRole role = TensorRole::kActivation;

  int64_t NumElements() const;
  int64_t ByteSize() const { return NumElements() * ElementSize(precision); }

  bool operator==(const TensorMeta&) const = default;
};

std::string ShapeString(const std::vector<int64_t>& shape);

}  // namespace charon::ir

#endif  // CHARON_IR_TENSOR_H_
