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

#include "charon/ir/op.h"

#include <array>
#include <charconv>
#include <utility>

namespace charon::ir {
namespace {

constexpr std::array<std::pair<OpKind, std::string_view>, 20> kKindNames = {{
    {OpKind::kMatmul, "matmul"},
    {OpKind::kBatchedMatmul, "batched_matmul"},
    {OpKind::kAttention, "attention"},
    {OpKind::kSoftmax, "softmax"},
    {OpKind::kRmsNorm, "rmsnorm"},
    {OpKind::kLayerNorm, "layernorm"},
    {OpKind::kAdd, "add"},
    {OpKind::kMul, "mul"},
    {OpKind::kSilu, "silu"},
    {OpKind::kGelu, "gelu"},
    {OpKind::kEmbeddingLookup, "embedding_lookup"},
    {OpKind::kRouterTopK, "router_topk"},
    {OpKind::kAllReduce, "all_reduce"},
    {OpKind::kAllGather, "all_gather"},
    {OpKind::kReduceScatter, "reduce_scatter"},
    {OpKind::kAllToAll, "all_to_all"},
    {OpKind::kSend, "send"},
    {OpKind::kRecv, "recv"},
    {OpKind::kFused, "fused"},
    {OpKind::kNoop, "noop"},
}};

}  // namespace

std::string_view KindName(OpKind k) {
  for (const auto& [value, name] : kKindNames) {
    if (value == k) return name;
  }
  return "?";
}

std::optional<OpKind> ParseKind(std::string_view name) {
  for (const auto& [value, n] : kKindNames) {
    if (n == name) return value;
  }
  return std::nullopt;
}

const std::vector<OpKind>& AllKinds() {
  static const std::vector<OpKind> kinds = [] {
    std::vector<OpKind> v;
    for (const auto& [value, name] : kKindNames) v.push_back(value);
    return v;
  }();
  return kinds;
}

std::string_view PhaseName(Phase p) {
  switch (p) {
    case Phase::kForward:
      return "forward";
    case Phase::kBackward:
      return "backward";
    case Phase::kOptimizer:
      return "optimizer";
  }
  return "?";
}

std::optional<Phase> ParsePhase(std::string_view name) {
  if (name == "forward") return Phase::kForward;
  if (name == "backward") return Phase::kBackward;
  if (name == "optimizer") return Phase::kOptimizer;
  return std::nullopt;
}

bool IsCommunication(OpKind k) {
  switch (k) {
    case OpKind::kAllReduce:
    case OpKind::kAllGather:
    case OpKind::kReduceScatter:
    case OpKind::kAllToAll:
    case OpKind::kSend:
    case OpKind::kRecv:
      return true;
    default:
      return false;
  }
}

bool IsCollective(OpKind k) {
  return IsCommunication(k) && k != OpKind::kSend && k != OpKind::kRecv;
}

bool IsElementwise(OpKind k) {
  return k == OpKind::kAdd || k == OpKind::kMul || k == OpKind::kSilu ||
         k == OpKind::kGelu;
}

bool IsCompute(OpKind k) { return !IsCommunication(k); }

int64_t AttrMap::GetInt(std::string_view key, int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (const auto* i = std::get_if<int64_t>(&it->second)) return *i;
  if (const auto* d = std::get_if<double>(&it->second)) return static_cast<int64_t>(*d);
  return fallback;
}

double AttrMap::GetDouble(std::string_view key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (const auto* d = std::get_if<double>(&it->second)) return *d;
  if (const auto* i = std::get_if<int64_t>(&it->second)) return static_cast<double>(*i);
  return fallback;
}

std::string AttrMap::GetString(std::string_view key, std::string_view fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::string(fallback);
  if (const auto* s = std::get_if<std::string>(&it->second)) return *s;
  return std::string(fallback);
}

void AttrMap::Erase(std::string_view key) {
  auto it = values_.find(key);
  if (it != values_.end()) values_.erase(it);
}

std::string OpNode::OutputName(size_t index) const {
  return id + ":" + std::to_string(index);
}

std::optional<std::pair<std::string, size_t>> SplitOutputRef(std::string_view ref) {
  auto pos = ref.rfind(':');
  if (pos == std::string_view::npos || pos + 1 == ref.size()) return std::nullopt;
  size_t index = 0;
  auto tail = ref.substr(pos + 1);
  auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), index);
  if (ec != std::errc() || ptr != tail.data() + tail.size()) return std::nullopt;
  return std::make_pair(std::string(ref.substr(0, pos)), index);
}

}  // namespace charon::ir
