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

#ifndef CHARON_IR_OP_H_
#define CHARON_IR_OP_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "charon/ir/tensor.h"

namespace charon::ir {

// Closed operator set. Framework ops are normalized into these kinds.
enum class OpKind {
  kMatmul,
  kBatchedMatmul,
  kAttention,
  kSoftmax,
  kRmsNorm,
  kLayerNorm,
  kAdd,
  kMul,
  kSilu,
  kGelu,
  kEmbeddingLookup,
  kRouterTopK,
  kAllReduce,
  kAllGather,
  kReduceScatter,
  kAllToAll,
  kSend,
  kRecv,
  kFused,
  kNoop,
};

enum class Phase { kForward, kBackward, kOptimizer };

std::string_view KindName(OpKind k);
std::optional<OpKind> ParseKind(std::string_view name);
const std::vector<OpKind>& AllKinds();

std::string_view PhaseName(Phase p);
std::optional<Phase> ParsePhase(std::string_view name);

bool IsCommunication(OpKind k);
bool IsCollective(OpKind k);
bool IsElementwise(OpKind k);
bool IsCompute(OpKind k);

using AttrValue = std::variant<int64_t, double, std::string>;

// Kind-specific scalar attributes, kept sorted for stable serialization.
class AttrMap {
 public:
  using Storage = std::map<std::string, AttrValue, std::less<>>;

  bool Has(std::string_view key) const { return values_.find(key) != values_.end(); }
  int64_t GetInt(std::string_view key, int64_t fallback = 0) const;
  double GetDouble(std::string_view key, double fallback = 0.0) const;
  std::string GetString(std::string_view key, std::string_view fallback = {}) const;

  void Set(std::string key, AttrValue value) { values_[std::move(key)] = std::move(value); }
  void Erase(std::string_view key);

  const Storage& values() const { return values_; }
  bool empty() const { return values_.empty(); }

  bool operator==(const AttrMap&) const = default;

 private:
  Storage values_;
};

// Well-known attribute keys.
namespace attr {
inline constexpr std::string_view kGroup = "group";            // tp|dp|edp|ep|pp|world
inline constexpr std::string_view kGroupSize = "group_size";
inline constexpr std::string_view kGroupStride = "group_stride";  // rank distance between members
inline constexpr std::string_view kAlgo = "algo";                 // ring|tree collective algorithm
inline constexpr std::string_view kPayloadBytes = "payload_bytes";
inline constexpr std::string_view kFlops = "flops";            // explicit FLOP override
inline constexpr std::string_view kReplicas = "replicas";      // duplicated across a TP group
inline constexpr std::string_view kModule = "module";          // attention|ffn|other
inline constexpr std::string_view kTpSplit = "tp";             // column|row|heads
inline constexpr std::string_view kTpRegionInput = "tp_region_input";
inline constexpr std::string_view kTpReduce = "tp_reduce";
inline constexpr std::string_view kGradComm = "grad_comm";
inline constexpr std::string_view kGrad = "grad";
inline constexpr std::string_view kCausal = "causal";
inline constexpr std::string_view kCountFull = "count_full";
inline constexpr std::string_view kTransposeA = "transpose_a";
inline constexpr std::string_view kTransposeB = "transpose_b";
inline constexpr std::string_view kFusedKinds = "fused_kinds";
inline constexpr std::string_view kDpSync = "dp_sync";
inline constexpr std::string_view kInplace = "inplace";
inline constexpr std::string_view kPrefetch = "prefetch";
inline constexpr std::string_view kCombine = "combine";
inline constexpr std::string_view kGatherDim = "dim";
inline constexpr std::string_view kForwardId = "fwd";
inline constexpr std::string_view kRecompute = "recompute";
inline constexpr std::string_view kExpert = "expert";
inline constexpr std::string_view kEpSharded = "ep_sharded";
}  // namespace attr

struct OpNode {
  std::string id;
  OpKind kind = OpKind::kNoop;
  std::vector<OpKind> fused_kinds;  // only for kFused
  std::vector<std::string> inputs;  // tensor refs
  std::vector<TensorMeta> outputs;
  AttrMap attrs;
  Phase phase = Phase::kForward;

  // Name under which output `index` is referenced by consumers.
  std::string OutputName(size_t index) const;

  bool operator==(const OpNode&) const = default;
};

// Splits "node:3" into ("node", 3). Returns nullopt for graph-input names.
std::optional<std::pair<std::string, size_t>> SplitOutputRef(std::string_view ref);

}  // namespace charon::ir

#endif  // CHARON_IR_OP_H_
