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

#include "charon/ir/cost.h"

#include <algorithm>

#include "charon/common/status.h"

namespace charon::ir {
namespace {

int64_t MaxElements(const OpNode& n, std::span<const TensorMeta> inputs) {
  int64_t m = 0;
  for (const auto& t : inputs) m = std::max(m, t.NumElements());
  for (const auto& t : n.outputs) m = std::max(m, t.NumElements());
  return m;
}

int64_t OutElements(const OpNode& n) {
  return n.outputs.empty() ? 0 : n.outputs[0].NumElements();
}

void RequireInputs(const OpNode& n, std::span<const TensorMeta> inputs, size_t count) {
  if (inputs.size() < count) {
    throw GraphError("node '" + n.id + "' (" + std::string(KindName(n.kind)) + ") needs " +
                     std::to_string(count) + " inputs");
  }
}

int64_t MatmulFlops(const OpNode& n, std::span<const TensorMeta> inputs, bool batched) {
  RequireInputs(n, inputs, 2);
  const auto& a = inputs[0].shape;
  int64_t contract;
  if (n.attrs.GetInt(attr::kTransposeA) != 0) {
    contract = batched && a.size() >= 2 ? a[a.size() - 2] : inputs[0].NumElements() / a.back();
  } else {
    contract = a.back();
  }
  return 2 * OutElements(n) * contract;
}

int64_t AttentionFlops(const OpNode& n, std::span<const TensorMeta> inputs) {
  RequireInputs(n, inputs, 3);
  const auto& q = inputs[0].shape;
  const auto& k = inputs[1].shape;
  if (q.size() != 3 || k.size() != 3) {
    throw GraphError("node '" + n.id + "': attention expects [batch, seq, hidden] operands");
  }
  int64_t heads = n.attrs.GetInt("heads", 1);
  int64_t head_dim = n.attrs.GetInt("head_dim", q[2] / std::max<int64_t>(heads, 1));
  int64_t sq = q[1];
  int64_t skv = k[1];
  if (inputs.size() >= 5) skv += inputs[3].shape[1];
  bool causal = n.attrs.GetInt(attr::kCausal) != 0 && n.attrs.GetInt(attr::kCountFull) == 0;
  // Score and value matmuls: 2 * (2 * B * heads * head_dim * pairs).
  return 2 * q[0] * heads * head_dim * AttentionPairsTimesTwo(sq, skv, causal);
}

}  // namespace

int64_t AttentionPairsTimesTwo(int64_t sq, int64_t skv, bool causal) {
  if (!causal) return 2 * sq * skv;
  int64_t prefix = std::max<int64_t>(0, skv - sq);
  return 2 * sq * prefix + sq * sq;
}

int64_t OpFlops(const OpNode& n, std::span<const TensorMeta> inputs) {
  if (n.attrs.Has(attr::kFlops)) return n.attrs.GetInt(attr::kFlops);
  switch (n.kind) {
    case OpKind::kMatmul:
      return MatmulFlops(n, inputs, /*batched=*/false);
    case OpKind::kBatchedMatmul:
      return MatmulFlops(n, inputs, /*batched=*/true);
    case OpKind::kAttention:
      return AttentionFlops(n, inputs);
    case OpKind::kSoftmax:
      return 5 * OutElements(n);
    case OpKind::kRmsNorm:
      return 4 * OutElements(n);
    case OpKind::kLayerNorm:
      return 7 * OutElements(n);
    case OpKind::kAdd:
      return static_cast<int64_t>(std::max<size_t>(inputs.size(), 2) - 1) * MaxElements(n, inputs);
    case OpKind::kMul:
      if (n.attrs.GetInt(attr::kCombine) != 0) {
        return 2 * OutElements(n) * n.attrs.GetInt("top_k", 1);
      }
      return static_cast<int64_t>(std::max<size_t>(inputs.size(), 2) - 1) * MaxElements(n, inputs);
    case OpKind::kSilu:
      return 4 * OutElements(n);
    case OpKind::kGelu:
      return 8 * OutElements(n);
    case OpKind::kRouterTopK:
      return inputs.empty() ? 0 : inputs[0].NumElements();
    case OpKind::kEmbeddingLookup:
    case OpKind::kAllReduce:
    case OpKind::kAllGather:
    case OpKind::kReduceScatter:
    case OpKind::kAllToAll:
    case OpKind::kSend:
    case OpKind::kRecv:
    case OpKind::kFused:
    case OpKind::kNoop:
      return 0;
  }
  return 0;
}

int64_t OpBytes(const OpNode& n, std::span<const TensorMeta> inputs) {
  if (n.attrs.Has(attr::kPayloadBytes)) return n.attrs.GetInt(attr::kPayloadBytes);
  switch (n.kind) {
    case OpKind::kNoop:
      return 0;
    case OpKind::kAllGather:
    case OpKind::kRecv:
      return n.outputs.empty() ? 0 : n.outputs[0].ByteSize();
    case OpKind::kAllReduce:
    case OpKind::kReduceScatter:
    case OpKind::kAllToAll:
    case OpKind::kSend: {
      int64_t total = 0;
      for (const auto& t : inputs) total += t.ByteSize();
      return total;
    }
    case OpKind::kEmbeddingLookup: {
      // Only gathered rows of the table are read.
      int64_t out = n.outputs.empty() ? 0 : n.outputs[0].ByteSize();
      return (inputs.empty() ? 0 : inputs[0].ByteSize()) + 2 * out;
    }
    default: {
      int64_t total = 0;
      for (const auto& t : inputs) total += t.ByteSize();
      for (const auto& t : n.outputs) total += t.ByteSize();
      return total;
    }
  }
}

}  // namespace charon::ir
