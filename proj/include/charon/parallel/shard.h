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


#ifndef CHARON_PARALLEL_SHARD_H_
#define CHARON_PARALLEL_SHARD_H_

#include <string>
#include <vector>

#include "charon/analysis/memory.h"
#include "charon/ir/graph.h"
#include "charon/parallel/config.h"

namespace charon::parallel {

// Megatron-style tensor parallelism on a forward graph. Nodes tagged
// tp=column/heads keep 1/tp of their output features, tp=row nodes consume
// sharded features and emit partial sums. Without sequence parallelism a
// gradient marker (noop, grad_comm=all_reduce) follows each region input
// and an all_reduce follows each tp_reduce node. With it, the region input
// is all-gathered along the sequence, each tp_reduce output is
// reduce-scattered, and the residual stream outside the regions holds S/tp
// positions. Untouched nodes are marked replicas=tp. tp=1 is the identity.
// Throws ConfigError on non-divisible dimensions or a joint graph.
ir::OperatorGraph ApplyTp(const ir::OperatorGraph& g, int tp, bool sequence_parallel);

// Expert parallelism on a forward MoE graph for member `ep_rank` of an EP
// group whose ranks are `stride` apart. The rank keeps experts
// [ep_rank*E/ep, (ep_rank+1)*E/ep) with ep times their per-rank tokens;
// an all_to_all dispatches routed tokens before them and another returns
// their outputs. ep=1 is the identity. Throws ConfigError on a dense graph
// or when E is not divisible by ep.
ir::OperatorGraph ApplyEp(const ir::OperatorGraph& g, int ep, int ep_rank, int stride);

struct DpResult {
  ir::OperatorGraph graph;
  analysis::MemoryTags tags;
  std::vector<std::string> warnings;
};

// Data-parallel gradient synchronization on a joint graph:
//   ddp          all_reduce per gradient bucket
//   zero1/zero2  reduce_scatter per bucket, then all_gather of the updated
//                parameters in the optimizer phase
//   zero3        bucketed reduce_scatter plus per-block parameter
//                all_gathers before forward and before backward
//   fsdp         zero3 with one reduce_scatter for the whole block
// Buckets fill in gradient production order. Expert gradients sync over
// the expert-data-parallel group (dp/ep ranks). The tags report which
// persistent states are sharded 1/dp.
DpResult ApplyDp(const ir::OperatorGraph& g, const ParallelismConfig& cfg);

// Number of buckets holding `total_bytes` of gradients.
int64_t BucketCount(double total_bytes, double bucket_bytes);

}  // namespace charon::parallel

#endif  // CHARON_PARALLEL_SHARD_H_
