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

#ifndef CHARON_IR_GRAPH_H_
#define CHARON_IR_GRAPH_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "charon/ir/op.h"
#include "charon/ir/tensor.h"

namespace charon::ir {

struct NamedTensor {
  std::string name;
  TensorMeta meta;

  bool operator==(const NamedTensor&) const = default;
};

// A topologically ordered operator DAG representing `block_multiplier`
// identical blocks. Treated as immutable once built; passes return copies.
struct OperatorGraph {
  std::vector<OpNode> nodes;
  std::vector<NamedTensor> inputs;
  std::vector<std::string> outputs;
  int64_t block_multiplier = 1;

  bool IsJoint() const;
  int FindNode(std::string_view id) const;

  bool operator==(const OperatorGraph&) const = default;
};

// Resolves tensor refs for one graph snapshot. Invalidated by any mutation.
class TensorTable {
 public:
  explicit TensorTable(const OperatorGraph& g);

  bool Contains(std::string_view ref) const;
  const TensorMeta& Meta(std::string_view ref) const;
  // Index of the producing node, or -1 for a graph input.
  int Producer(std::string_view ref) const;
  // Indices of consuming nodes in topological order.
  const std::vector<int>& Consumers(std::string_view ref) const;
  bool IsGraphInput(std::string_view ref) const;
  bool IsGraphOutput(std::string_view ref) const;

  std::vector<TensorMeta> InputMetas(const OpNode& n) const;

 private:
  struct Entry {
    const TensorMeta* meta = nullptr;
    int producer = -1;
    std::vector<int> consumers;
    bool graph_output = false;
  };
  const Entry& Lookup(std::string_view ref) const;

  std::unordered_map<std::string, Entry> entries_;
};

// Full structural validation; throws GraphError describing the first
// violation found.
void Validate(const OperatorGraph& g);

// Stable topological re-ordering (Kahn, ties by current position). Throws
// GraphError naming the nodes on a cycle.
void TopologicalSort(OperatorGraph& g);

// Total FLOPs over all nodes of one block instance.
int64_t GraphFlops(const OperatorGraph& g);

// FLOPs summed over `ranks` symmetric copies of a per-rank graph, counting
// nodes replicated across the group (attr replicas=r) once per r ranks.
int64_t GroupFlops(const OperatorGraph& g, int ranks);

// Element count of weight tensors consumed by matmul-like nodes.
int64_t ProjectionParamCount(const OperatorGraph& g);

}  // namespace charon::ir

#endif  // CHARON_IR_GRAPH_H_
