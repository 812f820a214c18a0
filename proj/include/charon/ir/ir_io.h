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


#ifndef CHARON_IR_IR_IO_H_
#define CHARON_IR_IR_IO_H_

#include <string>
#include <string_view>

#include "charon/ir/graph.h"

namespace charon::ir {

inline constexpr std::string_view kIrVersion = "charon-ir/1";

// Serializes `g` as a charon-ir/1 JSON document. Output is byte-stable for
// equal graphs.
std::string EmitIr(const OperatorGraph& g);

// Parses and validates a charon-ir/1 document. Nodes are re-sorted
// topologically, so any node order in the file is accepted. Throws
// ParseError naming the node and field on schema violations and GraphError
// on dangling references or cycles.
OperatorGraph ParseIr(std::string_view text);

// File helpers; ParseIrFile throws ConfigError naming a missing path.
OperatorGraph ParseIrFile(const std::string& path);
void WriteIrFile(const OperatorGraph& g, const std::string& path);

}  // namespace charon::ir

#endif  // CHARON_IR_IR_IO_H_
