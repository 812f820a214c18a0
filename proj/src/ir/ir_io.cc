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


#include "charon/ir/ir_io.h"

#include <json.hpp>

#include "charon/common/file_util.h"
#include "charon/common/status.h"

namespace charon::ir {
namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void Fail(const std::string& where, const std::string& field, const std::string& what) {
  throw ParseError(where + ": field '" + field + "' " + what);
}

const Json& Field(const Json& obj, const char* field, const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  auto it = obj.find(field);
  if (it == obj.end()) Fail(where, field, "is missing");
  return *it;
}

std::string StringField(const Json& obj, const char* field, const std::string& where) {
  const Json& v = Field(obj, field, where);
  if (!v.is_string()) Fail(where, field, "must be a string");
  return v.get<std::string>();
}

TensorMeta ParseMeta(const Json& obj, const std::string& where) {
  TensorMeta m;
  const Json& shape = Field(obj, "shape", where);
  if (!shape.is_array()) Fail(where, "shape", "must be an array");
  for (const auto& e : shape) {
    if (!e.is_number_integer() || e.get<int64_t>() < 1) Fail(where, "shape", "extents must be positive integers");
    m.shape.push_back(e.get<int64_t>());
  }
  std::string dtype = StringField(obj, "dtype", where);
  auto p = ParsePrecision(dtype);
  if (!p) Fail(where, "dtype", "has unknown precision '" + dtype + "'");
  m.precision = *p;
  if (obj.contains("role")) {
    std::string role = StringField(obj, "role", where);
    auto r = ParseRole(role);
    if (!r) Fail(where, "role", "has unknown role '" + role + "'");
    m.role = *r;
  }
  return m;
}

Json EmitMeta(const TensorMeta& m) {
  Json j;
  j["shape"] = m.shape;
  j["dtype"] = std::string(PrecisionName(m.precision));
  j["role"] = std::string(RoleName(m.role));
  return j;
}

std::string JoinKinds(const std::vector<OpKind>& kinds) {
  std::string s;
  for (size_t i = 0; i < kinds.size(); ++i) {
    if (i) s += '+';
    s += KindName(kinds[i]);
  }
  return s;
}

std::vector<OpKind> SplitKinds(const std::string& s, const std::string& where) {
  std::vector<OpKind> kinds;
  size_t start = 0;
  while (start <= s.size()) {
    size_t end = s.find('+', start);
    if (end == std::string::npos) end = s.size();
    std::string name = s.substr(start, end - start);
    auto k = ParseKind(name);
    if (!k) Fail(where, "attrs.fused_kinds", "has unknown kind '" + name + "'");
    kinds.push_back(*k);
    start = end + 1;
  }
  return kinds;
}

OpNode ParseNode(const Json& j, size_t index) {
  std::string where = "node #" + std::to_string(index);
  OpNode n;
  n.id = StringField(j, "id", where);
  where = "node '" + n.id + "'";
  std::string kind = StringField(j, "kind", where);
  auto k = ParseKind(kind);
  if (!k) Fail(where, "kind", "has unknown op kind '" + kind + "'");
  n.kind = *k;
  const Json& inputs = Field(j, "inputs", where);
  if (!inputs.is_array()) Fail(where, "inputs", "must be an array");
  for (const auto& ref : inputs) {
    if (!ref.is_string()) Fail(where, "inputs", "must contain tensor ref strings");
    n.inputs.push_back(ref.get<std::string>());
  }
  const Json& outputs = Field(j, "outputs", where);
  if (!outputs.is_array()) Fail(where, "outputs", "must be an array");
  for (const auto& o : outputs) n.outputs.push_back(ParseMeta(o, where));
  if (j.contains("attrs")) {
    const Json& attrs = j["attrs"];
    if (!attrs.is_object()) Fail(where, "attrs", "must be an object");
    for (const auto& [key, v] : attrs.items()) {
      if (key == attr::kFusedKinds) {
        if (!v.is_string()) Fail(where, "attrs.fused_kinds", "must be a string");
        n.fused_kinds = SplitKinds(v.get<std::string>(), where);
      } else if (v.is_number_integer()) {
        n.attrs.Set(key, v.get<int64_t>());
      } else if (v.is_number_float()) {
        n.attrs.Set(key, v.get<double>());
      } else if (v.is_string()) {
        n.attrs.Set(key, v.get<std::string>());
      } else if (v.is_boolean()) {
        n.attrs.Set(key, int64_t{v.get<bool>() ? 1 : 0});
      } else {
        Fail(where, "attrs." + key, "must be a scalar");
      }
    }
  }
  if (j.contains("phase")) {
    std::string phase = StringField(j, "phase", where);
    auto p = ParsePhase(phase);
    if (!p) Fail(where, "phase", "has unknown phase '" + phase + "'");
    n.phase = *p;
  }
  return n;
}

}  // namespace

std::string EmitIr(const OperatorGraph& g) {
  Json doc;
  doc["version"] = std::string(kIrVersion);
  doc["block_multiplier"] = g.block_multiplier;
  Json inputs = Json::array();
  for (const auto& in : g.inputs) {
    Json j;
    j["name"] = in.name;
    Json m = EmitMeta(in.meta);
    for (auto& [k, v] : m.items()) j[k] = v;
    inputs.push_back(std::move(j));
  }
  doc["inputs"] = std::move(inputs);
  Json nodes = Json::array();
  for (const auto& n : g.nodes) {
    Json j;
    j["id"] = n.id;
    j["kind"] = std::string(KindName(n.kind));
    j["inputs"] = n.inputs;
    Json outs = Json::array();
    for (const auto& o : n.outputs) outs.push_back(EmitMeta(o));
    j["outputs"] = std::move(outs);
    Json attrs = Json::object();
    for (const auto& [key, v] : n.attrs.values()) {
      std::visit([&](const auto& x) { attrs[key] = x; }, v);
    }
    if (!n.fused_kinds.empty()) attrs[std::string(attr::kFusedKinds)] = JoinKinds(n.fused_kinds);
    j["attrs"] = std::move(attrs);
    j["phase"] = std::string(PhaseName(n.phase));
    nodes.push_back(std::move(j));
  }
  doc["nodes"] = std::move(nodes);
  doc["outputs"] = g.outputs;
  return doc.dump(2) + "\n";
}

OperatorGraph ParseIr(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("IR document is not valid JSON: ") + e.what());
  }
  const std::string where = "IR document";
  std::string version = StringField(doc, "version", where);
  if (version != kIrVersion) {
    Fail(where, "version", "is '" + version + "', expected '" + std::string(kIrVersion) + "'");
  }
  OperatorGraph g;
  if (doc.contains("block_multiplier")) {
    const Json& bm = doc["block_multiplier"];
    if (!bm.is_number_integer() || bm.get<int64_t>() < 1) {
      Fail(where, "block_multiplier", "must be a positive integer");
    }
    g.block_multiplier = bm.get<int64_t>();
  }
  const Json& inputs = Field(doc, "inputs", where);
  if (!inputs.is_array()) Fail(where, "inputs", "must be an array");
  for (size_t i = 0; i < inputs.size(); ++i) {
    std::string in_where = "input #" + std::to_string(i);
    std::string name = StringField(inputs[i], "name", in_where);
    g.inputs.push_back({name, ParseMeta(inputs[i], "input '" + name + "'")});
  }
  const Json& nodes = Field(doc, "nodes", where);
  if (!nodes.is_array()) Fail(where, "nodes", "must be an array");
  for (size_t i = 0; i < nodes.size(); ++i) g.nodes.push_back(ParseNode(nodes[i], i));
  const Json& outputs = Field(doc, "outputs", where);
  if (!outputs.is_array()) Fail(where, "outputs", "must be an array");
  for (const auto& o : outputs) {
    if (!o.is_string()) Fail(where, "outputs", "must contain tensor ref strings");
    g.outputs.push_back(o.get<std::string>());
  }
  TopologicalSort(g);
  Validate(g);
  return g;
}

OperatorGraph ParseIrFile(const std::string& path) { return ParseIr(ReadFile(path)); }

void WriteIrFile(const OperatorGraph& g, const std::string& path) { WriteFileAtomic(path, EmitIr(g)); }

}  // namespace charon::ir
