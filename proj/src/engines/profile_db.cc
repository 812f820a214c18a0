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


#include "charon/engines/profile_db.h"

#include <charconv>
#include <cstdio>
#include <set>
#include <sstream>

#include "charon/common/file_util.h"
#include "charon/common/status.h"
#include "charon/engines/roofline.h"

namespace charon::engines {
namespace {

constexpr std::string_view kHeader = "device_id,op_kind,shape_signature,precision,latency_ns_mean,samples";

const std::set<std::string, std::less<>>& SemanticAttrs() {
  static const std::set<std::string, std::less<>> keys = {
      "causal", "combine", "count_full", "flops", "grad",        "head_dim",    "heads",
      "kv_heads", "num_experts", "reduce", "top_k", "transpose_a", "transpose_b"};
  return keys;
}

std::vector<std::string> Split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  size_t start = 0;
  while (true) {
    size_t end = s.find(sep, start);
    parts.emplace_back(s.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return parts;
}

std::string Trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string ShapeList(const std::vector<ir::TensorMeta>& metas) {
  std::string s;
  for (size_t i = 0; i < metas.size(); ++i) {
    if (i) s += ';';
    s += ir::ShapeString(metas[i].shape);
  }
  return s;
}

std::vector<int64_t> ParseShape(const std::string& text, std::string_view where) {
  std::vector<int64_t> shape;
  for (const auto& part : Split(text, 'x')) {
    int64_t v = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || ptr != part.data() + part.size() || v < 1) {
      throw ParseError(std::string(where) + ": bad shape extent '" + part + "'");
    }
    shape.push_back(v);
  }
  return shape;
}

std::vector<ir::TensorMeta> ParseShapeList(const std::string& text, ir::Precision p, std::string_view where) {
  std::vector<ir::TensorMeta> metas;
  if (text.empty()) return metas;
  for (const auto& s : Split(text, ';')) metas.push_back({ParseShape(s, where), p, ir::TensorRole::kActivation});
  return metas;
}

std::string RenderAttr(const ir::AttrValue& v) {
  if (const auto* i = std::get_if<int64_t>(&v)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&v)) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", *d);
    return buf;
  }
  return std::get<std::string>(v);
}

}  // namespace

std::string ShapeSignature(const ir::OpNode& n, std::span<const ir::TensorMeta> inputs) {
  std::string attrs;
  auto append = [&](std::string_view key, const std::string& value) {
    if (!attrs.empty()) attrs += '&';
    attrs += key;
    attrs += '=';
    attrs += value;
  };
  for (const auto& [key, v] : n.attrs.values()) {
    if (key == ir::attr::kFusedKinds) continue;
    if (SemanticAttrs().count(key)) append(key, RenderAttr(v));
  }
  if (!n.fused_kinds.empty()) {
    std::string kinds;
    for (size_t i = 0; i < n.fused_kinds.size(); ++i) {
      if (i) kinds += '+';
      kinds += ir::KindName(n.fused_kinds[i]);
    }
    append(ir::attr::kFusedKinds, kinds);
  }
  return attrs + "|" + ShapeList({inputs.begin(), inputs.end()}) + "|" + ShapeList(n.outputs);
}

DecodedSignature DecodeSignature(ir::OpKind kind, ir::Precision precision, std::string_view signature) {
  auto parts = Split(signature, '|');
  if (parts.size() != 3) throw ParseError("shape signature '" + std::string(signature) + "' needs 3 '|' fields");
  DecodedSignature d;
  d.node.id = "profiled";
  d.node.kind = kind;
  if (!parts[0].empty()) {
    for (const auto& kv : Split(parts[0], '&')) {
      size_t eq = kv.find('=');
      if (eq == std::string::npos) throw ParseError("shape signature attr '" + kv + "' lacks '='");
      std::string key = kv.substr(0, eq);
      std::string value = kv.substr(eq + 1);
      if (key == ir::attr::kFusedKinds) {
        for (const auto& k : Split(value, '+')) {
          auto parsed = ir::ParseKind(k);
          if (!parsed) throw ParseError("shape signature names unknown kind '" + k + "'");
          d.node.fused_kinds.push_back(*parsed);
        }
        continue;
      }
      int64_t i = 0;
      auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), i);
      if (ec == std::errc() && ptr == value.data() + value.size()) {
        d.node.attrs.Set(key, i);
      } else {
        d.node.attrs.Set(key, std::stod(value));
      }
    }
  }
  d.inputs = ParseShapeList(parts[1], precision, signature);
  d.node.outputs = ParseShapeList(parts[2], precision, signature);
  return d;
}

ProfileKey MakeKey(const std::string& device_id, const ir::OpNode& n, std::span<const ir::TensorMeta> inputs) {
  return ProfileKey{device_id, n.kind, ShapeSignature(n, inputs), NodePrecision(n, inputs)};
}

void ProfileDb::Add(const ProfileRecord& record) {
  if (!(record.latency_ns_mean > 0)) {
    throw ConfigError("profile record for " + std::string(ir::KindName(record.key.kind)) + " '" +
                      record.key.signature + "' has non-positive latency");
  }
  if (!AddIfAbsent(record)) {
    throw ConfigError("duplicate profile record: " + record.key.device_id + "," +
                      std::string(ir::KindName(record.key.kind)) + "," + record.key.signature + "," +
                      std::string(ir::PrecisionName(record.key.precision)));
  }
}

bool ProfileDb::AddIfAbsent(const ProfileRecord& record) {
  return records_.emplace(record.key, record).second;
}

std::optional<double> ProfileDb::Lookup(const ProfileKey& key) const {
  auto it = records_.find(key);
  if (it == records_.end()) return std::nullopt;
  return it->second.latency_ns_mean;
}

bool ProfileDb::HasKind(const std::string& device_id, ir::OpKind kind) const {
  for (const auto& [key, r] : records_) {
    if (key.device_id == device_id && key.kind == kind) return true;
  }
  return false;
}

std::vector<ProfileRecord> ProfileDb::RecordsFor(const std::string& device_id, ir::OpKind kind) const {
  std::vector<ProfileRecord> out;
  for (const auto& [key, r] : records_) {
    if (key.device_id == device_id && key.kind == kind) out.push_back(r);
  }
  return out;
}

std::vector<ProfileRecord> ProfileDb::Records() const {
  std::vector<ProfileRecord> out;
  for (const auto& [key, r] : records_) out.push_back(r);
  return out;
}

ProfileDb ParseProfileDb(std::string_view text) {
  ProfileDb db;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::string trimmed = Trim(line);
    if (trimmed.empty()) continue;
    if (!header_seen) {
      std::string compact;
      for (char c : trimmed) {
        if (c != ' ') compact += c;
      }
      if (compact != kHeader) throw ParseError("profile db: header line must be '" + std::string(kHeader) + "'");
      header_seen = true;
      continue;
    }
    const std::string where = "profile db line " + std::to_string(line_no);
    auto fields = Split(trimmed, ',');
    if (fields.size() != 6) throw ParseError(where + ": expected 6 fields, got " + std::to_string(fields.size()));
    for (auto& f : fields) f = Trim(f);
    ProfileRecord r;
    r.key.device_id = fields[0];
    auto kind = ir::ParseKind(fields[1]);
    if (!kind) throw ParseError(where + ": unknown op_kind '" + fields[1] + "'");
    r.key.kind = *kind;
    r.key.signature = fields[2];
    auto precision = ir::ParsePrecision(fields[3]);
    if (!precision) throw ParseError(where + ": unknown precision '" + fields[3] + "'");
    r.key.precision = *precision;
    try {
      r.latency_ns_mean = std::stod(fields[4]);
      r.samples = std::stoll(fields[5]);
    } catch (const std::exception&) {
      throw ParseError(where + ": latency_ns_mean and samples must be numeric");
    }
    DecodeSignature(r.key.kind, r.key.precision, r.key.signature);  // validates the signature
    try {
      db.Add(r);
    } catch (const ConfigError& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  if (!header_seen) throw ParseError("profile db: missing header line");
  return db;
}

ProfileDb LoadProfileDbFile(const std::string& path) { return ParseProfileDb(ReadFile(path)); }

std::string EmitProfileDb(const ProfileDb& db) {
  std::string out(kHeader);
  out += '\n';
  char buf[64];
  for (const auto& r : db.Records()) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.latency_ns_mean);
    out += r.key.device_id + "," + std::string(ir::KindName(r.key.kind)) + "," + r.key.signature + "," +
           std::string(ir::PrecisionName(r.key.precision)) + "," + buf + "," + std::to_string(r.samples) + "\n";
  }
  return out;
}

SyntheticDbResult GenerateSyntheticDb(const HardwareSpec& hw, std::span<const SweepEntry> sweep) {
  SyntheticDbResult result;
  for (const auto& e : sweep) {
    ProfileRecord r;
    r.key = MakeKey(hw.device_id, e.node, e.inputs);
    r.latency_ns_mean = RooflineTime(e.node, e.inputs, hw).count();
    r.samples = 1;
    if (!result.db.AddIfAbsent(r)) ++result.duplicates;
  }
  return result;
}

}  // namespace charon::engines
