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


#include "charon/engines/hardware.h"

#include <json.hpp>

#include "charon/common/file_util.h"
#include "charon/common/status.h"

namespace charon::engines {
namespace {

using Json = nlohmann::ordered_json;

const Json& Require(const Json& obj, const char* field, const std::string& where) {
  if (!obj.is_object() || !obj.contains(field)) {
    throw ParseError(where + ": field '" + field + "' is missing");
  }
  return obj[field];
}

double Number(const Json& obj, const char* field, const std::string& where) {
  const Json& v = Require(obj, field, where);
  if (!v.is_number()) throw ParseError(where + ": field '" + field + "' must be a number");
  return v.get<double>();
}

TierKind ParseTierKind(const std::string& s, const std::string& where) {
  if (s == "ring") return TierKind::kRing;
  if (s == "switch") return TierKind::kSwitch;
  if (s == "mesh") return TierKind::kMesh;
  throw ParseError(where + ": field 'kind' has unknown tier kind '" + s + "'");
}

}  // namespace

std::string_view TierKindName(TierKind k) {
  switch (k) {
    case TierKind::kRing:
      return "ring";
    case TierKind::kSwitch:
      return "switch";
    case TierKind::kMesh:
      return "mesh";
  }
  return "ring";
}

double HardwareSpec::PeakFlops(ir::Precision p) const {
  auto it = peak_flops.find(p);
  if (it == peak_flops.end()) {
    throw ConfigError("hardware '" + device_id + "' has no peak FLOP/s entry for " +
                      std::string(ir::PrecisionName(p)));
  }
  return it->second;
}

void ValidateHardware(const HardwareSpec& hw) {
  if (hw.peak_flops.empty()) throw ConfigError("hardware '" + hw.device_id + "' lists no peak FLOP/s");
  for (const auto& [p, v] : hw.peak_flops) {
    if (!(v > 0)) throw ConfigError("peak FLOP/s for " + std::string(ir::PrecisionName(p)) + " must be > 0");
  }
  if (!(hw.memory_bandwidth > 0)) throw ConfigError("memory_bandwidth must be > 0");
  if (hw.memory_capacity <= 0) throw ConfigError("memory_capacity must be > 0");
  if (hw.launch_overhead_s < 0) throw ConfigError("launch_overhead must be >= 0");
  if (hw.tdp_w < 0) throw ConfigError("tdp must be >= 0");
  int64_t prev = 1;
  for (const auto& t : hw.tiers) {
    if (t.group_size < 1 || t.group_size % prev != 0) {
      throw TopologyError("tier '" + t.name + "' group_size " + std::to_string(t.group_size) +
                          " must be a positive multiple of the inner tier's " + std::to_string(prev));
    }
    if (!(t.bandwidth > 0) || t.alpha_s < 0 || t.links_per_node < 1) {
      throw ConfigError("tier '" + t.name + "' needs bandwidth > 0, alpha >= 0, links_per_node >= 1");
    }
    prev = t.group_size;
  }
}

HardwareSpec ParseHardware(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("hardware spec is not valid JSON: ") + e.what());
  }
  const std::string where = "hardware spec";
  const Json& version = Require(doc, "version", where);
  if (!version.is_string() || version.get<std::string>() != kHardwareVersion) {
    throw ParseError(where + ": field 'version' must be '" + std::string(kHardwareVersion) + "'");
  }
  HardwareSpec hw;
  const Json& id = Require(doc, "device_id", where);
  if (!id.is_string()) throw ParseError(where + ": field 'device_id' must be a string");
  hw.device_id = id.get<std::string>();
  const Json& peaks = Require(doc, "peak_flops", where);
  if (!peaks.is_object()) throw ParseError(where + ": field 'peak_flops' must be an object");
  for (const auto& [name, v] : peaks.items()) {
    auto p = ir::ParsePrecision(name);
    if (!p) throw ParseError(where + ": field 'peak_flops' has unknown precision '" + name + "'");
    if (!v.is_number()) throw ParseError(where + ": peak_flops." + name + " must be a number");
    hw.peak_flops[*p] = v.get<double>();
  }
  hw.memory_bandwidth = Number(doc, "memory_bandwidth", where);
  hw.memory_capacity = static_cast<int64_t>(Number(doc, "memory_capacity", where));
  if (doc.contains("launch_overhead")) hw.launch_overhead_s = Number(doc, "launch_overhead", where);
  if (doc.contains("tdp")) hw.tdp_w = Number(doc, "tdp", where);
  if (doc.contains("topology")) {
    const Json& topo = doc["topology"];
    if (!topo.is_array()) throw ParseError(where + ": field 'topology' must be an array");
    for (size_t i = 0; i < topo.size(); ++i) {
      std::string tw = "topology tier #" + std::to_string(i);
      LinkTier t;
      t.name = topo[i].value("name", "tier" + std::to_string(i));
      const Json& kind = Require(topo[i], "kind", tw);
      if (!kind.is_string()) throw ParseError(tw + ": field 'kind' must be a string");
      t.kind = ParseTierKind(kind.get<std::string>(), tw);
      t.group_size = static_cast<int64_t>(Number(topo[i], "group_size", tw));
      t.alpha_s = Number(topo[i], "alpha", tw);
      t.bandwidth = Number(topo[i], "bandwidth", tw);
      if (topo[i].contains("links_per_node")) {
        t.links_per_node = static_cast<int64_t>(Number(topo[i], "links_per_node", tw));
      }
      hw.tiers.push_back(t);
    }
  }
  ValidateHardware(hw);
  return hw;
}

HardwareSpec LoadHardwareFile(const std::string& path) { return ParseHardware(ReadFile(path)); }

std::string EmitHardware(const HardwareSpec& hw) {
  Json doc;
  doc["version"] = std::string(kHardwareVersion);
  doc["device_id"] = hw.device_id;
  Json peaks = Json::object();
  for (const auto& [p, v] : hw.peak_flops) peaks[std::string(ir::PrecisionName(p))] = v;
  doc["peak_flops"] = peaks;
  doc["memory_bandwidth"] = hw.memory_bandwidth;
  doc["memory_capacity"] = hw.memory_capacity;
  doc["launch_overhead"] = hw.launch_overhead_s;
  doc["tdp"] = hw.tdp_w;
  Json topo = Json::array();
  for (const auto& t : hw.tiers) {
    Json j;
    j["name"] = t.name;
    j["kind"] = std::string(TierKindName(t.kind));
    j["group_size"] = t.group_size;
    j["alpha"] = t.alpha_s;
    j["bandwidth"] = t.bandwidth;
    j["links_per_node"] = t.links_per_node;
    topo.push_back(j);
  }
  doc["topology"] = topo;
  return doc.dump(2) + "\n";
}

}  // namespace charon::engines
