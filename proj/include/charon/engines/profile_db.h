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


#ifndef CHARON_ENGINES_PROFILE_DB_H_
#define CHARON_ENGINES_PROFILE_DB_H_

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "charon/engines/hardware.h"
#include "charon/ir/op.h"
#include "charon/ir/tensor.h"

namespace charon::engines {

// Canonical key text for one operator instance:
//   "<attr>=<value>&...|<input shapes ;-joined>|<output shapes ;-joined>"
// Only attributes that change the kernel are kept (sorted by name); the
// op kind and precision live in their own key fields.
std::string ShapeSignature(const ir::OpNode& n, std::span<const ir::TensorMeta> inputs);

// Rebuilds a node and its input metas from a signature so records can be
// featurized or re-priced.
struct DecodedSignature {
  ir::OpNode node;
  std::vector<ir::TensorMeta> inputs;
};
DecodedSignature DecodeSignature(ir::OpKind kind, ir::Precision precision, std::string_view signature);

struct ProfileKey {
  std::string device_id;
  ir::OpKind kind = ir::OpKind::kNoop;
  std::string signature;
  ir::Precision precision = ir::Precision::kBF16;

  auto operator<=>(const ProfileKey&) const = default;
};

struct ProfileRecord {
  ProfileKey key;
  double latency_ns_mean = 0;
  int64_t samples = 1;
};

class ProfileDb {
 public:
  // Throws ConfigError on a duplicate key or non-positive latency.
  void Add(const ProfileRecord& record);
  // Returns false (and leaves the db unchanged) for an existing key.
  bool AddIfAbsent(const ProfileRecord& record);

  std::optional<double> Lookup(const ProfileKey& key) const;
  bool HasKind(const std::string& device_id, ir::OpKind kind) const;
  std::vector<ProfileRecord> RecordsFor(const std::string& device_id, ir::OpKind kind) const;
  std::vector<ProfileRecord> Records() const;
  size_t size() const { return records_.size(); }

 private:
  std::map<ProfileKey, ProfileRecord> records_;
};

ProfileKey MakeKey(const std::string& device_id, const ir::OpNode& n, std::span<const ir::TensorMeta> inputs);

// Line-delimited text with header
//   device_id,op_kind,shape_signature,precision,latency_ns_mean,samples
ProfileDb ParseProfileDb(std::string_view text);
ProfileDb LoadProfileDbFile(const std::string& path);
std::string EmitProfileDb(const ProfileDb& db);

struct SweepEntry {
  ir::OpNode node;
  std::vector<ir::TensorMeta> inputs;
};

struct SyntheticDbResult {
  ProfileDb db;
  int duplicates = 0;
};

// Prices every sweep entry with the roofline model. Entries whose key is
// already present are counted in `duplicates` and skipped.
SyntheticDbResult GenerateSyntheticDb(const HardwareSpec& hw, std::span<const SweepEntry> sweep);

}  // namespace charon::engines

#endif  // CHARON_ENGINES_PROFILE_DB_H_
