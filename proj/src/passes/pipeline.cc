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


#include "charon/passes/pipeline.h"

#include <json.hpp>

#include "charon/common/file_util.h"
#include "charon/common/status.h"

namespace charon::passes {
namespace {

void Record(PassReport& report, const RewriteResult& r) {
  report.matches += r.matches;
  report.nodes_added += r.nodes_added;
  report.nodes_removed += r.nodes_removed;
}

}  // namespace

ir::OperatorGraph CanonicalizePass::Run(const ir::OperatorGraph& g, PassReport& report) const {
  RewriteResult r = Canonicalize(g);
  Record(report, r);
  return std::move(r.graph);
}

QuantizePass::QuantizePass(PrecisionMap map) : map_(std::move(map)) { CheckPrecisionMap(map_); }

ir::OperatorGraph QuantizePass::Run(const ir::OperatorGraph& g, PassReport& report) const {
  RewriteResult r = Quantize(g, map_);
  Record(report, r);
  return std::move(r.graph);
}

FusePass::FusePass() : rewrites_{BiasFusion(), MatmulActivationFusion(), ElementwiseChainFusion()} {}

FusePass::FusePass(std::vector<Rewrite> rewrites) : rewrites_(std::move(rewrites)) {}

ir::OperatorGraph FusePass::Run(const ir::OperatorGraph& g, PassReport& report) const {
  RewriteResult r = Fuse(g, rewrites_);
  Record(report, r);
  return std::move(r.graph);
}

ir::OperatorGraph RecomputePass::Run(const ir::OperatorGraph& g, PassReport& report) const {
  RecomputeResult r = Recompute(g, policy_);
  Record(report, r.rewrite);
  for (const auto& t : r.skipped) report.notes.push_back("skipped " + t + ": would raise peak memory");
  return std::move(r.rewrite.graph);
}

Rewrite BuiltinRewrite(std::string_view name) {
  if (name == "bias") return BiasFusion();
  if (name == "elementwise_chain") return ElementwiseChainFusion();
  if (name == "matmul_activation") return MatmulActivationFusion();
  throw ConfigError("unknown rewrite '" + std::string(name) + "'");
}

std::vector<std::string> PassPipeline::Names() const {
  std::vector<std::string> names;
  for (const auto& p : passes_) names.push_back(p->Name());
  return names;
}

PassPipeline::Result PassPipeline::Run(const ir::OperatorGraph& g) const {
  Result result;
  result.graph = g;
  for (size_t i = 0; i < passes_.size(); ++i) {
    PassReport report;
    report.pass = passes_[i]->Name();
    try {
      ir::OperatorGraph next = passes_[i]->Run(result.graph, report);
      ir::Validate(next);
      result.graph = std::move(next);
    } catch (const Error& e) {
      throw RewriteError("pass " + std::to_string(i) + " '" + report.pass + "' failed: " + e.what());
    }
    result.reports.push_back(std::move(report));
  }
  return result;
}

namespace {

using nlohmann::json;

void CheckKeys(const json& params, const std::string& pass, std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, value] : params.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ParseError("pass '" + pass + "': unknown param '" + key + "'");
    }
  }
}

std::shared_ptr<const Pass> MakePass(const std::string& name, const json& params) {
  if (!params.is_object()) throw ParseError("pass '" + name + "': params must be an object");
  if (name == "canonicalize") {
    CheckKeys(params, name, {});
    return std::make_shared<CanonicalizePass>();
  }
  if (name == "quantize") {
    PrecisionMap map;
    for (const auto& [key, value] : params.items()) {
      auto p = value.is_string() ? ir::ParsePrecision(value.get<std::string>()) : std::nullopt;
      if (!p) throw ParseError("pass 'quantize': param '" + key + "' must name a precision");
      map[key] = *p;
    }
    return std::make_shared<QuantizePass>(std::move(map));
  }
  if (name == "fuse") {
    CheckKeys(params, name, {"rewrites"});
    if (!params.contains("rewrites")) return std::make_shared<FusePass>();
    std::vector<Rewrite> rewrites;
    for (const auto& r : params.at("rewrites")) rewrites.push_back(BuiltinRewrite(r.get<std::string>()));
    return std::make_shared<FusePass>(std::move(rewrites));
  }
  if (name == "recompute") {
    CheckKeys(params, name, {"tensors", "full", "keep_peak"});
    RecomputePolicy policy;
    policy.full = params.value("full", false);
    policy.keep_peak = params.value("keep_peak", false);
    if (params.contains("tensors")) policy.tensors = params.at("tensors").get<std::vector<std::string>>();
    return std::make_shared<RecomputePass>(std::move(policy));
  }
  throw ParseError("unknown pass '" + name + "'");
}

}  // namespace

PassPipeline ParsePipeline(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("pass pipeline: ") + e.what());
  }
  if (!doc.is_object() || doc.value("version", "") != kPassesVersion) {
    throw ParseError("pass pipeline: expected version '" + std::string(kPassesVersion) + "'");
  }
  PassPipeline pipeline;
  try {
    for (const auto& entry : doc.at("passes")) {
      pipeline.Add(MakePass(entry.at("name").get<std::string>(), entry.value("params", json::object())));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("pass pipeline: ") + e.what());
  } catch (const ConfigError& e) {
    if (dynamic_cast<const ParseError*>(&e)) throw;
    throw ParseError(std::string("pass pipeline: ") + e.what());
  }
  return pipeline;
}

PassPipeline LoadPipelineFile(const std::string& path) { return ParsePipeline(ReadFile(path)); }

}  // namespace charon::passes
