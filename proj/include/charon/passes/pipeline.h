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


#ifndef CHARON_PASSES_PIPELINE_H_
#define CHARON_PASSES_PIPELINE_H_

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "charon/ir/graph.h"
#include "charon/passes/transforms.h"

namespace charon::passes {

inline constexpr std::string_view kPassesVersion = "charon-passes/1";

struct PassReport {
  std::string pass;
  int matches = 0;
  int nodes_added = 0;
  int nodes_removed = 0;
  std::vector<std::string> notes;
};

class Pass {
 public:
  virtual ~Pass() = default;
  virtual std::string Name() const = 0;
  virtual ir::OperatorGraph Run(const ir::OperatorGraph& g, PassReport& report) const = 0;
};

class CanonicalizePass : public Pass {
 public:
  std::string Name() const override { return "canonicalize"; }
  ir::OperatorGraph Run(const ir::OperatorGraph& g, PassReport& report) const override;
};

class QuantizePass : public Pass {
 public:
  explicit QuantizePass(PrecisionMap map);
  std::string Name() const override { return "quantize"; }
  ir::OperatorGraph Run(const ir::OperatorGraph& g, PassReport& report) const override;

 private:
  PrecisionMap map_;
};

class FusePass : public Pass {
 public:
  // Defaults to every built-in rewrite.
  FusePass();
  explicit FusePass(std::vector<Rewrite> rewrites);
  std::string Name() const override { return "fuse"; }
  ir::OperatorGraph Run(const ir::OperatorGraph& g, PassReport& report) const override;

 private:
  std::vector<Rewrite> rewrites_;
};

class RecomputePass : public Pass {
 public:
  explicit RecomputePass(RecomputePolicy policy) : policy_(std::move(policy)) {}
  std::string Name() const override { return "recompute"; }
  ir::OperatorGraph Run(const ir::OperatorGraph& g, PassReport& report) const override;

 private:
  RecomputePolicy policy_;
};

// Looks up a built-in rewrite: bias, elementwise_chain, matmul_activation.
Rewrite BuiltinRewrite(std::string_view name);

class PassPipeline {
 public:
  struct Result {
    ir::OperatorGraph graph;
    std::vector<PassReport> reports;
  };

  void Add(std::shared_ptr<const Pass> pass) { passes_.push_back(std::move(pass)); }
  size_t size() const { return passes_.size(); }
  bool empty() const { return passes_.empty(); }
  std::vector<std::string> Names() const;

  // Runs the passes in order and validates after each one. Any failure is
  // rethrown as RewriteError naming the pass.
  Result Run(const ir::OperatorGraph& g) const;

  // Keeps only passes for which `keep(name)` is true, in order.
  template <typename Pred>
  PassPipeline Filter(Pred keep) const {
    PassPipeline p;
    for (const auto& pass : passes_) {
      if (keep(pass->Name())) p.Add(pass);
    }
    return p;
  }

 private:
  std::vector<std::shared_ptr<const Pass>> passes_;
};

// Parses a charon-passes/1 document:
//   {"version": "charon-passes/1",
//    "passes": [{"name": "quantize", "params": {"weight": "fp8"}}, ...]}
// Pass params: quantize takes the precision map; fuse takes an optional
// "rewrites" list; recompute takes "tensors" (list), "full" (bool) and
// "keep_peak" (bool). Throws ParseError on unknown passes or params.
PassPipeline ParsePipeline(std::string_view text);
PassPipeline LoadPipelineFile(const std::string& path);

}  // namespace charon::passes

#endif  // CHARON_PASSES_PIPELINE_H_
