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


#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include <json.hpp>

#include "charon/analysis/trace.h"
#include "charon/cli/commands.h"
#include "charon/cli/scenario.h"
#include "charon/common/file_util.h"
#include "charon/common/status.h"
#include "charon/engines/profile_db.h"
#include "charon/engines/roofline.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace charon::cli {
namespace {

namespace fs = std::filesystem;

const std::string kScenarios = CHARON_SCENARIO_DIR;

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun Cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  CliRun r;
  r.code = RunCli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("charon_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string Path(const std::string& name) const { return (dir_ / name).string(); }
  std::string Write(const std::string& name, const std::string& text) const {
    WriteFileAtomic(Path(name), text);
    return Path(name);
  }
  // Scenario text with the shipped hardware file.
  std::string TinyScenario(const std::string& extra = "") const {
    return R"({"version": "charon-scenario/1", "name": "t", "hardware": ")" + kScenarios + R"(/hw_gpu8.json",
      "model": {"hidden_size": 64, "num_heads": 4, "head_dim": 16, "ffn_hidden": 128, "num_layers": 2,
                "batch": 1, "seq_len": 32})" + extra + "}";
  }

  fs::path dir_;
};

TEST_F(CliTest, SimulateTinyScenario) {
  const std::string out = Path("report.json");
  CliRun r = Cli({"simulate", kScenarios + "/tiny.json", "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  auto doc = nlohmann::json::parse(ReadFile(out));
  EXPECT_EQ(doc["version"], "charon-report/1");
  EXPECT_GT(doc["mfu"].get<double>(), 0.0);
  EXPECT_LE(doc["mfu"].get<double>(), 1.0);
  EXPECT_FALSE(fs::exists(out + ".tmp"));
}

TEST_F(CliTest, SimulateWritesToStdoutWithoutPath) {
  CliRun r = Cli({"simulate", kScenarios + "/tiny_serve.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto doc = nlohmann::json::parse(r.out);
  EXPECT_GT(doc["inference"]["tpot_us"].get<double>(), 0);
  EXPECT_NEAR(doc["inference"]["tps_per_user"].get<double>(), 1e6 / doc["inference"]["tpot_us"].get<double>(), 1e-2);
}

TEST_F(CliTest, MissingHardwareNamesThePath) {
  std::string text = TinyScenario();
  text.replace(text.find("hw_gpu8.json"), 12, "no_such_hw.json");
  CliRun r = Cli({"simulate", Write("s.json", text)});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("no_such_hw.json"), std::string::npos) << r.err;
}

TEST_F(CliTest, DeadlockExitsThreeAndListsTheCycle) {
  const std::string out = Path("report.json");
  CliRun r = Cli({"simulate", kScenarios + "/deadlock.json", "--out", out});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("deadlock"), std::string::npos);
  EXPECT_NE(r.err.find("recv:b"), std::string::npos);
  EXPECT_NE(r.err.find("recv:a"), std::string::npos);
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(CliTest, TraceParsesAndIsByteStable) {
  CliRun a = Cli({"trace", kScenarios + "/tiny.json", "--out", Path("a.json")});
  CliRun b = Cli({"trace", kScenarios + "/tiny.json", "--out", Path("b.json")});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(ReadFile(Path("a.json")), ReadFile(Path("b.json")));
  EXPECT_FALSE(analysis::ParseChromeTrace(ReadFile(Path("a.json"))).empty());
}

TEST_F(CliTest, UnwritableOutputExitsTwo) {
  // A regular file used as a directory cannot hold the output, even for a
  // privileged user.
  const std::string blocker = Write("blocker", "x");
  CliRun r = Cli({"trace", kScenarios + "/tiny.json", "--out", blocker + "/trace.json"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(ReadFile(blocker), "x");
}

TEST_F(CliTest, RejectsUnknownFieldsAndVersions) {
  EXPECT_EQ(Cli({"simulate", Write("a.json", TinyScenario(R"(, "modle": 1)"))}).code, 2);
  std::string text = TinyScenario();
  text.replace(text.find("charon-scenario/1"), 17, "charon-scenario/9");
  EXPECT_EQ(Cli({"simulate", Write("b.json", text)}).code, 2);
  EXPECT_EQ(Cli({"simulate", Write("c.json", "{")}).code, 2);
  EXPECT_EQ(Cli({"simulate", Write("d.json", TinyScenario(R"(, "mode": "decode")"))}).code, 2);
  EXPECT_EQ(Cli({"frobnicate"}).code, 2);
  EXPECT_EQ(Cli({"--overlap", "psychic", "simulate", Write("e.json", TinyScenario())}).code, 2);
}

TEST_F(CliTest, GlobalFlagsOverrideTheScenario) {
  const std::string s = Write("s.json", TinyScenario(R"(, "parallelism": {"tp": 2})"));
  CliRun ratio = Cli({"simulate", s});
  CliRun bandwidth = Cli({"--overlap", "bandwidth", "--engines", "analytical", "simulate", s});
  ASSERT_EQ(ratio.code, 0) << ratio.err;
  ASSERT_EQ(bandwidth.code, 0) << bandwidth.err;
  CliRun verbose = Cli({"simulate", s, "--verbose"});
  EXPECT_NE(verbose.err.find("engine stack: analytical"), std::string::npos) << verbose.err;
}

TEST_F(CliTest, BreakdownPrintsMicrosecondTable) {
  CliRun r = Cli({"breakdown", kScenarios + "/tiny.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Attention"), std::string::npos);
  EXPECT_NE(r.out.find("step time (us):"), std::string::npos);
}

std::string Space(const std::string& scenario, const std::string& axes) {
  return R"({"version": "charon-space/1", "scenario": ")" + scenario + R"(", "axes": )" + axes + "}";
}

TEST_F(CliTest, SearchSingleCandidate) {
  const std::string s = Write("s.json", TinyScenario());
  CliRun r = Cli({"search", Write("space.json", Space(s, "{}")), "--out", Path("table.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto doc = nlohmann::json::parse(ReadFile(Path("table.json")));
  EXPECT_EQ(doc["rows"].size(), 1u);
  EXPECT_EQ(doc["frontier"], nlohmann::json::array({0}));
}

TEST_F(CliTest, FullyPrunedSearchWarnsAndSucceeds) {
  const std::string s = Write("s.json", TinyScenario());
  CliRun r = Cli({"search", Write("space.json", Space(s, R"({"world_size": [16], "tp": [16]})"))});
  ASSERT_EQ(r.code, 0) << r.err;
  auto doc = nlohmann::json::parse(r.out);
  EXPECT_TRUE(doc["rows"].empty());
  EXPECT_EQ(doc["pruned"].size(), 1u);
  EXPECT_NE(r.err.find("warning"), std::string::npos);
}

TEST_F(CliTest, ShippedSpaceFrontierMatchesBruteForce) {
  CliRun r = Cli({"search", kScenarios + "/tiny_space.json", "--workers", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto doc = nlohmann::json::parse(r.out);
  const auto& rows = doc["rows"];
  std::vector<size_t> expected;
  for (size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i]["feasible"].get<bool>()) continue;
    bool dominated = false;
    for (size_t j = 0; j < rows.size() && !dominated; ++j) {
      if (!rows[j]["feasible"].get<bool>()) continue;
      const double gi = rows[i]["tps_per_gpu"], ui = rows[i]["tps_per_user"];
      const double gj = rows[j]["tps_per_gpu"], uj = rows[j]["tps_per_user"];
      dominated = gj >= gi && uj >= ui && (gj > gi || uj > ui);
    }
    if (!dominated) expected.push_back(i);
  }
  auto frontier = doc["frontier"].get<std::vector<size_t>>();
  std::sort(frontier.begin(), frontier.end());
  EXPECT_EQ(frontier, expected);
  EXPECT_EQ(Cli({"search", kScenarios + "/tiny_space.json", "--workers", "1"}).out, r.out);
}

std::string MatmulEntry(int64_t m, int64_t k, int64_t n) {
  return R"({"kind": "matmul", "precision": "bf16", "inputs": [[)" + std::to_string(m) + "," + std::to_string(k) +
         "],[" + std::to_string(k) + "," + std::to_string(n) + R"(]], "output": [)" + std::to_string(m) + "," +
         std::to_string(n) + "]}";
}

TEST_F(CliTest, ProfileDbFromSweep) {
  std::string entries;
  for (int i = 0; i < 10; ++i) entries += (i ? "," : "") + MatmulEntry(64 << (i % 5), 128, 32 << (i / 5));
  const std::string sweep = Write("sweep.json", R"({"version": "charon-sweep/1", "entries": [)" + entries + "]}");
  CliRun r = Cli({"gen-profile-db", kScenarios + "/hw_gpu8.json", "--sweep", sweep, "--out", Path("db.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  engines::ProfileDb db = engines::LoadProfileDbFile(Path("db.csv"));
  ASSERT_EQ(db.size(), 10u);
  engines::HardwareSpec hw = engines::LoadHardwareFile(kScenarios + "/hw_gpu8.json");
  for (const auto& rec : db.Records()) {
    auto decoded = engines::DecodeSignature(rec.key.kind, rec.key.precision, rec.key.signature);
    EXPECT_NEAR(rec.latency_ns_mean, engines::RooflineTime(decoded.node, decoded.inputs, hw).count(),
                1e-6 * rec.latency_ns_mean);
  }
}

TEST_F(CliTest, DuplicateSweepEntriesAreDropped) {
  const std::string e = MatmulEntry(64, 64, 64);
  const std::string sweep =
      Write("sweep.json", R"({"version": "charon-sweep/1", "entries": [)" + e + "," + e + "," + e + "]}");
  CliRun r = Cli({"gen-profile-db", kScenarios + "/hw_gpu8.json", "--sweep", sweep, "--out", Path("db.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(engines::LoadProfileDbFile(Path("db.csv")).size(), 1u);
  EXPECT_NE(r.err.find("2 duplicate"), std::string::npos) << r.err;
}

TEST_F(CliTest, CalibrateRecoversLinkParameters) {
  // Ring all_reduce on p ranks: 2(p-1)(a + S/(pB)).
  const double alpha = 4e-6, bw = 5e10;
  std::string samples;
  for (int p : {2, 4, 8}) {
    for (double s : {1e6, 1e8, 1e9}) {
      const double t = 2 * (p - 1) * (alpha + s / (p * bw));
      samples += std::string(samples.empty() ? "" : ",") + R"({"ranks": )" + std::to_string(p) +
                 R"(, "bytes": )" + std::to_string(s) + R"(, "seconds": )" + std::to_string(t) + "}";
    }
  }
  const std::string path =
      Write("samples.json", R"({"version": "charon-samples/1", "kind": "all_reduce", "samples": [)" + samples + "]}");
  CliRun r = Cli({"calibrate", path});
  ASSERT_EQ(r.code, 0) << r.err;
  auto doc = nlohmann::json::parse(r.out);
  EXPECT_NEAR(doc["alpha_s"].get<double>(), alpha, 1e-8);
  EXPECT_NEAR(doc["bandwidth"].get<double>() / bw, 1.0, 1e-3);
}

TEST(ProgramTest, RoundTrips) {
  parallel::ScheduleProgram p;
  p.ranks.push_back({0, {testing::Fixed("c", parallel::kComputeStream, 10), testing::P2p("go", true, 1, 0, {0})}});
  p.ranks.push_back({1, {testing::P2p("go", false, 0, 0), testing::Fixed("d", parallel::kComputeStream, 3, {0})}});
  for (auto& rp : p.ranks) {
    for (auto& s : rp.segments) s.fixed.reset();
  }
  p.ranks[0].segments[0].fixed = Micros(10);
  p.ranks[1].segments[1].fixed = Micros(3);
  parallel::ScheduleProgram q = ParseProgram(EmitProgram(p));
  EXPECT_EQ(q.ranks, p.ranks);
}

TEST(ProgramTest, RejectsForwardDependencies) {
  EXPECT_THROW(ParseProgram(R"({"version": "charon-program/1", "ranks": [{"rank": 0, "segments": [
      {"name": "a", "duration_us": 1, "deps": [0]}]}]})"),
               ParseError);
  EXPECT_THROW(ParseProgram(R"({"version": "charon-program/1", "ranks": [{"rank": 0, "segments": [
      {"name": "s", "type": "send", "duration_us": 1}]}]})"),
               ParseError);
}

}  // namespace
}  // namespace charon::cli
