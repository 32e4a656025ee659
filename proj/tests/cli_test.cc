// Copyright 2026 The DUQ Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "duq/runner.h"

#include <algorithm>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "duq/data.h"
#include "fixtures.h"

namespace duq {
namespace {

using testing::ReadFile;
using testing::ScratchDir;

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult Invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "duq");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = RunCli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string Config(const std::string& name) {
  return std::string(DUQ_SOURCE_DIR) + "/configs/" + name;
}

std::size_t DataRows(const std::string& csv) {
  // Provenance line and header excluded.
  return static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) - 2;
}

TEST(CliTest, UnknownSubcommandPrintsUsage) {
  const CliResult r = Invoke({"bogus"});
  EXPECT_EQ(r.code, kExitUserError);
  EXPECT_NE(r.err.find("Subcommands"), std::string::npos) << r.err;
}

TEST(CliTest, MissingSubcommandFails) {
  EXPECT_EQ(Invoke({}).code, kExitUserError);
}

TEST(CliTest, HelpSucceeds) {
  EXPECT_EQ(Invoke({"--help"}).code, kExitOk);
}

TEST(CliTest, TrainTwoMoonsRecipe) {
  ScratchDir dir("cli_train");
  const CliResult r =
      Invoke({"train", "-c", Config("two_moons.ini"), "run.output=" + (dir / "run").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const std::string metrics = ReadFile(dir / "run" / "metrics.csv");
  EXPECT_EQ(metrics.rfind("# seed=0 config_digest=", 0), 0u);
  EXPECT_NE(metrics.find("\nepoch,loss,accuracy\n"), std::string::npos);
  EXPECT_EQ(DataRows(metrics), 30u);
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "model.ckpt"));
  const auto report = nlohmann::json::parse(ReadFile(dir / "run" / "report.json"));
  EXPECT_EQ(report["schema_version"], 1);
  EXPECT_EQ(report["command"], "train");
  EXPECT_EQ(report["epochs"], 30);
  EXPECT_GE(report["train_accuracy"].get<double>(), 0.99);
}

TEST(CliTest, TrainIsBitReproducible) {
  ScratchDir dir("cli_repro");
  for (const char* sub : {"a", "b"}) {
    const CliResult r = Invoke({"train", "-c", Config("two_moons.ini"), "train.epochs=3",
                             "run.output=" + (dir / sub).string()});
    ASSERT_EQ(r.code, kExitOk) << r.err;
  }
  EXPECT_EQ(ReadFile(dir / "a" / "metrics.csv"), ReadFile(dir / "b" / "metrics.csv"));
  EXPECT_EQ(ReadFile(dir / "a" / "model.ckpt"), ReadFile(dir / "b" / "model.ckpt"));
  EXPECT_EQ(ReadFile(dir / "a" / "report.json"), ReadFile(dir / "b" / "report.json"));
}

TEST(CliTest, ExistingOutputNeedsOverwrite) {
  ScratchDir dir("cli_overwrite");
  const std::string out = "run.output=" + dir.path().string();
  testing::WriteText(dir / "keep.txt", "x");
  const CliResult refused = Invoke({"gen-data", out});
  EXPECT_EQ(refused.code, kExitUserError);
  EXPECT_NE(refused.err.find("--overwrite"), std::string::npos) << refused.err;
  EXPECT_EQ(Invoke({"gen-data", "--overwrite", out}).code, kExitOk);
  EXPECT_TRUE(std::filesystem::exists(dir / "data.csv"));
}

TEST(CliTest, ConfigErrorsExitWithOne) {
  ScratchDir dir("cli_config");
  const std::string out = "run.output=" + (dir / "r").string();
  const CliResult bad = Invoke({"train", out, "train.learning_rate=-1"});
  EXPECT_EQ(bad.code, kExitUserError);
  EXPECT_NE(bad.err.find("train.learning_rate"), std::string::npos);
  EXPECT_EQ(Invoke({"train", out, "train.bogus=1"}).code, kExitUserError);
  EXPECT_EQ(Invoke({"train", "-c", (dir / "none.ini").string(), out}).code, kExitUserError);
  EXPECT_EQ(Invoke({"eval-ood", out, "eval.checkpoint=" + (dir / "none.ckpt").string(),
                 "eval.ood_images=x"})
                .code,
            kExitUserError);
}

TEST(CliTest, GenDataWritesCsv) {
  ScratchDir dir("cli_gen");
  ASSERT_EQ(Invoke({"gen-data", "run.output=" + (dir / "g").string(), "data.points=10",
                 "data.test_points=4"})
                .code,
            kExitOk);
  EXPECT_EQ(DataRows(ReadFile(dir / "g" / "data.csv")), 10u);
  EXPECT_EQ(DataRows(ReadFile(dir / "g" / "test.csv")), 4u);
}

TEST(CliTest, GridOfTrainedModel) {
  ScratchDir dir("cli_grid");
  ASSERT_EQ(Invoke({"train", "-c", Config("two_moons.ini"), "train.epochs=2",
                 "run.output=" + (dir / "t").string()})
                .code,
            kExitOk);
  const CliResult r = Invoke({"grid", "-c", Config("two_moons.ini"), "eval.grid_resolution=5",
                           "eval.checkpoint=" + (dir / "t" / "model.ckpt").string(),
                           "run.output=" + (dir / "g").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(DataRows(ReadFile(dir / "g" / "grid.csv")), 25u);
}

TEST(CliTest, SelectSigmaWritesOneRowPerValue) {
  ScratchDir dir("cli_sigma");
  const CliResult r =
      Invoke({"select-sigma", "run.output=" + (dir / "s").string(), "data.points=200",
              "data.validation_fraction=0.25", "train.epochs=2", "eval.sigma_grid=0.1,0.3,1",
              "eval.repeats=2"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const std::string csv = ReadFile(dir / "s" / "selection.csv");
  EXPECT_NE(csv.find("value,mean,repeat_0,repeat_1,error"), std::string::npos);
  EXPECT_EQ(DataRows(csv), 3u);
  const auto report = nlohmann::json::parse(ReadFile(dir / "s" / "report.json"));
  EXPECT_EQ(report["command"], "select-sigma");
}

TEST(CliTest, SelectSigmaNeedsValidationSplit) {
  ScratchDir dir("cli_sigma_split");
  EXPECT_EQ(Invoke({"select-sigma", "run.output=" + (dir / "s").string(),
                    "eval.sigma_grid=0.1"})
                .code,
            kExitUserError);
}

TEST(CliTest, SelectLambdaInDistribution) {
  ScratchDir dir("cli_lambda");
  const CliResult r =
      Invoke({"select-lambda", "run.output=" + (dir / "l").string(), "data.points=200",
              "data.noise=0.3", "data.validation_fraction=0.25", "train.epochs=2",
              "model.sigma=0.3", "eval.lambda_grid=0,0.5"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(DataRows(ReadFile(dir / "l" / "selection.csv")), 2u);
}

TEST(CliTest, EnsembleTrainWritesMembers) {
  ScratchDir dir("cli_ensemble");
  const CliResult r = Invoke({"ensemble-train", "-c", Config("two_moons_ensemble.ini"),
                              "ensemble.members=2", "train.epochs=2",
                              "run.output=" + (dir / "e").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "e" / "members" / "member_0.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "e" / "members" / "member_1.ckpt"));
  EXPECT_EQ(DataRows(ReadFile(dir / "e" / "metrics.csv")), 4u);
}

// Two 2x2 pixel classes (dark top row vs dark bottom row) and uniform noise
// as the out-of-distribution set.
void WriteImageFixtures(const std::filesystem::path& dir) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> jitter(0, 40);
  const auto make = [&](std::uint32_t count, IdxImages& img, std::vector<std::uint8_t>& lbl) {
    img = IdxImages{count, 2, 2, {}};
    for (std::uint32_t i = 0; i < count; ++i) {
      const int y = static_cast<int>(i % 2);
      for (int p = 0; p < 4; ++p) {
        const bool top = p < 2;
        const int base = (top == (y == 0)) ? 20 : 200;
        img.pixels.push_back(static_cast<std::uint8_t>(base + jitter(rng)));
      }
      lbl.push_back(static_cast<std::uint8_t>(y));
    }
  };
  IdxImages train, test;
  std::vector<std::uint8_t> train_lbl, test_lbl;
  make(200, train, train_lbl);
  make(60, test, test_lbl);
  WriteIdxImages(dir / "train-images", train);
  WriteIdxLabels(dir / "train-labels", train_lbl);
  WriteIdxImages(dir / "test-images", test);
  WriteIdxLabels(dir / "test-labels", test_lbl);

  std::uniform_int_distribution<int> any(0, 255);
  IdxImages noise{50, 2, 2, {}};
  std::vector<std::uint8_t> noise_lbl;
  for (int i = 0; i < 200; ++i) noise.pixels.push_back(static_cast<std::uint8_t>(any(rng)));
  for (int i = 0; i < 50; ++i) noise_lbl.push_back(static_cast<std::uint8_t>(i % 2));
  WriteIdxImages(dir / "noise-images", noise);
  WriteIdxLabels(dir / "noise-labels", noise_lbl);
}

TEST(CliTest, EvalOodSwapMirrorsAuroc) {
  ScratchDir dir("cli_eval");
  WriteImageFixtures(dir.path());
  const std::string d = dir.path().string();
  const std::vector<std::string> common{
      "data.source=idx",          "data.classes=2",
      "data.train_images=" + d + "/train-images", "data.train_labels=" + d + "/train-labels",
      "data.test_images=" + d + "/test-images",   "data.test_labels=" + d + "/test-labels",
      "data.normalization=per_channel",           "model.hidden=16",
      "model.embedding=8",        "model.centroid_size=8",
      "model.sigma=0.3",          "train.epochs=5",
      "train.lambda=0.1"};
  const auto with = [&](std::vector<std::string> args, std::vector<std::string> extra) {
    args.insert(args.end(), common.begin(), common.end());
    args.insert(args.end(), extra.begin(), extra.end());
    return Invoke(args);
  };
  ASSERT_EQ(with({"train"}, {"run.output=" + d + "/model"}).code, kExitOk);
  const std::string ckpt = "eval.checkpoint=" + d + "/model/model.ckpt";

  const CliResult forward =
      with({"eval-ood"}, {ckpt, "eval.ood_images=" + d + "/noise-images",
                          "run.output=" + d + "/fwd"});
  ASSERT_EQ(forward.code, kExitOk) << forward.err;
  const CliResult swapped =
      with({"eval-ood"}, {ckpt, "eval.in_images=" + d + "/noise-images",
                          "eval.in_labels=" + d + "/noise-labels",
                          "eval.ood_images=" + d + "/test-images", "run.output=" + d + "/swp"});
  ASSERT_EQ(swapped.code, kExitOk) << swapped.err;

  const auto a = nlohmann::json::parse(ReadFile(dir / "fwd" / "report.json"));
  const auto b = nlohmann::json::parse(ReadFile(dir / "swp" / "report.json"));
  EXPECT_NEAR(a["auroc"].get<double>() + b["auroc"].get<double>(), 1.0, 1e-12);
  EXPECT_EQ(a["n_in"], 60);
  EXPECT_EQ(a["n_ood"], 50);
  const std::string rejection = ReadFile(dir / "fwd" / "rejection.csv");
  EXPECT_NE(rejection.find("fraction,accuracy,theoretical_max"), std::string::npos);
  EXPECT_EQ(DataRows(rejection), 200u);
  EXPECT_EQ(DataRows(ReadFile(dir / "fwd" / "histograms.csv")), 50u);
}

TEST(CliTest, EvalOodRequiresOodImages) {
  ScratchDir dir("cli_eval_missing");
  ASSERT_EQ(Invoke({"train", "train.epochs=1", "run.output=" + (dir / "t").string()}).code,
            kExitOk);
  const CliResult r = Invoke({"eval-ood", "eval.checkpoint=" + (dir / "t" / "model.ckpt").string(),
                           "run.output=" + (dir / "e").string()});
  EXPECT_EQ(r.code, kExitUserError);
  EXPECT_NE(r.err.find("eval.ood_images"), std::string::npos) << r.err;
}

}  // namespace
}  // namespace duq
