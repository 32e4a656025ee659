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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "duq/checkpoint.h"
#include "duq/config.h"
#include "duq/error.h"
#include "duq/eval.h"
#include "duq/experiments.h"
#include "duq/training.h"

namespace duq {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// Text that reads back to the same double.
std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

class Run {
 public:
  Run(const ExperimentConfig& config, std::ostream& log) : config_(config), log_(log) {}

  const ExperimentConfig& config() const { return config_; }
  std::ostream& log() { return log_; }
  fs::path Path(const std::string& name) const { return fs::path(config_.output) / name; }

  // Opens an artifact and writes the provenance comment line.
  std::ofstream Csv(const std::string& name) const {
    std::ofstream out(Path(name));
    if (!out) throw Error("cannot write '" + Path(name).string() + "'");
    out << "# seed=" << config_.seed << " config_digest=" << config_.digest << "\n";
    return out;
  }

  ordered_json Report(const std::string& command) const {
    ordered_json r;
    r["schema_version"] = 1;
    r["command"] = command;
    r["seed"] = config_.seed;
    r["config_digest"] = config_.digest;
    return r;
  }

  void WriteReport(const ordered_json& report) const {
    std::ofstream out(Path("report.json"));
    if (!out) throw Error("cannot write '" + Path("report.json").string() + "'");
    out << report.dump(2) << "\n";
  }

  CheckpointInfo Info() const { return {config_.seed, config_.digest}; }

 private:
  const ExperimentConfig& config_;
  std::ostream& log_;
};

void PrepareOutput(const ExperimentConfig& config, bool overwrite) {
  const fs::path dir(config.output);
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) {
      throw ConfigError("run.output '" + dir.string() + "' exists and is not a directory");
    }
    if (!fs::is_empty(dir) && !overwrite) {
      throw ConfigError("output directory '" + dir.string() +
                        "' already exists; pass --overwrite to reuse it");
    }
  }
  fs::create_directories(dir);
  std::ofstream resolved(dir / "config.ini");
  resolved << "# config_digest=" << config.digest << "\n" << config.canonical;
}

void WriteMetricsRow(std::ofstream& out, const EpochMetrics& m) {
  out << m.epoch << "," << Num(m.loss) << "," << Num(m.accuracy) << "\n";
}

void LogEpoch(std::ostream& log, const EpochMetrics& m) {
  log << "epoch " << m.epoch << " loss=" << Num(m.loss) << " accuracy=" << Num(m.accuracy)
      << "\n";
}

double Mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double AccuracyOf(const Scores& s, const Dataset& d) {
  return Accuracy(s.predicted, d.RequireLabels());
}

// A DUQ model or an ensemble of softmax members, loaded from eval.checkpoint.
struct EvalModel {
  std::optional<DuqModel> duq;
  Ensemble ensemble;
  std::size_t input_dim = 0;

  std::string kind() const { return duq ? "duq" : "softmax"; }
  Scores Score(const Tensor& x) const {
    return duq ? ScoreDuq(*duq, x) : ScoreEnsemble(ensemble, x);
  }
};

EvalModel LoadEvalModel(const ExperimentConfig& config) {
  const auto& paths = config.eval.checkpoints;
  if (paths.empty()) throw ConfigError("eval.checkpoint is required");
  EvalModel m;
  for (const std::string& p : paths) {
    LoadedCheckpoint c = LoadCheckpoint(p);
    if (c.kind == ModelKind::kDuq) {
      if (paths.size() != 1) {
        throw ConfigError("eval.checkpoint lists several files; only softmax members can be "
                          "combined, '" + p + "' is a duq checkpoint");
      }
      m.duq = std::get<DuqModel>(std::move(c.model));
      m.input_dim = m.duq->input_dim();
    } else {
      m.ensemble.members.push_back(std::get<SoftmaxModel>(std::move(c.model)));
      m.input_dim = m.ensemble.members.back().input_dim();
    }
  }
  return m;
}

void RequireInputDim(const EvalModel& m, const Dataset& d) {
  if (d.feature_dim() != m.input_dim) {
    throw ConfigError("checkpoint expects " + std::to_string(m.input_dim) +
                      " features, dataset '" + d.name + "' has " +
                      std::to_string(d.feature_dim()));
  }
}

void CmdTrain(Run& run) {
  const ExperimentConfig& c = run.config();
  const PreparedData data = PrepareData(c);
  std::ofstream metrics = run.Csv("metrics.csv");
  metrics << "epoch,loss,accuracy\n";
  const auto on_epoch = [&](const EpochMetrics& m) {
    WriteMetricsRow(metrics, m);
    LogEpoch(run.log(), m);
  };
  ordered_json report = run.Report("train");
  report["model_kind"] = std::string(ToString(c.model.kind));
  report["train_size"] = data.train.size();
  Scores train_scores;
  std::optional<Scores> test_scores;
  if (c.model.kind == ModelKind::kDuq) {
    DuqModel model = MakeDuqModel(c, data.train.feature_dim(), data.train.class_count, c.seed);
    const auto history = Train(model, data.train, c.train, on_epoch);
    report["epochs"] = history.size();
    SaveCheckpoint(run.Path("model.ckpt"), model, run.Info());
    train_scores = ScoreDuq(model, data.train.features);
    if (data.test) test_scores = ScoreDuq(model, data.test->features);
  } else {
    SoftmaxModel model =
        MakeSoftmaxModel(c, data.train.feature_dim(), data.train.class_count, c.seed);
    const auto history = TrainCrossEntropy(model, data.train, c.train, on_epoch);
    report["epochs"] = history.size();
    SaveCheckpoint(run.Path("model.ckpt"), model, run.Info());
    Ensemble single;
    single.members.push_back(std::move(model));
    train_scores = ScoreEnsemble(single, data.train.features);
    if (data.test) test_scores = ScoreEnsemble(single, data.test->features);
  }
  report["train_accuracy"] = AccuracyOf(train_scores, data.train);
  report["train_mean_confidence"] = Mean(train_scores.confidence);
  if (test_scores && data.test->labels) {
    report["test_accuracy"] = AccuracyOf(*test_scores, *data.test);
    report["test_mean_confidence"] = Mean(test_scores->confidence);
  }
  report["checkpoint"] = "model.ckpt";
  run.WriteReport(report);
}

void CmdEnsembleTrain(Run& run) {
  const ExperimentConfig& c = run.config();
  const PreparedData data = PrepareData(c);
  std::ofstream metrics = run.Csv("metrics.csv");
  metrics << "member,epoch,loss,accuracy\n";
  // Rows are buffered per member so parallel training still writes them in
  // member order.
  std::vector<std::vector<EpochMetrics>> rows(c.ensemble.members);
  const Ensemble ensemble = TrainEnsemble(
      data.train, c.ExtractorSizes(data.train.feature_dim()), c.train, c.ensemble.members,
      c.seed, c.ensemble.parallel,
      [&rows](std::size_t member, const EpochMetrics& m) { rows[member].push_back(m); });
  fs::create_directories(run.Path("members"));
  ordered_json report = run.Report("ensemble-train");
  ordered_json files = ordered_json::array();
  for (std::size_t i = 0; i < ensemble.members.size(); ++i) {
    for (const EpochMetrics& m : rows[i]) {
      metrics << i << ",";
      WriteMetricsRow(metrics, m);
    }
    const std::string name = "members/member_" + std::to_string(i) + ".ckpt";
    SaveCheckpoint(run.Path(name), ensemble.members[i], {c.seed + i, c.digest});
    files.push_back(name);
  }
  const Scores train_scores = ScoreEnsemble(ensemble, data.train.features);
  run.log() << "trained " << ensemble.members.size() << " members, ensemble accuracy "
            << Num(AccuracyOf(train_scores, data.train)) << "\n";
  report["members"] = ensemble.members.size();
  report["member_seeds"] = ordered_json::array();
  for (std::size_t i = 0; i < ensemble.members.size(); ++i) {
    report["member_seeds"].push_back(c.seed + i);
  }
  report["checkpoints"] = files;
  report["train_accuracy"] = AccuracyOf(train_scores, data.train);
  if (data.test && data.test->labels) {
    report["test_accuracy"] =
        AccuracyOf(ScoreEnsemble(ensemble, data.test->features), *data.test);
  }
  run.WriteReport(report);
}

void CmdEvalOod(Run& run) {
  const ExperimentConfig& c = run.config();
  const EvalModel model = LoadEvalModel(c);
  const PreparedData data = PrepareData(c);
  Dataset in;
  if (!c.eval.in_images.empty()) {
    in = LoadAuxiliary(data, c.eval.in_images, c.eval.in_labels, data.train.class_count, "in");
  } else if (data.test) {
    in = *data.test;
  } else {
    throw ConfigError("eval-ood needs eval.in_images or data.test_images");
  }
  if (c.eval.ood_images.empty()) throw ConfigError("eval.ood_images is required");
  const Dataset ood =
      LoadAuxiliary(data, c.eval.ood_images, "", data.train.class_count, "ood");
  RequireInputDim(model, in);

  const Scores s_in = model.Score(in.features);
  const Scores s_out = model.Score(ood.features);
  const std::vector<int>& labels = in.RequireLabels();
  const auto correct = std::make_unique<bool[]>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) correct[i] = s_in.predicted[i] == labels[i];
  const std::span<const bool> flags(correct.get(), labels.size());

  const RocCurve roc = ComputeRocCurve(s_in.confidence, s_out.confidence);
  std::ofstream roc_csv = run.Csv("roc.csv");
  roc_csv << "fpr,tpr\n";
  for (const RocPoint& p : roc.points) roc_csv << Num(p.fpr) << "," << Num(p.tpr) << "\n";

  const RejectionCurve rej =
      ComputeRejectionCurve(flags, s_in.confidence, s_out.confidence, c.eval.rejection_step);
  std::ofstream rej_csv = run.Csv("rejection.csv");
  rej_csv << "fraction,accuracy,theoretical_max\n";
  for (const RejectionPoint& p : rej.points) {
    rej_csv << Num(p.fraction) << "," << Num(p.accuracy) << "," << Num(p.theoretical_max)
            << "\n";
  }

  const std::vector<double> h_in = NormalizedHistogram(s_in.confidence, c.eval.bins);
  const std::vector<double> h_out = NormalizedHistogram(s_out.confidence, c.eval.bins);
  std::ofstream hist = run.Csv("histograms.csv");
  hist << "bin_low,bin_high,in,ood\n";
  const double width = 1.0 / static_cast<double>(c.eval.bins);
  for (std::size_t b = 0; b < c.eval.bins; ++b) {
    hist << Num(width * static_cast<double>(b)) << "," << Num(width * static_cast<double>(b + 1))
         << "," << Num(h_in[b]) << "," << Num(h_out[b]) << "\n";
  }

  ordered_json report = run.Report("eval-ood");
  report["model_kind"] = model.kind();
  report["members"] = model.duq ? 1 : model.ensemble.members.size();
  report["n_in"] = in.size();
  report["n_ood"] = ood.size();
  report["auroc"] = roc.auroc;
  report["in_accuracy"] = Accuracy(s_in.predicted, labels);
  report["in_mean_confidence"] = Mean(s_in.confidence);
  report["ood_mean_confidence"] = Mean(s_out.confidence);
  report["rejection_step"] = c.eval.rejection_step;
  report["histogram_bins"] = c.eval.bins;
  report["histograms"] = {{"in", h_in}, {"ood", h_out}};
  report["artifacts"] = {"roc.csv", "rejection.csv", "histograms.csv"};
  run.WriteReport(report);
  run.log() << "auroc " << Num(roc.auroc) << "\n";
}

void CmdGrid(Run& run) {
  const ExperimentConfig& c = run.config();
  const EvalModel model = LoadEvalModel(c);
  Scorer scorer;
  scorer.input_dim = model.input_dim;
  scorer.score = [&model](const Tensor& x) { return model.Score(x).confidence; };
  const UncertaintyGrid grid =
      ComputeUncertaintyGrid(scorer, c.eval.grid_x, c.eval.grid_y, c.eval.grid_resolution,
                             c.eval.grid_resolution);
  std::ofstream csv = run.Csv("grid.csv");
  csv << "x,y,confidence\n";
  for (const GridPoint& p : grid.points) {
    csv << Num(p.x) << "," << Num(p.y) << "," << Num(p.value) << "\n";
  }
  ordered_json report = run.Report("grid");
  report["model_kind"] = model.kind();
  report["nx"] = grid.nx;
  report["ny"] = grid.ny;
  report["x_range"] = {c.eval.grid_x.first, c.eval.grid_x.second};
  report["y_range"] = {c.eval.grid_y.first, c.eval.grid_y.second};
  report["min_confidence"] = grid.min_value;
  report["max_confidence"] = grid.max_value;
  report["artifacts"] = {"grid.csv"};
  run.WriteReport(report);
}

void WriteSelection(Run& run, const std::string& command, const std::string& quantity,
                    const SelectionResult& result, std::size_t repeats) {
  std::ofstream csv = run.Csv("selection.csv");
  csv << "value,mean";
  for (std::size_t r = 0; r < repeats; ++r) csv << ",repeat_" << r;
  csv << ",error\n";
  ordered_json rows = ordered_json::array();
  for (const SelectionRow& row : result.rows) {
    csv << Num(row.value) << "," << (row.error ? "" : Num(row.mean));
    for (std::size_t r = 0; r < repeats; ++r) {
      csv << "," << (r < row.scores.size() ? Num(row.scores[r]) : "");
    }
    csv << "," << (row.error ? "\"" + *row.error + "\"" : "") << "\n";
    ordered_json j;
    j["value"] = row.value;
    j["scores"] = row.scores;
    if (row.error) {
      j["error"] = *row.error;
    } else {
      j["mean"] = row.mean;
    }
    rows.push_back(j);
  }
  ordered_json report = run.Report(command);
  report["quantity"] = quantity;
  report["best"] = result.best;
  report["rows"] = rows;
  run.WriteReport(report);
  run.log() << "best " << Num(result.best) << "\n";
}

void CmdSelectSigma(Run& run) {
  const PreparedData data = PrepareData(run.config());
  WriteSelection(run, "select-sigma", "validation_accuracy",
                 RunSigmaSelection(run.config(), data), run.config().eval.repeats);
}

void CmdSelectLambda(Run& run) {
  const PreparedData data = PrepareData(run.config());
  const bool third = run.config().eval.lambda_mode == LambdaSelectionMode::kThirdDataset;
  WriteSelection(run, "select-lambda", third ? "third_dataset_auroc" : "misclassification_auroc",
                 RunLambdaSelection(run.config(), data), run.config().eval.repeats);
}

void CmdGenData(Run& run) {
  const ExperimentConfig& c = run.config();
  if (c.data.source == DataSource::kIdx) {
    throw ConfigError("gen-data needs a generated data.source (moons, gaussians or sign)");
  }
  ExperimentConfig raw = c;
  raw.data.normalization.reset();
  raw.data.validation_fraction = 0.0;
  const PreparedData data = PrepareData(raw);
  std::ofstream train = run.Csv("data.csv");
  WriteCsv(train, data.train);
  ordered_json report = run.Report("gen-data");
  report["train_size"] = data.train.size();
  ordered_json artifacts = {"data.csv"};
  if (data.test) {
    std::ofstream test = run.Csv("test.csv");
    WriteCsv(test, *data.test);
    report["test_size"] = data.test->size();
    artifacts.push_back("test.csv");
  }
  report["artifacts"] = artifacts;
  run.WriteReport(report);
}

const std::map<std::string, std::pair<std::string, std::function<void(Run&)>>>& Commands() {
  static const std::map<std::string, std::pair<std::string, std::function<void(Run&)>>> cmds{
      {"train", {"Train one model and write metrics.csv, model.ckpt, report.json", CmdTrain}},
      {"eval-ood",
       {"AUROC, ROC, rejection curve and histograms for eval.checkpoint", CmdEvalOod}},
      {"grid", {"Confidence on a 2-D lattice (grid.csv)", CmdGrid}},
      {"select-sigma", {"Length-scale sweep scored by validation accuracy", CmdSelectSigma}},
      {"select-lambda", {"Penalty-weight sweep scored by AUROC", CmdSelectLambda}},
      {"ensemble-train", {"Train softmax ensemble members", CmdEnsembleTrain}},
      {"gen-data", {"Write a generated dataset as CSV", CmdGenData}},
  };
  return cmds;
}

}  // namespace

int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deterministic uncertainty quantification experiments", "duq"};
  app.require_subcommand(1);
  std::string config_path;
  bool overwrite = false;
  std::vector<std::string> overrides;
  for (const auto& [name, entry] : Commands()) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    sub->add_option("-c,--config", config_path, "INI config file");
    sub->add_flag("--overwrite", overwrite, "Reuse an existing output directory");
    sub->add_option("overrides", overrides, "section.key=value overrides");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (app.exit(e, out, err) == 0) return kExitOk;
    err << app.help();
    return kExitUserError;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    const ExperimentConfig config = LoadConfig(config_path, overrides);
    PrepareOutput(config, overwrite);
    Run run(config, out);
    Commands().at(name).second(run);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "duq " << name << ": " << e.what() << "\n";
    return kExitUserError;
  } catch (const FormatError& e) {
    err << "duq " << name << ": " << e.what() << "\n";
    return kExitUserError;
  } catch (const ShapeError& e) {
    err << "duq " << name << ": " << e.what() << "\n";
    return kExitUserError;
  } catch (const std::exception& e) {
    err << "duq " << name << ": " << e.what() << "\n";
    return kExitRuntimeError;
  }
}

}  // namespace duq
