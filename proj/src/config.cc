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

#include "duq/config.h"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "duq/error.h"
#include "duq/random.h"

namespace duq {
namespace {

ConfigValues MakeDefaults() {
  return {
      {"run.seed", "0"},
      {"run.output", "runs/default"},

      {"model.kind", "duq"},
      {"model.hidden", "20,20"},
      {"model.embedding", "10"},
      {"model.centroid_size", "10"},
      {"model.sigma", "0.1"},

      {"train.learning_rate", "0.01"},
      {"train.momentum", "0.9"},
      {"train.weight_decay", "1e-4"},
      {"train.decay_head", "true"},
      {"train.lambda", "0"},
      {"train.penalty_mode", "two_sided"},
      {"train.penalty_target", "sum_kernels"},
      {"train.estimator", "exact"},
      {"train.hutchinson_shared_projection", "false"},
      {"train.gamma", "0.99"},
      {"train.batch_size", "64"},
      {"train.epochs", "30"},
      {"train.lr_schedule", ""},

      {"data.source", "moons"},
      {"data.points", "1000"},
      {"data.test_points", "1000"},
      {"data.noise", "0.1"},
      {"data.separation", "2"},
      {"data.spread", "1"},
      {"data.flip", "0"},
      {"data.train_images", ""},
      {"data.train_labels", ""},
      {"data.test_images", ""},
      {"data.test_labels", ""},
      {"data.classes", "10"},
      {"data.normalization", "none"},
      {"data.subsample", "0"},
      {"data.validation_fraction", "0"},

      {"eval.checkpoint", ""},
      {"eval.in_images", ""},
      {"eval.in_labels", ""},
      {"eval.ood_images", ""},
      {"eval.third_images", ""},
      {"eval.bins", "50"},
      {"eval.rejection_step", "0.005"},
      {"eval.grid_x", "-3,4"},
      {"eval.grid_y", "-3,3"},
      {"eval.grid_resolution", "100"},
      {"eval.sigma_grid", "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0"},
      {"eval.lambda_grid", "0,0.05,0.1,0.2,0.5,1"},
      {"eval.repeats", "1"},
      {"eval.lambda_mode", "in_distribution"},

      {"ensemble.members", "5"},
      {"ensemble.parallel", "false"},
  };
}

[[noreturn]] void Bad(const std::string& key, const std::string& value,
                      const std::string& why) {
  throw ConfigError(key + ": " + why + " (got '" + value + "')");
}

double ToDouble(const std::string& key, const std::string& value) {
  double out = 0.0;
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) Bad(key, value, "not a number");
  return out;
}

std::uint64_t ToUnsigned(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) {
    Bad(key, value, "not a nonnegative integer");
  }
  return out;
}

bool ToBool(const std::string& key, const std::string& value) {
  const std::string v = boost::algorithm::to_lower_copy(value);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  Bad(key, value, "not a boolean");
}

std::vector<std::string> ToList(const std::string& value) {
  std::vector<std::string> items;
  if (boost::algorithm::trim_copy(value).empty()) return items;
  boost::algorithm::split(items, value, boost::algorithm::is_any_of(","));
  for (std::string& item : items) boost::algorithm::trim(item);
  return items;
}

std::vector<double> ToDoubles(const std::string& key, const std::string& value) {
  std::vector<double> out;
  for (const std::string& item : ToList(value)) out.push_back(ToDouble(key, item));
  return out;
}

std::pair<double, double> ToRange(const std::string& key, const std::string& value) {
  const std::vector<double> v = ToDoubles(key, value);
  if (v.size() != 2 || !(v[0] < v[1])) Bad(key, value, "expected 'low,high' with low < high");
  return {v[0], v[1]};
}

// Wraps parser errors from the training module so they carry the key.
template <typename F>
auto Keyed(const std::string& key, const std::string& value, F&& parse) {
  try {
    return parse(value);
  } catch (const ConfigError& e) {
    Bad(key, value, e.what());
  }
}

void ApplyOverride(ConfigValues& values, const std::string& text) {
  const std::size_t eq = text.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + text + "' is not section.key=value");
  }
  const std::string key = boost::algorithm::trim_copy(text.substr(0, eq));
  const std::string value = boost::algorithm::trim_copy(text.substr(eq + 1));
  if (!values.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  values[key] = value;
}

ExperimentConfig Resolve(const ConfigValues& v) {
  ExperimentConfig c;
  const auto get = [&v](const char* key) -> const std::string& { return v.at(key); };
  const auto num = [&](const char* key) { return ToDouble(key, get(key)); };
  const auto count = [&](const char* key) {
    return static_cast<std::size_t>(ToUnsigned(key, get(key)));
  };
  const auto flag = [&](const char* key) { return ToBool(key, get(key)); };

  c.seed = ToUnsigned("run.seed", get("run.seed"));
  c.output = get("run.output");
  if (c.output.empty()) Bad("run.output", c.output, "must not be empty");

  c.model.kind = Keyed("model.kind", get("model.kind"), ParseModelKind);
  for (const std::string& item : ToList(get("model.hidden"))) {
    const std::size_t width = static_cast<std::size_t>(ToUnsigned("model.hidden", item));
    if (width == 0) Bad("model.hidden", get("model.hidden"), "layer widths must be >= 1");
    c.model.hidden.push_back(width);
  }
  c.model.embedding = count("model.embedding");
  c.model.centroid_size = count("model.centroid_size");
  c.model.sigma = num("model.sigma");
  if (c.model.embedding == 0) Bad("model.embedding", get("model.embedding"), "must be >= 1");
  if (c.model.centroid_size == 0) {
    Bad("model.centroid_size", get("model.centroid_size"), "must be >= 1");
  }
  if (!(c.model.sigma > 0.0)) Bad("model.sigma", get("model.sigma"), "must be > 0");

  TrainConfig& t = c.train;
  t.learning_rate = num("train.learning_rate");
  t.momentum = num("train.momentum");
  t.weight_decay = num("train.weight_decay");
  t.decay_head = flag("train.decay_head");
  t.lambda = num("train.lambda");
  t.penalty_mode = Keyed("train.penalty_mode", get("train.penalty_mode"), ParsePenaltyMode);
  t.penalty_target =
      Keyed("train.penalty_target", get("train.penalty_target"), ParsePenaltyTarget);
  t.estimator = Keyed("train.estimator", get("train.estimator"), ParsePenaltyEstimator);
  t.hutchinson_shared_projection = flag("train.hutchinson_shared_projection");
  t.gamma = num("train.gamma");
  t.batch_size = count("train.batch_size");
  t.epochs = count("train.epochs");
  t.lr_schedule = Keyed("train.lr_schedule", get("train.lr_schedule"),
                        [](const std::string& s) { return LrSchedule::Parse(s); });
  t.seed = c.seed;
  t.Validate();

  DataSection& d = c.data;
  const std::string& source = get("data.source");
  if (source == "moons") {
    d.source = DataSource::kMoons;
  } else if (source == "gaussians") {
    d.source = DataSource::kGaussians;
  } else if (source == "sign") {
    d.source = DataSource::kSign;
  } else if (source == "idx") {
    d.source = DataSource::kIdx;
  } else {
    Bad("data.source", source, "expected moons, gaussians, sign or idx");
  }
  d.points = count("data.points");
  d.test_points = count("data.test_points");
  d.noise = num("data.noise");
  d.separation = num("data.separation");
  d.spread = num("data.spread");
  d.flip = num("data.flip");
  d.train_images = get("data.train_images");
  d.train_labels = get("data.train_labels");
  d.test_images = get("data.test_images");
  d.test_labels = get("data.test_labels");
  d.classes = count("data.classes");
  const std::string& norm = get("data.normalization");
  if (norm == "none") {
    d.normalization.reset();
  } else if (norm == "per_channel") {
    d.normalization = NormalizationMode::kPerChannel;
  } else if (norm == "per_feature") {
    d.normalization = NormalizationMode::kPerFeature;
  } else {
    Bad("data.normalization", norm, "expected none, per_channel or per_feature");
  }
  d.subsample = count("data.subsample");
  d.validation_fraction = num("data.validation_fraction");
  if (d.source != DataSource::kIdx && d.points < 2) {
    Bad("data.points", get("data.points"), "must be >= 2");
  }
  if (!(d.noise >= 0.0)) Bad("data.noise", get("data.noise"), "must be >= 0");
  if (!(d.spread > 0.0)) Bad("data.spread", get("data.spread"), "must be > 0");
  if (!(d.flip >= 0.0 && d.flip < 0.5)) Bad("data.flip", get("data.flip"), "must lie in [0, 0.5)");
  if (d.source == DataSource::kIdx && d.train_images.empty()) {
    Bad("data.train_images", d.train_images, "required when data.source = idx");
  }
  if (d.source == DataSource::kIdx && d.train_labels.empty()) {
    Bad("data.train_labels", d.train_labels, "required when data.source = idx");
  }
  if (d.classes < 2) Bad("data.classes", get("data.classes"), "must be >= 2");
  if (!(d.validation_fraction >= 0.0 && d.validation_fraction < 1.0)) {
    Bad("data.validation_fraction", get("data.validation_fraction"), "must lie in [0, 1)");
  }

  EvalSection& e = c.eval;
  e.checkpoints = ToList(get("eval.checkpoint"));
  e.in_images = get("eval.in_images");
  e.in_labels = get("eval.in_labels");
  e.ood_images = get("eval.ood_images");
  e.third_images = get("eval.third_images");
  e.bins = count("eval.bins");
  if (e.bins == 0) Bad("eval.bins", get("eval.bins"), "must be >= 1");
  e.rejection_step = num("eval.rejection_step");
  if (!(e.rejection_step > 0.0 && e.rejection_step <= 1.0)) {
    Bad("eval.rejection_step", get("eval.rejection_step"), "must lie in (0, 1]");
  }
  e.grid_x = ToRange("eval.grid_x", get("eval.grid_x"));
  e.grid_y = ToRange("eval.grid_y", get("eval.grid_y"));
  e.grid_resolution = count("eval.grid_resolution");
  if (e.grid_resolution < 2) {
    Bad("eval.grid_resolution", get("eval.grid_resolution"), "must be >= 2");
  }
  e.sigma_grid = ToDoubles("eval.sigma_grid", get("eval.sigma_grid"));
  e.lambda_grid = ToDoubles("eval.lambda_grid", get("eval.lambda_grid"));
  e.repeats = count("eval.repeats");
  if (e.repeats == 0) Bad("eval.repeats", get("eval.repeats"), "must be >= 1");
  const std::string& mode = get("eval.lambda_mode");
  if (mode == "in_distribution") {
    e.lambda_mode = LambdaSelectionMode::kInDistribution;
  } else if (mode == "third_dataset") {
    e.lambda_mode = LambdaSelectionMode::kThirdDataset;
  } else {
    Bad("eval.lambda_mode", mode, "expected in_distribution or third_dataset");
  }

  c.ensemble.members = count("ensemble.members");
  if (c.ensemble.members == 0) Bad("ensemble.members", get("ensemble.members"), "must be >= 1");
  c.ensemble.parallel = flag("ensemble.parallel");

  std::ostringstream canonical;
  for (const auto& [key, value] : v) {
    // Where artifacts go is not part of the experiment.
    if (key != "run.output") canonical << key << " = " << value << "\n";
  }
  c.canonical = canonical.str();
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(Fnv1a(c.canonical)));
  c.digest = hex;
  return c;
}

}  // namespace

ModelKind ParseModelKind(std::string_view text) {
  if (text == "duq") return ModelKind::kDuq;
  if (text == "softmax") return ModelKind::kSoftmax;
  throw ConfigError("unknown model kind '" + std::string(text) + "'");
}

std::string_view ToString(ModelKind kind) {
  return kind == ModelKind::kDuq ? "duq" : "softmax";
}

std::vector<std::size_t> ExperimentConfig::ExtractorSizes(std::size_t input_dim) const {
  std::vector<std::size_t> sizes{input_dim};
  sizes.insert(sizes.end(), model.hidden.begin(), model.hidden.end());
  sizes.push_back(model.embedding);
  return sizes;
}

const ConfigValues& DefaultConfigValues() {
  static const ConfigValues defaults = MakeDefaults();
  return defaults;
}

ExperimentConfig ParseConfig(const std::string& text,
                             std::span<const std::string> overrides) {
  // The INI reader only knows ';' comments.
  std::istringstream lines(text);
  std::ostringstream cleaned;
  for (std::string line; std::getline(lines, line);) {
    const std::string trimmed = boost::algorithm::trim_left_copy(line);
    if (!trimmed.empty() && trimmed.front() == '#') continue;
    cleaned << line << "\n";
  }
  boost::property_tree::ptree tree;
  std::istringstream in(cleaned.str());
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }

  ConfigValues values = DefaultConfigValues();
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("key '" + section + "' must be inside a [section]");
    }
    for (const auto& [key, node] : body) {
      const std::string name = section + "." + key;
      if (!values.contains(name)) throw ConfigError("unknown config key '" + name + "'");
      values[name] = boost::algorithm::trim_copy(node.data());
    }
  }
  for (const std::string& o : overrides) ApplyOverride(values, o);
  return Resolve(values);
}

ExperimentConfig LoadConfig(const std::filesystem::path& path,
                            std::span<const std::string> overrides) {
  if (path.empty()) return ParseConfig("", overrides);
  std::ifstream file(path);
  if (!file) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream text;
  text << file.rdbuf();
  return ParseConfig(text.str(), overrides);
}

}  // namespace duq
