// ksd/harness.hpp

// Copyright 2026  The ksd authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef KSD_HARNESS_HPP_
#define KSD_HARNESS_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ksd/data.hpp"
#include "ksd/errors.hpp"
#include "ksd/network.hpp"
#include "ksd/optimizers.hpp"

// Experiment runner: a line-oriented config format, optimizer dispatch
// with validation-based early stopping, and the convergence-curve CSV.

namespace ksd {

/// One CSV row.  `valid_err_pct` is the held-out classification error in
/// percent; NaN for non-classification tasks or when no validation split
/// exists.
struct ConvergenceRecord {
  int iteration = 0;
  double seconds = 0.0;
  double train_obj = 0.0;
  double valid_obj = 0.0;
  double valid_err_pct = 0.0;
};

using ConvergenceTable = std::vector<ConvergenceRecord>;

/// Fully parsed experiment description.  Defaults here are the documented
/// config-file defaults.
struct ExperimentConfig {
  std::string dataset;  // "mnist" or "curves"
  std::string images_path;
  std::string labels_path;
  int curves_samples = 0;
  int curves_resolution = 28;
  bool binarize_inputs = false;
  int train_samples = 0;  // 0 keeps every sample
  double valid_fraction = 0.1;

  std::vector<int> layer_dims;  // parsed from the model string
  LossKind loss = LossKind::squared_error;
  std::vector<Nonlinearity> nonlinearities;  // empty: derived from the loss

  std::string optimizer;  // "ksd", "hf", "sgd", or "lbfgs"
  CurvatureKind curvature = CurvatureKind::gauss_newton;
  int k = 20;
  int bfgs_iters = 30;
  double eps_floor = 1e-4;
  double l2 = 0.0;
  int max_iters = 100;
  std::uint64_t seed = 0;
  int patience = 10;

  SubsetPlan::AMode a_mode = SubsetPlan::AMode::full;
  double a_fraction = 1.0;
  double b_fraction = 0.05;
  double c_fraction = 0.05;
  bool disjoint_bc = true;

  double learning_rate = 0.1;
  int minibatch_size = 10;
  int window = 10;
  double initial_lambda = 1.0;
  int max_cg_iters = 250;
  double cg_tol = 1e-4;

  std::string csv_path;
};

/// Stops a run once the validation objective has gone `patience`
/// consecutive observations without a strict improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {
    if (patience < 1) throw InvalidInput("EarlyStopper: patience must be >= 1");
  }

  /// Returns true while the run should continue.
  bool observe(double valid_obj) {
    if (valid_obj < best_) {
      best_ = valid_obj;
      streak_ = 0;
      return true;
    }
    ++streak_;
    return streak_ < patience_;
  }

  double best() const { return best_; }

 private:
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int streak_ = 0;
};

namespace detail {

inline std::string trim(const std::string &s) {
  const auto from = s.find_first_not_of(" \t\r");
  if (from == std::string::npos) return "";
  const auto to = s.find_last_not_of(" \t\r");
  return s.substr(from, to - from + 1);
}

inline ConfigError config_error(int line, const std::string &message) {
  return ConfigError("line " + std::to_string(line) + ": " + message);
}

inline int parse_int(const std::string &value, int line, const std::string &key) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception &) {
    throw config_error(line, "integer expected for '" + key + "'");
  }
}

inline double parse_double(const std::string &value, int line,
                           const std::string &key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception &) {
    throw config_error(line, "number expected for '" + key + "'");
  }
}

inline bool parse_bool(const std::string &value, int line,
                       const std::string &key) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw config_error(line, "boolean expected for '" + key + "'");
}

inline std::vector<int> parse_model_string(const std::string &value, int line) {
  std::vector<int> dims;
  std::stringstream stream(value);
  std::string part;
  while (std::getline(stream, part, '-')) {
    part = trim(part);
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos)
      throw config_error(line, "unparsable model string '" + value + "'");
    dims.push_back(parse_int(part, line, "model"));
    if (dims.back() < 1)
      throw config_error(line, "model layer sizes must be positive");
  }
  if (dims.size() < 2)
    throw config_error(line, "model needs at least input and output dims");
  return dims;
}

}  // namespace detail

/// Parses a `key = value` config file.  `#` starts a comment; keys may
/// appear once; unknown keys and malformed values are rejected with their
/// line number.
inline ExperimentConfig parse_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);

  ExperimentConfig config;
  std::map<std::string, int> seen;  // key -> first line
  bool have_model = false, have_loss = false;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw = raw.substr(0, hash);
    raw = detail::trim(raw);
    if (raw.empty()) continue;
    const auto eq = raw.find('=');
    if (eq == std::string::npos)
      throw detail::config_error(line, "expected 'key = value'");
    const std::string key = detail::trim(raw.substr(0, eq));
    const std::string value = detail::trim(raw.substr(eq + 1));
    if (key.empty()) throw detail::config_error(line, "empty key");
    if (value.empty())
      throw detail::config_error(line, "empty value for '" + key + "'");
    const auto prior = seen.find(key);
    if (prior != seen.end())
      throw detail::config_error(
          line, "duplicate key '" + key + "' (first on line " +
                    std::to_string(prior->second) + ")");
    seen[key] = line;

    if (key == "dataset") {
      if (value != "mnist" && value != "curves")
        throw detail::config_error(line, "unknown dataset '" + value + "'");
      config.dataset = value;
    } else if (key == "images_path") {
      config.images_path = value;
    } else if (key == "labels_path") {
      config.labels_path = value;
    } else if (key == "curves_samples") {
      config.curves_samples = detail::parse_int(value, line, key);
    } else if (key == "curves_resolution") {
      config.curves_resolution = detail::parse_int(value, line, key);
    } else if (key == "binarize") {
      config.binarize_inputs = detail::parse_bool(value, line, key);
    } else if (key == "train_samples") {
      config.train_samples = detail::parse_int(value, line, key);
    } else if (key == "valid_fraction") {
      config.valid_fraction = detail::parse_double(value, line, key);
    } else if (key == "model") {
      config.layer_dims = detail::parse_model_string(value, line);
      have_model = true;
    } else if (key == "loss") {
      if (value == "squared_error")
        config.loss = LossKind::squared_error;
      else if (value == "softmax_cross_entropy")
        config.loss = LossKind::softmax_cross_entropy;
      else
        throw detail::config_error(line, "unknown loss '" + value + "'");
      have_loss = true;
    } else if (key == "nonlinearities") {
      config.nonlinearities.clear();
      std::stringstream stream(value);
      std::string part;
      while (std::getline(stream, part, ',')) {
        part = detail::trim(part);
        if (part == "logistic")
          config.nonlinearities.push_back(Nonlinearity::logistic);
        else if (part == "linear")
          config.nonlinearities.push_back(Nonlinearity::linear);
        else
          throw detail::config_error(line, "unknown nonlinearity '" + part + "'");
      }
    } else if (key == "optimizer") {
      if (value != "ksd" && value != "hf" && value != "sgd" && value != "lbfgs")
        throw detail::config_error(line, "unknown optimizer '" + value + "'");
      config.optimizer = value;
    } else if (key == "curvature") {
      if (value == "gauss_newton")
        config.curvature = CurvatureKind::gauss_newton;
      else if (value == "hessian")
        config.curvature = CurvatureKind::hessian;
      else
        throw detail::config_error(line, "unknown curvature '" + value + "'");
    } else if (key == "k") {
      config.k = detail::parse_int(value, line, key);
    } else if (key == "bfgs_iters") {
      config.bfgs_iters = detail::parse_int(value, line, key);
    } else if (key == "eps_floor") {
      config.eps_floor = detail::parse_double(value, line, key);
    } else if (key == "l2") {
      config.l2 = detail::parse_double(value, line, key);
    } else if (key == "max_iters") {
      config.max_iters = detail::parse_int(value, line, key);
    } else if (key == "seed") {
      long long v = 0;
      try {
        std::size_t pos = 0;
        v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
      } catch (const std::exception &) {
        throw detail::config_error(line, "integer expected for 'seed'");
      }
      if (v < 0) throw detail::config_error(line, "seed must be non-negative");
      config.seed = static_cast<std::uint64_t>(v);
    } else if (key == "patience") {
      config.patience = detail::parse_int(value, line, key);
    } else if (key == "a_mode") {
      if (value == "full")
        config.a_mode = SubsetPlan::AMode::full;
      else if (value == "fraction")
        config.a_mode = SubsetPlan::AMode::fraction;
      else
        throw detail::config_error(line, "a_mode must be full or fraction");
    } else if (key == "a_fraction") {
      config.a_fraction = detail::parse_double(value, line, key);
    } else if (key == "b_fraction") {
      config.b_fraction = detail::parse_double(value, line, key);
    } else if (key == "c_fraction") {
      config.c_fraction = detail::parse_double(value, line, key);
    } else if (key == "disjoint_bc") {
      config.disjoint_bc = detail::parse_bool(value, line, key);
    } else if (key == "learning_rate") {
      config.learning_rate = detail::parse_double(value, line, key);
    } else if (key == "minibatch_size") {
      config.minibatch_size = detail::parse_int(value, line, key);
    } else if (key == "window") {
      config.window = detail::parse_int(value, line, key);
    } else if (key == "initial_lambda") {
      config.initial_lambda = detail::parse_double(value, line, key);
    } else if (key == "max_cg_iters") {
      config.max_cg_iters = detail::parse_int(value, line, key);
    } else if (key == "cg_tol") {
      config.cg_tol = detail::parse_double(value, line, key);
    } else if (key == "csv_path") {
      config.csv_path = value;
    } else {
      throw detail::config_error(line, "unknown key '" + key + "'");
    }
  }

  std::vector<std::string> missing;
  if (config.dataset.empty()) missing.push_back("dataset");
  if (!have_model) missing.push_back("model");
  if (!have_loss) missing.push_back("loss");
  if (config.optimizer.empty()) missing.push_back("optimizer");
  if (!missing.empty()) {
    std::string what = "missing required key(s):";
    for (const auto &key : missing) what += " " + key;
    throw ConfigError(what);
  }
  if (config.dataset == "mnist" &&
      (config.images_path.empty() || config.labels_path.empty()))
    throw ConfigError("dataset mnist needs images_path and labels_path");
  if (config.dataset == "curves" && config.images_path.empty() &&
      config.curves_samples < 1)
    throw ConfigError("dataset curves needs curves_samples or images_path");
  if (!config.images_path.empty() && config.labels_path.empty())
    throw ConfigError("images_path needs a matching labels_path");
  if (!config.nonlinearities.empty() &&
      config.nonlinearities.size() != config.layer_dims.size() - 1)
    throw ConfigError("nonlinearities must list one entry per layer");
  return config;
}

/// The network described by the config: hidden layers logistic, final
/// layer linear for classification and logistic for reconstruction,
/// unless overridden explicitly.
inline NetworkSpec network_spec(const ExperimentConfig &config) {
  NetworkSpec spec;
  spec.layer_dims = config.layer_dims;
  spec.loss_kind = config.loss;
  if (!config.nonlinearities.empty()) {
    spec.nonlinearities = config.nonlinearities;
  } else {
    spec.nonlinearities.assign(config.layer_dims.size() - 1,
                               Nonlinearity::logistic);
    if (config.loss == LossKind::softmax_cross_entropy)
      spec.nonlinearities.back() = Nonlinearity::linear;
  }
  spec.validate();
  return spec;
}

/// Writes the convergence table: header plus one row per record, 9
/// significant digits.
inline void write_csv(const ConvergenceTable &records, const std::string &path) {
  std::ofstream out(path);
  if (!out) throw FormatError("write_csv: cannot open " + path);
  out << "iter,seconds,train_obj,valid_obj,valid_err_pct\n";
  char buffer[160];
  for (const auto &rec : records) {
    std::snprintf(buffer, sizeof buffer, "%d,%.9g,%.9g,%.9g,%.9g\n",
                  rec.iteration, rec.seconds, rec.train_obj, rec.valid_obj,
                  rec.valid_err_pct);
    out << buffer;
  }
  if (!out) throw FormatError("write_csv: write failed for " + path);
}

/// Generates the curves dataset and stores it as an IDX pair in
/// `out_dir`; returns the image-file path.
inline std::string write_curves_idx(const std::string &out_dir, int samples,
                                    int resolution, std::uint64_t seed) {
  const Dataset data = generate_curves(samples, resolution, seed);
  std::filesystem::create_directories(out_dir);
  const std::string images = out_dir + "/curves_images.idx";
  const std::string labels = out_dir + "/curves_labels.idx";
  write_idx(data, images, labels, resolution, resolution);
  return images;
}

struct Summary {
  double best_valid_obj = std::numeric_limits<double>::quiet_NaN();
  double best_valid_err_pct = std::numeric_limits<double>::quiet_NaN();
  double final_train_obj = std::numeric_limits<double>::quiet_NaN();
  double total_seconds = 0.0;
  int iterations = 0;
  bool stopped_early = false;
};

struct ExperimentResult {
  Eigen::VectorXd theta_final;
  Eigen::VectorXd theta_best;  // parameters at the best validation record
  ConvergenceTable records;
  Summary summary;
};

namespace detail {

/// Held-out classification error in percent; NaN when labels are absent.
inline double classification_error_pct(const NetworkSpec &spec,
                                       const Eigen::VectorXd &theta,
                                       const Batch &batch) {
  if (batch.labels.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  const Activations acts = forward(spec, theta, batch.inputs);
  int wrong = 0;
  for (int i = 0; i < batch.size(); ++i) {
    int arg = 0;
    acts.output().row(i).maxCoeff(&arg);
    if (arg != batch.labels[i]) ++wrong;
  }
  return 100.0 * wrong / batch.size();
}

}  // namespace detail

/// Loads (or synthesizes) the dataset named by the config, applies
/// binarization and the training-sample cap, and attaches reconstruction
/// targets for squared-error tasks.
inline Dataset load_experiment_data(const ExperimentConfig &config) {
  Dataset data;
  if (config.dataset == "curves" && config.images_path.empty()) {
    data = generate_curves(config.curves_samples, config.curves_resolution,
                           config.seed);
  } else {
    data = load_idx(config.images_path, config.labels_path);
  }
  if (config.binarize_inputs) data = binarize(data);
  if (config.train_samples > 0 && config.train_samples < data.num_samples()) {
    data.inputs = data.inputs.topRows(config.train_samples).eval();
    if (data.targets.size() > 0)
      data.targets = data.targets.topRows(config.train_samples).eval();
    if (data.has_labels())
      data.labels = data.labels.head(config.train_samples).eval();
  }
  if (config.loss == LossKind::squared_error) {
    data.targets = data.inputs;
    data.labels.resize(0);
  } else if (!data.has_labels()) {
    throw ConfigError("classification task needs a labeled dataset");
  }
  return data;
}

/// Runs one experiment end to end: dataset assembly, a validation split
/// carved off the tail of the training set, optimizer dispatch with
/// early stopping, and CSV output when a path is configured.
inline ExperimentResult run_experiment(const ExperimentConfig &config) {
  if (config.max_iters < 1) throw ConfigError("max_iters must be positive");
  if (config.valid_fraction < 0.0 || config.valid_fraction >= 1.0)
    throw ConfigError("valid_fraction must lie in [0, 1)");
  const NetworkSpec spec = network_spec(config);
  Dataset all = load_experiment_data(config);
  if (all.input_dim() != spec.input_dim())
    throw ConfigError("model input dim does not match the dataset");
  const int total = all.num_samples();
  const int n_valid =
      std::min(total - 1, static_cast<int>(config.valid_fraction * total));

  Dataset train = all;
  train.tag = SplitTag::train;
  Batch valid_batch;
  if (n_valid > 0) {
    const int n_train = total - n_valid;
    train.inputs = all.inputs.topRows(n_train).eval();
    if (all.targets.size() > 0)
      train.targets = all.targets.topRows(n_train).eval();
    if (all.has_labels()) train.labels = all.labels.head(n_train).eval();
    valid_batch.inputs = all.inputs.bottomRows(n_valid);
    if (all.targets.size() > 0)
      valid_batch.targets = all.targets.bottomRows(n_valid);
    if (all.has_labels()) valid_batch.labels = all.labels.tail(n_valid);
  }

  SubsetPlan plan;
  plan.a_mode = config.a_mode;
  plan.a_fraction = config.a_fraction;
  plan.b_fraction = config.b_fraction;
  plan.c_fraction = config.c_fraction;
  plan.disjoint_bc = config.disjoint_bc;
  plan.seed = config.seed;

  ExperimentResult result;
  EarlyStopper stopper(config.patience);
  const bool has_valid = valid_batch.inputs.rows() > 0;
  const Monitor monitor = [&](const IterationRecord &rec,
                              const Eigen::VectorXd &theta) {
    ConvergenceRecord row;
    row.iteration = rec.iteration;
    row.seconds = rec.seconds;
    row.train_obj = rec.train_obj;
    row.valid_obj = std::numeric_limits<double>::quiet_NaN();
    row.valid_err_pct = std::numeric_limits<double>::quiet_NaN();
    bool keep_going = true;
    if (has_valid) {
      row.valid_obj = objective(spec, theta, valid_batch, config.l2);
      row.valid_err_pct =
          detail::classification_error_pct(spec, theta, valid_batch);
      const double before = stopper.best();
      keep_going = stopper.observe(row.valid_obj);
      if (row.valid_obj < before) {
        result.theta_best = theta;
        result.summary.best_valid_obj = row.valid_obj;
        result.summary.best_valid_err_pct = row.valid_err_pct;
      }
    }
    result.records.push_back(row);
    if (!keep_going) result.summary.stopped_early = true;
    return keep_going;
  };

  if (config.optimizer == "ksd") {
    KsdConfig opt;
    opt.k = config.k;
    opt.bfgs_iters = config.bfgs_iters;
    opt.eps_floor = config.eps_floor;
    opt.l2_coeff = config.l2;
    opt.max_outer_iters = config.max_iters;
    opt.seed = config.seed;
    opt.curvature = config.curvature;
    result.theta_final = ksd_run(spec, train, opt, plan, monitor).theta;
  } else if (config.optimizer == "hf") {
    HfConfig opt;
    opt.initial_lambda = config.initial_lambda;
    opt.max_cg_iters = config.max_cg_iters;
    opt.cg_tol = config.cg_tol;
    opt.l2_coeff = config.l2;
    opt.eps_floor = config.eps_floor;
    opt.curvature = config.curvature;
    opt.max_outer_iters = config.max_iters;
    opt.seed = config.seed;
    result.theta_final = hf_run(spec, train, opt, plan, monitor).theta;
  } else if (config.optimizer == "sgd") {
    const double eta = config.learning_rate;
    result.theta_final =
        sgd_run(spec, train, [eta](int) { return eta; }, config.minibatch_size,
                config.max_iters, config.l2, config.seed, monitor)
            .theta;
  } else if (config.optimizer == "lbfgs") {
    result.theta_final = lbfgs_run(spec, train, config.window, config.max_iters,
                                   config.l2, config.seed, monitor)
                             .theta;
  } else {
    throw ConfigError("unknown optimizer '" + config.optimizer + "'");
  }

  if (result.theta_best.size() == 0) result.theta_best = result.theta_final;
  if (!result.records.empty()) {
    result.summary.final_train_obj = result.records.back().train_obj;
    result.summary.total_seconds = result.records.back().seconds;
    result.summary.iterations = result.records.back().iteration + 1;
  }
  if (!config.csv_path.empty()) write_csv(result.records, config.csv_path);
  return result;
}

}  // namespace ksd

#endif  // KSD_HARNESS_HPP_
