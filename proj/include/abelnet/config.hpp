/*
 * Copyright 2026 The abelnet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Flat key = value run configuration. Every key has a default; files and
// command-line overrides may only set known keys.

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "abelnet/baselines.hpp"
#include "abelnet/datagen.hpp"
#include "abelnet/error.hpp"
#include "abelnet/trainer.hpp"
#include "abelnet/unrolled_net.hpp"

namespace abelnet {

struct ConfigKey {
  const char* name;
  const char* default_value;
  const char* help;
};

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      // operator
      {"N", "2000", "number of grid nodes"},
      {"K", "50", "retained eigenmodes"},
      {"a", "1", "Abel operator order"},
      {"r", "1", "regularizer derivative order"},
      {"eigen_source", "analytic", "eigenvalues used by network and certificates: analytic | numeric"},
      {"system_path", "", "optional operator cache file (read if present, written otherwise)"},
      // network
      {"m", "10", "layer count"},
      {"q", "2", "a-priori smoothness order"},
      {"f_max", "0", "noise-estimation cutoff index (0 = K/2)"},
      {"constraint", "box", "box | slab"},
      {"x_min", "0", "box lower bound"},
      {"x_max", "1", "box upper bound"},
      {"moment_order", "1", "slab moment order j"},
      {"eta", "", "comma-separated leakage factors (empty = all ones)"},
      {"softplus_beta", "1", "softplus sharpness"},
      {"x0", "data", "initial iterate: data (x0 = b0) | zero"},
      // training
      {"epochs", "30", "training epochs"},
      {"learning_rate", "0.001", "Adam learning rate"},
      {"batch_size", "1", "samples per Adam step"},
      {"seed", "1", "master seed"},
      {"init", "calibrated", "parameter initialization: calibrated | fixed"},
      {"init_mu", "0.0001", "initial barrier weight for the calibrated initialization"},
      {"adam_beta1", "0.9", "Adam first-moment decay"},
      {"adam_beta2", "0.999", "Adam second-moment decay"},
      {"adam_eps", "1e-08", "Adam epsilon"},
      // data
      {"n_train", "400", "training records"},
      {"n_val", "200", "validation records"},
      {"noise_frac", "0.05", "relative noise level delta"},
      {"source", "synthetic", "synthetic | csv"},
      {"ingest_path", "", "raw-signal CSV for source = csv"},
      // baselines
      {"baseline", "spectral-cutoff", "spectral-cutoff | tikhonov"},
      {"cutoff_index", "0", "spectral cutoff k_c (0 = validation search)"},
      {"tikhonov_tau", "0", "Tikhonov weight (0 = validation search)"},
      {"compare_methods", "spectral-cutoff,tikhonov", "baselines in the comparison table"},
      {"compare_network", "true", "include the network row in the comparison table"},
      {"compare_checkpoint_dir", "", "directory with checkpoint_a<a>_delta<delta>.json files"},
      {"compare_train", "false", "train missing comparison checkpoints"},
      // paths and outputs
      {"dataset_path", "dataset.csv", "dataset CSV"},
      {"checkpoint_path", "checkpoint.json", "network checkpoint"},
      {"report_dir", "reports", "directory for metrics, certificates, tables and config echoes"},
      {"signal_path", "", "input for invert: dataset CSV (with record_index) or one row of N values"},
      {"record_index", "-1", "record id used by invert / certify (-1 = none)"},
      {"output_path", "", "explicit output file (command specific)"},
      {"alpha_points", "64", "points of the alpha grid on [1/2, 1]"},
  };
  return keys;
}

class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_keys()) values_[k.name] = k.default_value;
  }

  static bool known(const std::string& key) {
    const auto& ks = config_keys();
    return std::any_of(ks.begin(), ks.end(), [&](const ConfigKey& k) { return key == k.name; });
  }

  void set(const std::string& key, const std::string& value) {
    require(known(key), ErrorKind::Config, "unknown configuration key '" + key + "'");
    values_[key] = value;
  }

  const std::string& get(const std::string& key) const {
    const auto it = values_.find(key);
    require(it != values_.end(), ErrorKind::Config, "unknown configuration key '" + key + "'");
    return it->second;
  }

  double num(const std::string& key) const {
    const std::string& v = get(key);
    try {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      require(pos == v.size(), ErrorKind::Config, "");
      return d;
    } catch (...) {
      fail(ErrorKind::Config, "key '" + key + "' expects a number, got '" + v + "'");
    }
  }

  long long integer(const std::string& key) const {
    const std::string& v = get(key);
    try {
      std::size_t pos = 0;
      const long long d = std::stoll(v, &pos);
      require(pos == v.size(), ErrorKind::Config, "");
      return d;
    } catch (...) {
      fail(ErrorKind::Config, "key '" + key + "' expects an integer, got '" + v + "'");
    }
  }

  bool flag(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(ErrorKind::Config, "key '" + key + "' expects true or false, got '" + v + "'");
  }

  /// Reads `key = value` lines; '#' starts a comment.
  void load_file(const std::string& path) {
    std::ifstream is(path);
    require(static_cast<bool>(is), ErrorKind::Io, "cannot open config '" + path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string t = trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      require(eq != std::string::npos, ErrorKind::Config,
              path + ":" + std::to_string(lineno) + ": expected 'key = value'");
      const std::string key = trim(t.substr(0, eq));
      require(known(key), ErrorKind::Config, path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
      values_[key] = trim(t.substr(eq + 1));
    }
  }

  std::string to_string() const {
    std::ostringstream os;
    for (const auto& k : config_keys()) os << k.name << " = " << values_.at(k.name) << "\n";
    return os.str();
  }

  void save(const std::string& path) const {
    std::ofstream os(path);
    require(static_cast<bool>(os), ErrorKind::Io, "cannot open '" + path + "' for writing");
    os << "# resolved configuration\n" << to_string();
  }

  // typed views ------------------------------------------------------------

  int N() const { return static_cast<int>(integer("N")); }
  int K() const { return static_cast<int>(integer("K")); }
  EigenSource eigen_source() const { return parse_eigen_source(get("eigen_source")); }

  NetConfig net_config() const {
    NetConfig c;
    c.m = static_cast<int>(integer("m"));
    c.a = num("a");
    c.r = num("r");
    c.q = num("q");
    const int f = static_cast<int>(integer("f_max"));
    c.f_max = f > 0 ? f : K() / 2;
    const std::string ck = get("constraint");
    require(ck == "box" || ck == "slab", ErrorKind::Config, "constraint must be box or slab");
    c.constraint.kind = parse_constraint_kind(ck);
    c.constraint.x_min = num("x_min");
    c.constraint.x_max = num("x_max");
    c.constraint.moment_order = static_cast<int>(integer("moment_order"));
    const auto eta = split_numbers(get("eta"));
    if (!eta.empty()) {
      c.eta.resize(static_cast<Eigen::Index>(eta.size()));
      for (std::size_t i = 0; i < eta.size(); ++i) c.eta(static_cast<Eigen::Index>(i)) = eta[i];
    }
    c.softplus_beta = num("softplus_beta");
    const std::string x0 = get("x0");
    require(x0 == "data" || x0 == "zero", ErrorKind::Config, "x0 must be data or zero");
    c.x0 = x0 == "data" ? InitialIterate::Data : InitialIterate::Zero;
    c.validate(K());
    return c;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.epochs = static_cast<int>(integer("epochs"));
    t.learning_rate = num("learning_rate");
    t.batch_size = static_cast<int>(integer("batch_size"));
    t.seed = static_cast<std::uint64_t>(integer("seed"));
    const std::string init = get("init");
    require(init == "calibrated" || init == "fixed", ErrorKind::Config, "init must be calibrated or fixed");
    t.init.scheme = init == "calibrated" ? InitScheme::Calibrated : InitScheme::Fixed;
    t.init.mu0 = num("init_mu");
    t.adam.beta1 = num("adam_beta1");
    t.adam.beta2 = num("adam_beta2");
    t.adam.eps = num("adam_eps");
    require(t.epochs >= 0 && t.learning_rate > 0 && t.batch_size >= 1 && t.init.mu0 > 0, ErrorKind::Config,
            "training settings out of range");
    return t;
  }

  DatasetSpec dataset_spec() const {
    DatasetSpec d;
    d.n_train = static_cast<int>(integer("n_train"));
    d.n_val = static_cast<int>(integer("n_val"));
    d.noise_frac = num("noise_frac");
    d.a = num("a");
    d.seed = static_cast<std::uint64_t>(integer("seed"));
    const std::string s = get("source");
    require(s == "synthetic" || s == "csv", ErrorKind::Config, "source must be synthetic or csv");
    d.source = s == "synthetic" ? DataSource::Synthetic : DataSource::CsvIngest;
    d.ingest_path = get("ingest_path");
    require(d.n_train >= 0 && d.n_val >= 0 && d.noise_frac >= 0, ErrorKind::Config, "dataset settings out of range");
    return d;
  }

  BaselineConfig baseline_config() const {
    BaselineConfig b;
    b.method = parse_baseline(get("baseline"));
    b.cutoff_index = static_cast<int>(integer("cutoff_index"));
    b.tau = num("tikhonov_tau");
    return b;
  }

  std::vector<BaselineMethod> compare_methods() const {
    std::vector<BaselineMethod> out;
    std::stringstream ss(get("compare_methods"));
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!trim(tok).empty()) out.push_back(parse_baseline(trim(tok)));
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  }

  static std::vector<double> split_numbers(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok = trim(tok);
      if (tok.empty()) continue;
      try {
        out.push_back(std::stod(tok));
      } catch (...) {
        fail(ErrorKind::Config, "not a number in list: '" + tok + "'");
      }
    }
    return out;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace abelnet
