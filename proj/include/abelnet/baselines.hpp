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

// Reference inversions in the operator eigenbasis.

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "abelnet/abel_core.hpp"
#include "abelnet/datagen.hpp"
#include "abelnet/error.hpp"
#include "abelnet/trainer.hpp"
#include "abelnet/unrolled_net.hpp"

namespace abelnet {

enum class BaselineMethod { SpectralCutoff, Tikhonov };

inline const char* baseline_name(BaselineMethod m) {
  return m == BaselineMethod::SpectralCutoff ? "spectral-cutoff" : "tikhonov";
}

inline BaselineMethod parse_baseline(const std::string& s) {
  if (s == "spectral-cutoff") return BaselineMethod::SpectralCutoff;
  if (s == "tikhonov") return BaselineMethod::Tikhonov;
  fail(ErrorKind::InvalidArgument, "unknown baseline '" + s + "'");
}

struct BaselineConfig {
  BaselineMethod method = BaselineMethod::SpectralCutoff;
  int cutoff_index = 0;  // 0 selects by validation search
  double tau = 0.0;      // 0 selects by validation search
};

inline SpectralSignal spectral_cutoff_from_bias(const SpectralSignal& b0, int k_c, const AbelSystem& sys) {
  require(k_c >= 1 && k_c <= sys.K(), ErrorKind::InvalidArgument, "cutoff index must satisfy 1 <= k_c <= K");
  require(b0.size() == sys.K(), ErrorKind::DimensionMismatch, "b0 must have K coefficients");
  SpectralSignal x(Eigen::VectorXd::Zero(sys.K()));
  for (int k = 0; k < k_c; ++k) x.coeffs(k) = b0.coeffs(k) / sys.betaT()(k);
  return x;
}

inline SpectralSignal spectral_cutoff_inverse(const ElementSignal& y, int k_c, const AbelSystem& sys) {
  return spectral_cutoff_from_bias(bias_from_data(y, sys), k_c, sys);
}

inline SpectralSignal tikhonov_from_bias(const SpectralSignal& b0, double tau, const AbelSystem& sys) {
  require(tau > 0.0, ErrorKind::InvalidArgument, "Tikhonov weight must be > 0");
  require(b0.size() == sys.K(), ErrorKind::DimensionMismatch, "b0 must have K coefficients");
  return SpectralSignal((b0.coeffs.array() / (sys.betaT().array() + tau * sys.betaD().array())).matrix());
}

inline SpectralSignal tikhonov_inverse(const ElementSignal& y, double tau, const AbelSystem& sys) {
  return tikhonov_from_bias(bias_from_data(y, sys), tau, sys);
}

template <class Solve>
double mean_baseline_error(const std::vector<SignalRecord>& recs, Solve&& solve) {
  require(!recs.empty(), ErrorKind::InvalidArgument, "baseline evaluation needs records");
  double acc = 0.0;
  for (const auto& r : recs) acc += relative_error(solve(r.b0).coeffs, r.x_true.coeffs);
  return acc / static_cast<double>(recs.size());
}

/// Cutoff index with the smallest mean error on the given records.
inline int select_cutoff(const std::vector<SignalRecord>& recs, const AbelSystem& sys) {
  int best_k = 1;
  double best = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= sys.K(); ++k) {
    const double e = mean_baseline_error(recs, [&](const SpectralSignal& b) { return spectral_cutoff_from_bias(b, k, sys); });
    if (e < best) {
      best = e;
      best_k = k;
    }
  }
  return best_k;
}

/// Tikhonov weight from a log grid 1e-10 .. 1e0 (10 points per decade).
inline double select_tau(const std::vector<SignalRecord>& recs, const AbelSystem& sys) {
  double best_tau = 1.0, best = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 100; ++k) {
    const double tau = std::pow(10.0, -10.0 + 0.1 * k);
    const double e = mean_baseline_error(recs, [&](const SpectralSignal& b) { return tikhonov_from_bias(b, tau, sys); });
    if (e < best) {
      best = e;
      best_tau = tau;
    }
  }
  return best_tau;
}

struct BaselineResult {
  BaselineMethod method;
  double parameter = 0.0;  // k_c or tau actually used
  double error = 0.0;
};

/// Runs one baseline; unset parameters are tuned on `tune`, the error is measured on `eval`.
inline BaselineResult run_baseline(const BaselineConfig& bc, const std::vector<SignalRecord>& tune,
                                   const std::vector<SignalRecord>& eval, const AbelSystem& sys) {
  BaselineResult r{bc.method};
  if (bc.method == BaselineMethod::SpectralCutoff) {
    const int k = bc.cutoff_index > 0 ? bc.cutoff_index : select_cutoff(tune, sys);
    r.parameter = k;
    r.error = mean_baseline_error(eval, [&](const SpectralSignal& b) { return spectral_cutoff_from_bias(b, k, sys); });
  } else {
    const double tau = bc.tau > 0.0 ? bc.tau : select_tau(tune, sys);
    r.parameter = tau;
    r.error = mean_baseline_error(eval, [&](const SpectralSignal& b) { return tikhonov_from_bias(b, tau, sys); });
  }
  return r;
}

// ---------------------------------------------------------------------------
// comparison grid

struct CompareCell {
  double a = 1.0;
  double delta = 0.05;
  std::string method;
  double error = 0.0;
  double parameter = std::numeric_limits<double>::quiet_NaN();
};

/// Builds (operator, dataset) for a grid cell.
using CellDataFn = std::function<std::pair<const AbelSystem*, const Dataset*>(double a, double delta)>;
/// Returns the trained network for a cell, or nothing.
using CellNetworkFn = std::function<std::optional<Checkpoint>(double a, double delta)>;

inline const std::vector<double>& compare_deltas() {
  static const std::vector<double> d{0.1, 0.05, 0.01};
  return d;
}
inline const std::vector<double>& compare_orders() {
  static const std::vector<double> a{1.0, 0.5};
  return a;
}

/// Table over delta x a x methods. The network row needs a checkpoint for every
/// cell; tuning of baseline parameters uses the validation records.
inline std::vector<CompareCell> compare(const std::vector<BaselineMethod>& methods, bool include_network,
                                        const CellDataFn& data, const CellNetworkFn& network) {
  std::vector<CompareCell> out;
  for (double a : compare_orders()) {
    for (double delta : compare_deltas()) {
      const auto [sys, ds] = data(a, delta);
      require(sys && ds && !ds->val.empty(), ErrorKind::InvalidArgument, "comparison cell has no validation data");
      if (include_network) {
        const auto ck = network(a, delta);
        require(ck.has_value(), ErrorKind::Config,
                "missing checkpoint for a=" + format_double(a) + " delta=" + format_double(delta));
        check_compatible(*ck, *sys);
        out.push_back({a, delta, "network", evaluate(ck->params, ds->val, ck->config, *sys)});
      }
      for (BaselineMethod m : methods) {
        const BaselineResult r = run_baseline({m, 0, 0.0}, ds->val, ds->val, *sys);
        out.push_back({a, delta, baseline_name(m), r.error, r.parameter});
      }
    }
  }
  return out;
}

/// Rows: method x a, columns: delta.
inline void write_compare_csv(const std::vector<CompareCell>& cells, const std::string& path) {
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorKind::Io, "cannot open '" + path + "' for writing");
  std::vector<std::pair<std::string, double>> rows;
  std::map<std::pair<std::string, double>, std::map<double, double>> table;
  for (const auto& c : cells) {
    const auto key = std::make_pair(c.method, c.a);
    if (!table.count(key)) rows.push_back(key);
    table[key][c.delta] = c.error;
  }
  auto label = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return std::string(buf);
  };
  os << "method,a";
  for (double d : compare_deltas()) os << ",delta=" << label(d);
  os << '\n';
  for (const auto& key : rows) {
    os << key.first << ',' << label(key.second);
    for (double d : compare_deltas()) {
      const auto& row = table[key];
      const auto it = row.find(d);
      os << ',' << (it == row.end() ? std::string("") : format_double(it->second));
    }
    os << '\n';
  }
  require(static_cast<bool>(os), ErrorKind::Io, "write failed for '" + path + "'");
}

}  // namespace abelnet
