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

// Synthetic corpus: bump mixtures -> Savitzky-Golay smoothing -> boundary
// padding -> eigenbasis projection -> noisy forward data.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "abelnet/abel_core.hpp"
#include "abelnet/error.hpp"

namespace abelnet {

/// splitmix64 finalizer; derives independent sub-seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (1 + stream) + 0xbf58476d1ce4e5b9ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Least-squares polynomial weights for one evaluation offset inside a window.
inline Eigen::VectorXd savgol_weights(int window, int order, int eval_index) {
  const int half = window / 2;
  Eigen::MatrixXd A(window, order + 1);
  for (int r = 0; r < window; ++r) {
    const double t = static_cast<double>(r - half) / half;
    double pw = 1.0;
    for (int c = 0; c <= order; ++c, pw *= t) A(r, c) = pw;
  }
  const Eigen::MatrixXd pinv = A.colPivHouseholderQr().solve(Eigen::MatrixXd::Identity(window, window));
  Eigen::VectorXd e(order + 1);
  const double t = static_cast<double>(eval_index - half) / half;
  double pw = 1.0;
  for (int c = 0; c <= order; ++c, pw *= t) e(c) = pw;
  return pinv.transpose() * e;
}

inline Eigen::VectorXd savgol_smooth(const Eigen::VectorXd& v, int window = 21, int order = 5) {
  require(window >= 3 && window % 2 == 1, ErrorKind::InvalidArgument, "window must be odd and >= 3");
  require(order >= 0 && order < window, ErrorKind::InvalidArgument, "order must satisfy 0 <= order < window");
  const auto n = static_cast<int>(v.size());
  require(n >= window, ErrorKind::InvalidArgument, "signal shorter than the smoothing window");
  const int half = window / 2;
  Eigen::VectorXd out(n);
  const Eigen::VectorXd center = savgol_weights(window, order, half);
  for (int i = half; i < n - half; ++i) out(i) = center.dot(v.segment(i - half, window));
  // ends: evaluate the polynomial fitted on the first / last full window
  for (int i = 0; i < half; ++i) {
    out(i) = savgol_weights(window, order, i).dot(v.head(window));
    out(n - half + i) = savgol_weights(window, order, half + 1 + i).dot(v.tail(window));
  }
  return out;
}

struct BumpMixture {
  int components = 0;
  std::vector<double> centers, widths, heights;
};

/// Raw positive signal: 2 to 4 Gaussian bumps, max-normalized.
inline Eigen::VectorXd generate_raw(std::uint64_t seed, int N, BumpMixture* info = nullptr) {
  require(N >= 42, ErrorKind::InvalidArgument, "raw signals need N >= 42");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> count(2, 4);
  std::uniform_real_distribution<double> center(0.1, 0.9), width(0.02, 0.2), height(0.2, 1.0);
  const GridSpec grid = GridSpec::uniform(N);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(N);
  BumpMixture mix;
  mix.components = count(rng);
  for (int c = 0; c < mix.components; ++c) {
    const double ce = center(rng), w = width(rng), ht = height(rng);
    mix.centers.push_back(ce);
    mix.widths.push_back(w);
    mix.heights.push_back(ht);
    for (int i = 0; i < N; ++i) {
      const double z = (grid.nodes(i) - ce) / w;
      x(i) += ht * std::exp(-0.5 * z * z);
    }
  }
  x /= x.maxCoeff();
  if (info) *info = std::move(mix);
  return x;
}

/// Smoothing, boundary padding and projection. Both pads hang off the smoothed
/// value at their pad boundary: the first pad samples are cosine-blended toward
/// it, the last pad samples are replaced by a cosine ramp from it down to zero.
/// Replacing (rather than multiplying) the tail keeps a second pass nearly
/// invariant.
inline SpectralSignal regularize_signal(const Eigen::VectorXd& raw, const AbelSystem& sys) {
  const int N = sys.N();
  require(raw.size() == N, ErrorKind::DimensionMismatch, "raw signal must have N samples");
  Eigen::VectorXd s = savgol_smooth(raw, 21, 5);
  const int pad = std::max(1, N / 20);
  const double head = s(pad), tail = s(N - pad - 1);
  for (int i = 0; i < pad; ++i) {
    const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * i / pad));
    s(i) = w * head + (1.0 - w) * s(i);
    s(N - pad + i) = tail * 0.5 * (1.0 + std::cos(std::numbers::pi * (i + 1) / pad));
  }
  return to_eigen(ElementSignal(std::move(s)), sys);
}

struct SignalRecord {
  std::string kind;  // "train" or "val"
  int id = 0;
  SpectralSignal x_true;
  ElementSignal x_elt;  // to_elt(x_true)
  ElementSignal y_noisy;
  double delta = 0.0;
  std::string provenance;
  SpectralSignal b0;  // bias_from_data(y_noisy), cached
};

enum class DataSource { Synthetic, CsvIngest };

struct DatasetSpec {
  int n_train = 400;
  int n_val = 200;
  double noise_frac = 0.05;
  double a = 1.0;
  std::uint64_t seed = 1;
  DataSource source = DataSource::Synthetic;
  std::string ingest_path;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<SignalRecord> train, val;
  std::size_t size() const { return train.size() + val.size(); }
};

inline SignalRecord make_record(const Eigen::VectorXd& raw, const AbelSystem& sys, double noise_frac,
                                std::uint64_t noise_seed, std::string kind, int id, std::string provenance) {
  SignalRecord r;
  r.kind = std::move(kind);
  r.id = id;
  r.x_true = regularize_signal(raw, sys);
  r.x_elt = to_elt(r.x_true, sys);
  NoisyData nd = make_noisy_data(r.x_elt, sys, noise_frac, noise_seed);
  r.y_noisy = std::move(nd.y_noisy);
  r.delta = nd.delta;
  r.provenance = std::move(provenance);
  r.b0 = bias_from_data(r.y_noisy, sys);
  return r;
}

/// One raw signal per row, N comma-separated values; '#' starts a comment.
inline std::vector<Eigen::VectorXd> read_ingest_csv(const std::string& path, int N) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorKind::Io, "cannot open ingestion file '" + path + "'");
  std::vector<Eigen::VectorXd> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    Eigen::VectorXd v(N);
    std::stringstream ss(line);
    std::string cell;
    int k = 0;
    while (std::getline(ss, cell, ',')) {
      require(k < N, ErrorKind::Format, path + ":" + std::to_string(lineno) + ": more than N values");
      try {
        v(k++) = std::stod(cell);
      } catch (const std::exception&) {
        fail(ErrorKind::Format, path + ":" + std::to_string(lineno) + ": not a number '" + cell + "'");
      }
    }
    require(k == N, ErrorKind::Format, path + ":" + std::to_string(lineno) + ": expected N values");
    rows.push_back(std::move(v));
  }
  return rows;
}

inline Dataset make_dataset(const DatasetSpec& spec, const AbelSystem& sys) {
  require(spec.n_train >= 0 && spec.n_val >= 0, ErrorKind::InvalidArgument, "record counts must be >= 0");
  require(spec.noise_frac >= 0.0, ErrorKind::InvalidArgument, "noise fraction must be >= 0");
  require(spec.a == sys.a(), ErrorKind::InvalidArgument, "dataset order a differs from the operator");
  Dataset ds;
  ds.spec = spec;
  if (spec.source == DataSource::Synthetic) {
    for (int kind = 0; kind < 2; ++kind) {
      const int count = kind == 0 ? spec.n_train : spec.n_val;
      const std::string name = kind == 0 ? "train" : "val";
      auto& out = kind == 0 ? ds.train : ds.val;
      for (int i = 0; i < count; ++i) {
        const std::uint64_t sig_seed = mix_seed(spec.seed, 2 * kind, i);
        const std::uint64_t noise_seed = mix_seed(spec.seed, 2 * kind + 1, i);
        out.push_back(make_record(generate_raw(sig_seed, sys.N()), sys, spec.noise_frac, noise_seed, name,
                                  static_cast<int>(ds.size()),
                                  "synthetic:seed=" + std::to_string(spec.seed) + ":" + name + ":" +
                                      std::to_string(i)));
      }
    }
  } else {
    const auto rows = read_ingest_csv(spec.ingest_path, sys.N());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const bool is_train = static_cast<int>(i) < spec.n_train;
      const std::string name = is_train ? "train" : "val";
      (is_train ? ds.train : ds.val)
          .push_back(make_record(rows[i], sys, spec.noise_frac, mix_seed(spec.seed, 1, i), name,
                                 static_cast<int>(i), "csv:" + spec.ingest_path + ":row=" + std::to_string(i)));
    }
  }
  return ds;
}

/// Mean of |x_10| / |x_0| over records (eigen-coefficient decay statistic).
inline double coefficient_decay(const std::vector<SignalRecord>& recs, int k = 10) {
  double acc = 0.0;
  for (const auto& r : recs) acc += std::abs(r.x_true.coeffs(k)) / std::abs(r.x_true.coeffs(0));
  return recs.empty() ? 0.0 : acc / static_cast<double>(recs.size());
}

// ---------------------------------------------------------------------------
// CSV persistence (17 significant digits, exact round trip)

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_dataset_csv(const Dataset& ds, const AbelSystem& sys, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorKind::Io, "cannot open '" + path + "' for writing");
  const auto& s = ds.spec;
  os << "# abelnet-dataset version=1 N=" << sys.N() << " K=" << sys.K() << " a=" << format_double(sys.a())
     << " r=" << format_double(sys.r()) << " noise_frac=" << format_double(s.noise_frac) << " seed=" << s.seed
     << " source=" << (s.source == DataSource::Synthetic ? "synthetic" : "csv:" + s.ingest_path) << "\n";
  os << "record_id,kind";
  for (int i = 0; i < sys.N(); ++i) os << ",y_" << i;
  for (int k = 0; k < sys.K(); ++k) os << ",x_" << k;
  os << ",delta\n";
  auto emit = [&](const SignalRecord& r) {
    os << r.id << ',' << r.kind;
    for (int i = 0; i < sys.N(); ++i) os << ',' << format_double(r.y_noisy.coeffs(i));
    for (int k = 0; k < sys.K(); ++k) os << ',' << format_double(r.x_true.coeffs(k));
    os << ',' << format_double(r.delta) << '\n';
  };
  for (const auto& r : ds.train) emit(r);
  for (const auto& r : ds.val) emit(r);
  require(static_cast<bool>(os), ErrorKind::Io, "write failed for '" + path + "'");
}

inline Dataset read_dataset_csv(const std::string& path, const AbelSystem& sys) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::Io, "cannot open dataset '" + path + "'");
  Dataset ds;
  ds.spec.a = sys.a();
  std::string line;
  bool header_seen = false;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::stringstream ss(line.substr(1));
      std::string tok;
      while (ss >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "N") require(std::stoi(val) == sys.N(), ErrorKind::Config, "dataset N differs from the operator");
        if (key == "K") require(std::stoi(val) == sys.K(), ErrorKind::Config, "dataset K differs from the operator");
        if (key == "a")
          require(std::stod(val) == sys.a(), ErrorKind::Config, "dataset order a differs from the operator");
        if (key == "noise_frac") ds.spec.noise_frac = std::stod(val);
        if (key == "seed") ds.spec.seed = std::stoull(val);
      }
      continue;
    }
    if (!header_seen) {
      require(line.rfind("record_id,kind", 0) == 0, ErrorKind::Format, "dataset header missing in '" + path + "'");
      header_seen = true;
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const std::size_t expect = 2 + sys.N() + sys.K() + 1;
    require(cells.size() == expect, ErrorKind::Format,
            path + ":" + std::to_string(lineno) + ": expected " + std::to_string(expect) + " columns");
    SignalRecord r;
    try {
      r.id = std::stoi(cells[0]);
      r.kind = cells[1];
      require(r.kind == "train" || r.kind == "val", ErrorKind::Format, "record kind must be train or val");
      r.y_noisy.coeffs.resize(sys.N());
      r.x_true.coeffs.resize(sys.K());
      for (int i = 0; i < sys.N(); ++i) r.y_noisy.coeffs(i) = std::stod(cells[2 + i]);
      for (int k = 0; k < sys.K(); ++k) r.x_true.coeffs(k) = std::stod(cells[2 + sys.N() + k]);
      r.delta = std::stod(cells.back());
    } catch (const std::invalid_argument&) {
      fail(ErrorKind::Format, path + ":" + std::to_string(lineno) + ": malformed number");
    }
    r.x_elt = to_elt(r.x_true, sys);
    r.b0 = bias_from_data(r.y_noisy, sys);
    r.provenance = path + ":record=" + std::to_string(r.id);
    (r.kind == "train" ? ds.train : ds.val).push_back(std::move(r));
  }
  require(header_seen, ErrorKind::Format, "dataset header missing in '" + path + "'");
  ds.spec.n_train = static_cast<int>(ds.train.size());
  ds.spec.n_val = static_cast<int>(ds.val.size());
  return ds;
}

}  // namespace abelnet
