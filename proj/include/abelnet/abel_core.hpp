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

// Discretized Abel operator, its spectral basis and the basis changes
// between finite-element nodal values and eigen coefficients.
//
// Conventions: R^N carries the h-weighted product <x,y>_h = h * x^T y, so the
// adjoint of T_elt is its plain transpose and the eigen coefficients of a
// nodal vector x are h * V^T x.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include "abelnet/error.hpp"

namespace abelnet {

struct GridSpec {
  int N = 0;
  double h = 0.0;
  Eigen::VectorXd nodes;

  static GridSpec uniform(int N) {
    require(N >= 2, ErrorKind::InvalidArgument, "grid needs N >= 2");
    GridSpec g;
    g.N = N;
    g.h = 1.0 / static_cast<double>(N - 1);
    g.nodes.resize(N);
    for (int i = 0; i < N; ++i) g.nodes(i) = static_cast<double>(i) * g.h;
    g.nodes(N - 1) = 1.0;
    return g;
  }
};

enum class Basis { FiniteElement, Eigen };

/// Coefficient vector whose basis is part of its type.
template <Basis B>
struct Signal {
  static constexpr Basis basis = B;
  Eigen::VectorXd coeffs;

  Signal() = default;
  explicit Signal(Eigen::VectorXd c) : coeffs(std::move(c)) {}
  Eigen::Index size() const { return coeffs.size(); }
};

using ElementSignal = Signal<Basis::FiniteElement>;
using SpectralSignal = Signal<Basis::Eigen>;

enum class EigenSource { Analytic, Numeric };

inline const char* eigen_source_name(EigenSource s) {
  return s == EigenSource::Analytic ? "analytic" : "numeric";
}

inline EigenSource parse_eigen_source(const std::string& s) {
  if (s == "analytic") return EigenSource::Analytic;
  if (s == "numeric") return EigenSource::Numeric;
  fail(ErrorKind::InvalidArgument, "unknown eigenvalue source '" + s + "'");
}

/// T_elt: product trapezoid rule for (1/Gamma(a)) int_0^t (t-s)^(a-1) x(s) ds.
inline Eigen::MatrixXd build_telt(double a, const GridSpec& grid) {
  require(a > 0.0 && std::isfinite(a), ErrorKind::InvalidArgument, "operator order a must be > 0");
  require(grid.N >= 2, ErrorKind::InvalidArgument, "grid needs N >= 2");
  const int N = grid.N;
  const double c = std::pow(grid.h, a) / (2.0 * a * std::tgamma(a));
  // entries depend only on i - j, tabulate once
  Eigen::VectorXd pw(N + 1);
  for (int d = 0; d <= N; ++d) pw(d) = std::pow(static_cast<double>(d), a);
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(N, N);
  for (int i = 1; i < N; ++i) {
    T(i, 0) = c * (pw(i) - pw(i - 1));
    for (int j = 1; j < i; ++j) T(i, j) = c * (pw(i - j + 1) - pw(i - j - 1));
    T(i, i) = c;
  }
  return T;
}

inline double analytic_beta_t(double a, int k) {
  const double s = 2.0 / (std::numbers::pi * (2.0 * k + 1.0));
  return std::pow(s * s, a);
}

struct SpectralBasis {
  Eigen::MatrixXd V;  // N x K, h-orthonormal columns
  Eigen::VectorXd betaT_numeric;
  Eigen::VectorXd betaT_analytic;
  Eigen::VectorXd betaD;  // analytic, betaT_analytic^(-r/a)
};

inline SpectralBasis build_basis(double a, double r, const GridSpec& grid, int K,
                                 const Eigen::MatrixXd& T) {
  require(K >= 1 && K <= grid.N, ErrorKind::InvalidArgument, "basis size K must satisfy 1 <= K <= N");
  require(r >= 0.0, ErrorKind::InvalidArgument, "regularizer order r must be >= 0");
  require(T.rows() == grid.N && T.cols() == grid.N, ErrorKind::DimensionMismatch,
          "operator size does not match grid");
  const Eigen::MatrixXd G = T.transpose() * T;  // h-adjoint of T is T^T
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
  require(es.info() == Eigen::Success, ErrorKind::Numerical, "eigendecomposition failed");

  const int N = grid.N;
  SpectralBasis out;
  out.V.resize(N, K);
  out.betaT_numeric.resize(K);
  out.betaT_analytic.resize(K);
  out.betaD.resize(K);
  const double scale = 1.0 / std::sqrt(grid.h);
  for (int k = 0; k < K; ++k) {
    const int src = N - 1 - k;  // ascending order from the solver
    const double ev = es.eigenvalues()(src);
    require(ev > 0.0, ErrorKind::Numerical,
            "non-positive eigenvalue among the retained modes: discretization too coarse");
    Eigen::VectorXd col = es.eigenvectors().col(src) * scale;
    if (col(0) < 0.0 || (col(0) == 0.0 && col.sum() < 0.0)) col = -col;
    out.V.col(k) = col;
    out.betaT_numeric(k) = ev;
    out.betaT_analytic(k) = analytic_beta_t(a, k);
    out.betaD(k) = std::pow(out.betaT_analytic(k), -r / a);
  }
  return out;
}

/// Immutable discretized operator plus spectral data.
class AbelSystem {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  AbelSystem() = default;

  static AbelSystem build(double a, double r, int N, int K,
                          EigenSource source = EigenSource::Analytic) {
    AbelSystem s;
    s.a_ = a;
    s.r_ = r;
    s.grid_ = GridSpec::uniform(N);
    s.T_ = build_telt(a, s.grid_);
    SpectralBasis b = build_basis(a, r, s.grid_, K, s.T_);
    s.V_ = std::move(b.V);
    s.betaT_numeric_ = std::move(b.betaT_numeric);
    s.betaT_analytic_ = std::move(b.betaT_analytic);
    s.set_source(source);
    return s;
  }

  double a() const { return a_; }
  double r() const { return r_; }
  int N() const { return grid_.N; }
  int K() const { return static_cast<int>(V_.cols()); }
  double h() const { return grid_.h; }
  const GridSpec& grid() const { return grid_; }
  const Eigen::MatrixXd& T() const { return T_; }
  const Eigen::MatrixXd& V() const { return V_; }
  EigenSource source() const { return source_; }
  const Eigen::VectorXd& betaT_numeric() const { return betaT_numeric_; }
  const Eigen::VectorXd& betaT_analytic() const { return betaT_analytic_; }
  /// Eigenvalues of T*T and D*D used by the network and certificates.
  const Eigen::VectorXd& betaT() const { return betaT_; }
  const Eigen::VectorXd& betaD() const { return betaD_; }

  /// Identifies the construction parameters; stored in checkpoints.
  std::uint64_t hash() const {
    std::uint64_t hsh = 1469598103934665603ull;
    auto mix = [&hsh](const void* p, std::size_t n) {
      const auto* c = static_cast<const unsigned char*>(p);
      for (std::size_t i = 0; i < n; ++i) {
        hsh ^= c[i];
        hsh *= 1099511628211ull;
      }
    };
    const std::int64_t n = N(), k = K(), src = static_cast<std::int64_t>(source_);
    mix(&a_, sizeof a_);
    mix(&r_, sizeof r_);
    mix(&n, sizeof n);
    mix(&k, sizeof k);
    mix(&src, sizeof src);
    return hsh;
  }

  void set_source(EigenSource s) {
    source_ = s;
    betaT_ = (s == EigenSource::Analytic) ? betaT_analytic_ : betaT_numeric_;
    betaD_.resize(betaT_.size());
    for (Eigen::Index k = 0; k < betaT_.size(); ++k) betaD_(k) = std::pow(betaT_(k), -r_ / a_);
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    require(static_cast<bool>(os), ErrorKind::Io, "cannot open '" + path + "' for writing");
    os.write("ABELSYS\0", 8);
    put<std::uint32_t>(os, kFormatVersion);
    put<double>(os, a_);
    put<double>(os, r_);
    put<std::int64_t>(os, N());
    put<std::int64_t>(os, K());
    put<std::int32_t>(os, static_cast<std::int32_t>(source_));
    put_vec(os, betaT_numeric_);
    put_vec(os, betaT_analytic_);
    put_vec(os, betaT_);
    put_vec(os, betaD_);
    for (int i = 0; i < N(); ++i)
      for (int k = 0; k < K(); ++k) put<double>(os, V_(i, k));  // row-major
    require(static_cast<bool>(os), ErrorKind::Io, "write failed for '" + path + "'");
  }

  static AbelSystem load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(static_cast<bool>(is), ErrorKind::Io, "cannot open '" + path + "'");
    char magic[8];
    is.read(magic, 8);
    require(is && std::memcmp(magic, "ABELSYS\0", 8) == 0, ErrorKind::Format,
            "'" + path + "' is not an operator file");
    const auto version = get<std::uint32_t>(is);
    require(version == kFormatVersion, ErrorKind::Format,
            "unsupported operator file version " + std::to_string(version));
    AbelSystem s;
    s.a_ = get<double>(is);
    s.r_ = get<double>(is);
    const auto N = get<std::int64_t>(is);
    const auto K = get<std::int64_t>(is);
    const auto src = get<std::int32_t>(is);
    require(N >= 2 && K >= 1 && K <= N && (src == 0 || src == 1), ErrorKind::Format,
            "corrupt operator file header");
    s.source_ = static_cast<EigenSource>(src);
    s.betaT_numeric_ = get_vec(is, K);
    s.betaT_analytic_ = get_vec(is, K);
    s.betaT_ = get_vec(is, K);
    s.betaD_ = get_vec(is, K);
    s.V_.resize(N, K);
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index k = 0; k < K; ++k) s.V_(i, k) = get<double>(is);
    require(static_cast<bool>(is), ErrorKind::Format, "truncated operator file '" + path + "'");
    s.grid_ = GridSpec::uniform(static_cast<int>(N));
    s.T_ = build_telt(s.a_, s.grid_);
    return s;
  }

 private:
  template <class V>
  static void put(std::ostream& os, V v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  template <class V>
  static V get(std::istream& is) {
    V v{};
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    require(static_cast<bool>(is), ErrorKind::Format, "truncated operator file");
    return v;
  }
  static void put_vec(std::ostream& os, const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) put<double>(os, v(i));
  }
  static Eigen::VectorXd get_vec(std::istream& is, Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = get<double>(is);
    return v;
  }

  double a_ = 1.0;
  double r_ = 1.0;
  GridSpec grid_;
  Eigen::MatrixXd T_;
  Eigen::MatrixXd V_;
  Eigen::VectorXd betaT_numeric_, betaT_analytic_, betaT_, betaD_;
  EigenSource source_ = EigenSource::Analytic;
};

inline double h_dot(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double h) {
  return h * x.dot(y);
}

inline double h_norm(const Eigen::VectorXd& x, double h) { return std::sqrt(h * x.squaredNorm()); }

inline SpectralSignal to_eigen(const ElementSignal& s, const AbelSystem& sys) {
  require(s.size() == sys.N(), ErrorKind::DimensionMismatch, "to_eigen: expected a nodal vector of length N");
  return SpectralSignal(sys.h() * (sys.V().transpose() * s.coeffs));
}

inline ElementSignal to_elt(const SpectralSignal& s, const AbelSystem& sys) {
  require(s.size() == sys.K(), ErrorKind::DimensionMismatch, "to_elt: expected K eigen coefficients");
  return ElementSignal(sys.V() * s.coeffs);
}

/// Applies T_elt to nodal values.
inline ElementSignal apply_operator(const ElementSignal& x, const AbelSystem& sys) {
  require(x.size() == sys.N(), ErrorKind::DimensionMismatch, "operator input must have length N");
  return ElementSignal(sys.T().triangularView<Eigen::Lower>() * x.coeffs);
}

/// Adjoint of T_elt for the h-weighted product.
inline ElementSignal apply_adjoint(const ElementSignal& y, const AbelSystem& sys) {
  require(y.size() == sys.N(), ErrorKind::DimensionMismatch, "adjoint input must have length N");
  return ElementSignal(sys.T().transpose().triangularView<Eigen::Upper>() * y.coeffs);
}

struct NoisyData {
  ElementSignal y_clean;
  ElementSignal y_noisy;
  double delta = 0.0;  // realized ||y_noisy - y_clean||_h
};

/// Forward data with white noise rescaled to an exact relative level.
inline NoisyData make_noisy_data(const ElementSignal& x, const AbelSystem& sys, double noise_frac,
                                 std::uint64_t seed) {
  require(noise_frac >= 0.0 && std::isfinite(noise_frac), ErrorKind::InvalidArgument,
          "noise fraction must be >= 0");
  NoisyData out;
  out.y_clean = apply_operator(x, sys);
  out.y_noisy = out.y_clean;
  if (noise_frac == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(sys.N());
  for (int i = 0; i < sys.N(); ++i) v(i) = normal(rng);
  const double target = noise_frac * h_norm(out.y_clean.coeffs, sys.h());
  const double vn = h_norm(v, sys.h());
  if (target == 0.0 || vn == 0.0) return out;
  v *= target / vn;
  out.y_noisy.coeffs = out.y_clean.coeffs + v;
  out.delta = h_norm(out.y_noisy.coeffs - out.y_clean.coeffs, sys.h());
  return out;
}

/// b0 = P T* y in eigen coefficients.
inline SpectralSignal bias_from_data(const ElementSignal& y, const AbelSystem& sys) {
  return to_eigen(apply_adjoint(y, sys), sys);
}

}  // namespace abelnet
