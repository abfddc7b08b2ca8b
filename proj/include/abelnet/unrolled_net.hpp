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

// Unrolled forward-backward network. Layer n maps
//
//   p     = (1 - lambda_n (betaT + tau_n betaD)) x_{n-1} + lambda_n eta_{n-1..1} b0
//   x_n   = P prox_{lambda_n mu_n g}(V p)
//
// in eigen coordinates, with lambda, tau, mu obtained from raw parameters
// through softplus.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "abelnet/abel_core.hpp"
#include "abelnet/barrier_prox.hpp"
#include "abelnet/error.hpp"

namespace abelnet {

enum class ConstraintKind { Box, Slab, None };

/// Serializable description of a constraint; materialized against a grid.
struct ConstraintSpec {
  ConstraintKind kind = ConstraintKind::Box;
  double x_min = 0.0;
  double x_max = 1.0;
  int moment_order = 1;

  Constraint materialize(const GridSpec& grid) const {
    switch (kind) {
      case ConstraintKind::Box: return BoxConstraint{x_min, x_max};
      case ConstraintKind::Slab: return SlabConstraint::moment(moment_order, grid);
      case ConstraintKind::None: break;
    }
    return NoBarrier{};
  }
};

inline const char* constraint_kind_name(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::Box: return "box";
    case ConstraintKind::Slab: return "slab";
    case ConstraintKind::None: return "none";
  }
  return "none";
}

inline ConstraintKind parse_constraint_kind(const std::string& s) {
  if (s == "box") return ConstraintKind::Box;
  if (s == "slab") return ConstraintKind::Slab;
  if (s == "none") return ConstraintKind::None;
  fail(ErrorKind::InvalidArgument, "unknown constraint '" + s + "'");
}

/// Initial iterate: x0 = 0 or x0 = b0.
enum class InitialIterate { Zero, Data };

struct NetConfig {
  int m = 10;
  double a = 1.0;
  double r = 1.0;
  double q = 2.0;
  int f_max = 25;
  ConstraintSpec constraint;
  Eigen::VectorXd eta;  // empty means all ones
  double softplus_beta = 1.0;
  InitialIterate x0 = InitialIterate::Data;

  double eta_at(int n) const { return eta.size() == 0 ? 1.0 : eta(n - 1); }  // 1-based

  void validate(int K) const {
    require(m >= 1, ErrorKind::InvalidArgument, "layer count m must be >= 1");
    require(a > 0.0 && r > 0.0 && q > 0.0, ErrorKind::InvalidArgument, "orders a, r, q must be > 0");
    require(f_max >= 1 && f_max < K, ErrorKind::InvalidArgument, "f_max must satisfy 1 <= f_max < K");
    require(softplus_beta > 0.0, ErrorKind::InvalidArgument, "softplus beta must be > 0");
    require(eta.size() == 0 || eta.size() == m, ErrorKind::InvalidArgument, "eta needs m entries");
    for (Eigen::Index i = 0; i < eta.size(); ++i)
      require(eta(i) > 0.0, ErrorKind::InvalidArgument, "leakage factors must be > 0");
    if (constraint.kind == ConstraintKind::Box)
      require(constraint.x_min < constraint.x_max, ErrorKind::InvalidArgument, "box needs x_min < x_max");
    if (constraint.kind == ConstraintKind::Slab)
      require(constraint.moment_order >= 1, ErrorKind::InvalidArgument, "moment order must be >= 1");
  }
};

struct NetParams {
  Eigen::VectorXd c, d, e;

  static NetParams constant(int m, double c0, double d0, double e0) {
    return {Eigen::VectorXd::Constant(m, c0), Eigen::VectorXd::Constant(m, d0), Eigen::VectorXd::Constant(m, e0)};
  }
  int layers() const { return static_cast<int>(c.size()); }
  bool finite() const { return c.allFinite() && d.allFinite() && e.allFinite(); }
};

/// (1/beta) ln(1 + exp(beta x)), overflow safe.
inline double softplus(double x, double beta = 1.0) {
  const double z = beta * x;
  if (z > 0.0) return x + std::log1p(std::exp(-z)) / beta;
  return std::log1p(std::exp(z)) / beta;
}

/// d softplus / dx = logistic(beta x).
inline double softplus_grad(double x, double beta = 1.0) {
  const double z = beta * x;
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double ez = std::exp(z);
  return ez / (1.0 + ez);
}

inline double softplus_inverse(double y, double beta = 1.0) {
  require(y > 0.0, ErrorKind::InvalidArgument, "softplus inverse needs y > 0");
  const double z = beta * y;
  if (z > 30.0) return y + std::log(-std::expm1(-z)) / beta;
  return std::log(std::expm1(z)) / beta;
}

inline double step_size(double c_n, const NetConfig& cfg) { return softplus(c_n, cfg.softplus_beta); }
inline double barrier_param(double e_n, const NetConfig& cfg) { return softplus(e_n, cfg.softplus_beta); }

/// Data-driven factor (||hi|| / ||lo||_q)^{2(a+r)/(a+q)} of the regularization weight.
inline double noise_ratio(const SpectralSignal& b0, const NetConfig& cfg, const AbelSystem& sys) {
  const int K = sys.K();
  require(b0.size() == K, ErrorKind::DimensionMismatch, "b0 must have K eigen coefficients");
  require(cfg.f_max >= 1 && cfg.f_max < K, ErrorKind::InvalidArgument, "f_max must satisfy 1 <= f_max < K");
  double lo2 = 0.0, hi2 = 0.0;
  for (int k = 0; k < cfg.f_max; ++k)
    lo2 += std::pow(sys.betaD()(k), cfg.q / (2.0 * cfg.r)) * b0.coeffs(k) * b0.coeffs(k);
  for (int k = cfg.f_max; k < K; ++k) hi2 += b0.coeffs(k) * b0.coeffs(k);
  require(lo2 > 0.0, ErrorKind::Numerical, "degenerate data for noise estimation");
  return std::pow(std::sqrt(hi2 / lo2), 2.0 * (cfg.a + cfg.r) / (cfg.a + cfg.q));
}

inline double reg_param(double d_n, const SpectralSignal& b0, const NetConfig& cfg, const AbelSystem& sys) {
  return softplus(d_n, cfg.softplus_beta) * noise_ratio(b0, cfg, sys);
}

struct LayerRecord {
  Eigen::VectorXd x_in;   // eigen
  Eigen::VectorXd pre;    // eigen pre-activation
  Eigen::VectorXd x_out;  // eigen
  double lambda = 0, tau = 0, mu = 0, gamma = 0, eta_prod = 1;
  ProxJacobian jac;
};

struct LayerTrace {
  Eigen::VectorXd x0;
  Eigen::VectorXd b0;
  double ratio = 0.0;  // noise_ratio used for every tau_n
  std::vector<LayerRecord> layers;
};

struct ForwardResult {
  SpectralSignal x;
  LayerTrace trace;
};

/// One layer; returns x_n and fills rec.
inline SpectralSignal forward_layer(const SpectralSignal& x_prev, const SpectralSignal& b0, double lambda,
                                    double tau, double mu, double eta_prod, const AbelSystem& sys,
                                    const Constraint& C, LayerRecord* rec = nullptr) {
  require(x_prev.size() == sys.K() && b0.size() == sys.K(), ErrorKind::DimensionMismatch,
          "layer inputs must have K eigen coefficients");
  require(lambda > 0.0 && tau >= 0.0 && mu > 0.0 && eta_prod > 0.0, ErrorKind::InvalidArgument,
          "layer parameters must be positive");
  const Eigen::ArrayXd s = sys.betaT().array() + tau * sys.betaD().array();
  Eigen::VectorXd p = ((1.0 - lambda * s) * x_prev.coeffs.array()).matrix() + (lambda * eta_prod) * b0.coeffs;
  const double gamma = lambda * mu;
  SpectralSignal out;
  if (std::holds_alternative<NoBarrier>(C)) {
    out.coeffs = p;
    if (rec) rec->jac = prox_jacobian_at(Eigen::VectorXd(), gamma, C);
  } else {
    const Eigen::VectorXd v = sys.V() * p;
    const Eigen::VectorXd xe = prox(v, gamma, C);
    out.coeffs = sys.h() * (sys.V().transpose() * xe);
    if (rec) rec->jac = prox_jacobian_at(xe, gamma, C);
  }
  if (rec) {
    rec->x_in = x_prev.coeffs;
    rec->pre = std::move(p);
    rec->x_out = out.coeffs;
    rec->lambda = lambda;
    rec->tau = tau;
    rec->mu = mu;
    rec->gamma = gamma;
    rec->eta_prod = eta_prod;
  }
  return out;
}

/// Full pass. When tau_ratio is given, tau_n = softplus(d_n) * tau_ratio for
/// every input (frozen regularization); otherwise the ratio comes from b0.
inline ForwardResult forward(const SpectralSignal& x0, const SpectralSignal& b0, const NetParams& params,
                             const NetConfig& cfg, const AbelSystem& sys, const Constraint& C,
                             std::optional<double> tau_ratio = std::nullopt) {
  const int m = cfg.m;
  require(params.layers() == m && params.d.size() == m && params.e.size() == m, ErrorKind::DimensionMismatch,
          "parameter vectors must have m entries");
  ForwardResult res;
  res.trace.x0 = x0.coeffs;
  res.trace.b0 = b0.coeffs;
  res.trace.ratio = tau_ratio ? *tau_ratio : noise_ratio(b0, cfg, sys);
  res.trace.layers.resize(m);
  SpectralSignal x = x0;
  double eta_prod = 1.0;
  for (int n = 1; n <= m; ++n) {
    const double lambda = step_size(params.c(n - 1), cfg);
    const double tau = softplus(params.d(n - 1), cfg.softplus_beta) * res.trace.ratio;
    const double mu = barrier_param(params.e(n - 1), cfg);
    x = forward_layer(x, b0, lambda, tau, mu, eta_prod, sys, C, &res.trace.layers[n - 1]);
    eta_prod *= cfg.eta_at(n);
  }
  res.x = std::move(x);
  return res;
}

inline SpectralSignal initial_iterate(const SpectralSignal& b0, const NetConfig& cfg) {
  if (cfg.x0 == InitialIterate::Data) return b0;
  return SpectralSignal(Eigen::VectorXd::Zero(b0.size()));
}

/// 1/2 ||T x - y||_h^2 + tau/2 sum_k betaD_k x_k^2, x in eigen coordinates.
inline double objective(const SpectralSignal& x, const ElementSignal& y, double tau, const AbelSystem& sys) {
  require(x.size() == sys.K() && y.size() == sys.N(), ErrorKind::DimensionMismatch, "objective size mismatch");
  const Eigen::VectorXd r = apply_operator(to_elt(x, sys), sys).coeffs - y.coeffs;
  return 0.5 * sys.h() * r.squaredNorm() + 0.5 * tau * (sys.betaD().array() * x.coeffs.array().square()).sum();
}

// ---------------------------------------------------------------------------
// checkpoint

struct SystemRef {
  double a = 1.0, r = 1.0;
  int N = 0, K = 0;
  EigenSource source = EigenSource::Analytic;
  std::uint64_t hash = 0;

  static SystemRef of(const AbelSystem& s) { return {s.a(), s.r(), s.N(), s.K(), s.source(), s.hash()}; }
};

struct Checkpoint {
  static constexpr int kFormatVersion = 1;
  SystemRef system;
  NetConfig config;
  NetParams params;
  double tau_reference_ratio = 1.0;  // representative noise_ratio for certification
};

namespace detail {

inline nlohmann::ordered_json vec_to_json(const Eigen::VectorXd& v) {
  auto arr = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline Eigen::VectorXd vec_from_json(const nlohmann::ordered_json& j) {
  require(j.is_array(), ErrorKind::Format, "expected a numeric array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace detail

inline std::string checkpoint_to_string(const Checkpoint& ck) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["format"] = "abelnet-checkpoint";
  j["version"] = Checkpoint::kFormatVersion;
  j["system"] = {{"a", ck.system.a},
                 {"r", ck.system.r},
                 {"N", ck.system.N},
                 {"K", ck.system.K},
                 {"eigen_source", eigen_source_name(ck.system.source)},
                 {"hash", detail::hex64(ck.system.hash)}};
  const auto& c = ck.config;
  j["config"] = {{"m", c.m},
                 {"a", c.a},
                 {"r", c.r},
                 {"q", c.q},
                 {"f_max", c.f_max},
                 {"constraint", constraint_kind_name(c.constraint.kind)},
                 {"x_min", c.constraint.x_min},
                 {"x_max", c.constraint.x_max},
                 {"moment_order", c.constraint.moment_order},
                 {"eta", detail::vec_to_json(c.eta.size() ? c.eta : Eigen::VectorXd::Ones(c.m))},
                 {"softplus_beta", c.softplus_beta},
                 {"x0", c.x0 == InitialIterate::Data ? "data" : "zero"}};
  j["tau_reference_ratio"] = ck.tau_reference_ratio;
  j["params"] = {{"c", detail::vec_to_json(ck.params.c)},
                 {"d", detail::vec_to_json(ck.params.d)},
                 {"e", detail::vec_to_json(ck.params.e)}};
  return j.dump(2) + "\n";
}

inline Checkpoint checkpoint_from_string(const std::string& text) {
  using nlohmann::ordered_json;
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& ex) {
    fail(ErrorKind::Format, std::string("checkpoint is not valid JSON: ") + ex.what());
  }
  try {
    require(j.at("format") == "abelnet-checkpoint", ErrorKind::Format, "not a checkpoint file");
    require(j.at("version").get<int>() == Checkpoint::kFormatVersion, ErrorKind::Format,
            "unsupported checkpoint version");
    Checkpoint ck;
    const auto& s = j.at("system");
    ck.system.a = s.at("a").get<double>();
    ck.system.r = s.at("r").get<double>();
    ck.system.N = s.at("N").get<int>();
    ck.system.K = s.at("K").get<int>();
    ck.system.source = parse_eigen_source(s.at("eigen_source").get<std::string>());
    ck.system.hash = std::stoull(s.at("hash").get<std::string>(), nullptr, 16);
    const auto& c = j.at("config");
    ck.config.m = c.at("m").get<int>();
    ck.config.a = c.at("a").get<double>();
    ck.config.r = c.at("r").get<double>();
    ck.config.q = c.at("q").get<double>();
    ck.config.f_max = c.at("f_max").get<int>();
    ck.config.constraint.kind = parse_constraint_kind(c.at("constraint").get<std::string>());
    ck.config.constraint.x_min = c.at("x_min").get<double>();
    ck.config.constraint.x_max = c.at("x_max").get<double>();
    ck.config.constraint.moment_order = c.at("moment_order").get<int>();
    ck.config.eta = detail::vec_from_json(c.at("eta"));
    ck.config.softplus_beta = c.at("softplus_beta").get<double>();
    const auto x0 = c.at("x0").get<std::string>();
    require(x0 == "data" || x0 == "zero", ErrorKind::Format, "x0 must be 'data' or 'zero'");
    ck.config.x0 = x0 == "data" ? InitialIterate::Data : InitialIterate::Zero;
    ck.tau_reference_ratio = j.at("tau_reference_ratio").get<double>();
    const auto& p = j.at("params");
    ck.params.c = detail::vec_from_json(p.at("c"));
    ck.params.d = detail::vec_from_json(p.at("d"));
    ck.params.e = detail::vec_from_json(p.at("e"));
    ck.config.validate(ck.system.K);
    require(ck.params.c.size() == ck.config.m && ck.params.d.size() == ck.config.m &&
                ck.params.e.size() == ck.config.m,
            ErrorKind::Format, "checkpoint parameter vectors must have m entries");
    return ck;
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorKind::Format, std::string("malformed checkpoint: ") + ex.what());
  }
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorKind::Io, "cannot open '" + path + "' for writing");
  os << checkpoint_to_string(ck);
  require(static_cast<bool>(os), ErrorKind::Io, "write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::Io, "cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return checkpoint_from_string(ss.str());
}

/// Confirms that a checkpoint was produced for this operator.
inline void check_compatible(const Checkpoint& ck, const AbelSystem& sys) {
  require(ck.system.hash == sys.hash() && ck.system.N == sys.N() && ck.system.K == sys.K(),
          ErrorKind::Config, "checkpoint was trained for a different operator (a, r, N, K or eigen source)");
}

}  // namespace abelnet
