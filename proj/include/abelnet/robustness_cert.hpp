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

// Closed-form robustness certificate for the unrolled network.
//
// All layers are diagonal in the eigenbasis, so each quantity is a sup over
// the retained eigenindex p of an explicit scalar expression in
//
//   beta_p^(n)       = 1 - lambda_n (betaT_p + tau_n betaD_p)
//   beta_{i,n,p}     = prod_{j=i..n} beta_p^(j)
//   btilde_{i,n,p}   = sum_{j=i..n} lambda_j eta_{i,j-1} prod_{k=j+1..n} beta_p^(k)
//   eta_{i,n}        = prod_{j=i..n} eta_j        (empty product = 1)
//
// Index conventions are 1-based for layers (i, n) and 0-based for p.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "abelnet/abel_core.hpp"
#include "abelnet/error.hpp"
#include "abelnet/unrolled_net.hpp"

namespace abelnet {

struct LayerSpectra {
  Eigen::VectorXd lambda, tau, eta;  // m entries
  Eigen::VectorXd betaT, betaD;      // K entries

  int m() const { return static_cast<int>(lambda.size()); }
  int K() const { return static_cast<int>(betaT.size()); }

  double beta(int n, int p) const { return 1.0 - lambda(n - 1) * (betaT(p) + tau(n - 1) * betaD(p)); }

  void validate() const {
    require(m() >= 1 && K() >= 1, ErrorKind::InvalidArgument, "spectra need m >= 1 and K >= 1");
    require(tau.size() == m() && eta.size() == m() && betaD.size() == K(), ErrorKind::DimensionMismatch,
            "inconsistent spectra sizes");
    require(lambda.allFinite() && tau.allFinite() && eta.allFinite() && betaT.allFinite() && betaD.allFinite(),
            ErrorKind::Numerical, "spectra must be finite");
    for (int n = 0; n < m(); ++n)
      require(eta(n) >= 0.0, ErrorKind::InvalidArgument, "leakage factors must be >= 0");
  }

  static LayerSpectra from_network(const NetParams& params, const NetConfig& cfg, const AbelSystem& sys,
                                   double tau_ratio) {
    LayerSpectra s;
    const int m = cfg.m;
    s.lambda.resize(m);
    s.tau.resize(m);
    s.eta.resize(m);
    for (int n = 1; n <= m; ++n) {
      s.lambda(n - 1) = step_size(params.c(n - 1), cfg);
      s.tau(n - 1) = softplus(params.d(n - 1), cfg.softplus_beta) * tau_ratio;
      s.eta(n - 1) = cfg.eta_at(n);
    }
    s.betaT = sys.betaT();
    s.betaD = sys.betaD();
    return s;
  }
};

struct CompositeBetas {
  Eigen::VectorXd beta;        // beta_{i,n,p}
  Eigen::VectorXd beta_tilde;  // btilde_{i,n,p}
  double eta = 1.0;            // eta_{i,n}
};

/// eta_{i,j}; empty product (j < i) is 1.
inline double eta_product(const LayerSpectra& s, int i, int j) {
  double v = 1.0;
  for (int k = i; k <= j; ++k) v *= s.eta(k - 1);
  return v;
}

inline CompositeBetas composite_betas(const LayerSpectra& s, int i, int n) {
  require(1 <= i && i <= n && n <= s.m(), ErrorKind::InvalidArgument, "composite index needs 1 <= i <= n <= m");
  const int K = s.K();
  CompositeBetas out;
  out.beta.resize(K);
  out.beta_tilde.resize(K);
  for (int p = 0; p < K; ++p) {
    out.beta(p) = s.beta(i, p);
    out.beta_tilde(p) = s.lambda(i - 1);
  }
  double eta = s.eta(i - 1);  // eta_{i,j-1} for the next j
  for (int j = i + 1; j <= n; ++j) {
    for (int p = 0; p < K; ++p) {
      const double bj = s.beta(j, p);
      out.beta_tilde(p) = bj * out.beta_tilde(p) + s.lambda(j - 1) * eta;
      out.beta(p) *= bj;
    }
    eta *= s.eta(j - 1);
  }
  out.eta = eta;
  return out;
}

struct SupValue {
  double value = 0.0;
  int index = -1;  // attaining eigenindex
};

namespace detail {

/// Largest root of nu^2 - (X+Y+Z) nu + X Y, i.e. squared norm of [[x, z],[0, y]]
/// with X = x^2, Y = y^2, Z = z^2. Written to avoid cancellation.
inline double block_norm2(double X, double Y, double Z) {
  const double d = X - Y;
  return 0.5 * (X + Y + Z + std::sqrt(d * d + Z * (Z + 2.0 * (X + Y))));
}

template <class F>
SupValue sup_over_p(int K, F&& f) {
  SupValue s{-1.0, -1};
  for (int p = 0; p < K; ++p) {
    const double v = f(p);
    if (v > s.value) s = {v, p};
  }
  return s;
}

}  // namespace detail

inline SupValue a_in(const LayerSpectra& s, int i, int n) {
  const CompositeBetas cb = composite_betas(s, i, n);
  const double Y = cb.eta * cb.eta;
  return detail::sup_over_p(s.K(), [&](int p) {
    return detail::block_norm2(cb.beta(p) * cb.beta(p), Y, cb.beta_tilde(p) * cb.beta_tilde(p));
  });
}

/// Seminorm version: eta_{i,n} replaced by 0.
inline SupValue a_bar_in(const LayerSpectra& s, int i, int n) {
  const CompositeBetas cb = composite_betas(s, i, n);
  return detail::sup_over_p(s.K(), [&](int p) {
    return cb.beta(p) * cb.beta(p) + cb.beta_tilde(p) * cb.beta_tilde(p);
  });
}

enum class InitCase { Zero = 0, Data = 1 };  // x0 = 0 / x0 = b0

/// a-hat_{1,n}. For n < m the bias channel is kept (+eta^2); for n = m only the
/// x-component survives.
inline SupValue a_hat_1n(const LayerSpectra& s, int n, InitCase c) {
  const CompositeBetas cb = composite_betas(s, 1, n);
  const double tail = (n < s.m()) ? cb.eta * cb.eta : 0.0;
  return detail::sup_over_p(s.K(), [&](int p) {
    const double v = (c == InitCase::Zero) ? cb.beta_tilde(p) : cb.beta(p) + cb.beta_tilde(p);
    return v * v + tail;
  });
}

/// theta_0..theta_m.
inline std::vector<double> theta_virtual(const LayerSpectra& s) {
  const int m = s.m();
  std::vector<double> th(m + 1, 0.0);
  th[0] = 1.0;
  for (int n = 1; n <= m; ++n)
    for (int i = 1; i <= n; ++i) th[n] += th[i - 1] * std::sqrt(a_in(s, i, n).value);
  return th;
}

inline double lipschitz_virtual(const LayerSpectra& s) {
  const auto th = theta_virtual(s);
  return th[s.m()] / std::ldexp(1.0, s.m() - 1);
}

struct HatCase {
  std::vector<SupValue> a_hat;     // n = 1..m at [n-1]
  std::vector<double> theta_hat;   // n = 1..m at [n-1]
  double lipschitz = 0.0;          // theta_hat_m / 2^{m-1}
};

struct AlphaRow {
  double alpha = 1.0;
  double gamma = 0.0;
  SupValue b, b_bar;
  std::array<SupValue, 2> b_hat{};
  bool flag_virtual = false, flag_bar = false;
  std::array<bool, 2> flag_hat{false, false};
};

struct Certificate {
  int m = 0, K = 0;
  std::vector<std::vector<SupValue>> a;  // a[i-1][n-1] for i <= n
  std::vector<double> theta;             // theta_0..theta_m
  double lipschitz_virtual = 0.0;
  std::vector<SupValue> a_bar;           // a_bar[i-1] = abar_{i,m}
  double theta_bar = 0.0;
  std::optional<std::array<HatCase, 2>> hat;  // present when m >= 2
  double eta_1m = 1.0;
  double vartheta_fixed = 0.0, vartheta_data = 0.0;
  bool leakage_is_unity = true;
  std::vector<AlphaRow> alpha;

  double lipschitz_case(InitCase c) const {
    require(hat.has_value(), ErrorKind::InvalidArgument, "hatted constants need m >= 2");
    return (*hat)[static_cast<int>(c)].lipschitz;
  }
};

/// Seminorm and hatted variants.
struct SeminormVariants {
  std::vector<SupValue> a_bar;  // abar_{i,m}
  double theta_bar = 0.0;
  std::array<HatCase, 2> hat;
};

inline SeminormVariants seminorm_variants(const LayerSpectra& s, const std::vector<double>& theta) {
  const int m = s.m();
  require(m >= 2, ErrorKind::InvalidArgument, "seminorm variants need m >= 2");
  SeminormVariants out;
  out.a_bar.resize(m);
  for (int i = 1; i <= m; ++i) {
    out.a_bar[i - 1] = a_bar_in(s, i, m);
    out.theta_bar += theta[i - 1] * std::sqrt(out.a_bar[i - 1].value);
  }
  for (int c = 0; c < 2; ++c) {
    HatCase& hc = out.hat[c];
    hc.a_hat.resize(m);
    hc.theta_hat.assign(m, 0.0);
    for (int n = 1; n <= m; ++n) {
      hc.a_hat[n - 1] = a_hat_1n(s, n, static_cast<InitCase>(c));
      double t = std::sqrt(hc.a_hat[n - 1].value);
      for (int i = 2; i <= n; ++i) {
        const double seg = (n < m) ? a_in(s, i, n).value : out.a_bar[i - 1].value;
        t += hc.theta_hat[i - 2] * std::sqrt(seg);
      }
      hc.theta_hat[n - 1] = t;
    }
    hc.lipschitz = hc.theta_hat[m - 1] / std::ldexp(1.0, m - 1);
  }
  return out;
}

struct Vartheta {
  double fixed_init = 0.0;
  double data_init = 0.0;
};

inline Vartheta vartheta(const LayerSpectra& s, double theta_m) {
  const int m = s.m();
  const double e = eta_product(s, 1, m);
  auto root = [&](double lead) {
    const double rad = lead - e * e;
    if (rad >= 0.0) return std::sqrt(rad);
    require(rad > -1e-10 * std::max(1.0, lead), ErrorKind::Numerical, "inconsistent certificate");
    return 0.0;
  };
  const double t2 = theta_m * theta_m;
  return {root(t2 / std::ldexp(1.0, 2 * (m - 1))), root(t2 / std::ldexp(1.0, 2 * m - 3))};
}

/// b_alpha family for one alpha.
inline AlphaRow averagedness_row(const LayerSpectra& s, double alpha) {
  require(alpha >= 0.5 && alpha <= 1.0, ErrorKind::InvalidArgument, "alpha must lie in [1/2, 1]");
  const int m = s.m(), K = s.K();
  const CompositeBetas cb = composite_betas(s, 1, m);
  AlphaRow row;
  row.alpha = alpha;
  row.gamma = std::ldexp(1.0 - alpha, m);
  const double g = row.gamma;
  const double ey = (cb.eta - g) * (cb.eta - g);
  row.b = detail::sup_over_p(K, [&](int p) {
    const double x = cb.beta(p) - g;
    return detail::block_norm2(x * x, ey, cb.beta_tilde(p) * cb.beta_tilde(p));
  });
  row.b_bar = detail::sup_over_p(K, [&](int p) {
    const double x = cb.beta(p) - g;
    return detail::block_norm2(x * x, g * g, cb.beta_tilde(p) * cb.beta_tilde(p));
  });
  row.b_hat[0] = detail::sup_over_p(K, [&](int p) {
    const double x = cb.beta_tilde(p) - g;
    return x * x;
  });
  row.b_hat[1] = detail::sup_over_p(K, [&](int p) {
    const double x = cb.beta(p) + cb.beta_tilde(p) - g;
    return x * x;
  });
  return row;
}

inline std::vector<double> default_alpha_grid(int points = 64) {
  require(points >= 2, ErrorKind::InvalidArgument, "alpha grid needs at least 2 points");
  std::vector<double> g(points);
  for (int k = 0; k < points; ++k) g[k] = 0.5 + 0.5 * static_cast<double>(k) / (points - 1);
  return g;
}

inline Certificate certify(const LayerSpectra& s, const std::vector<double>& alpha_grid = default_alpha_grid()) {
  s.validate();
  const int m = s.m();
  Certificate cert;
  cert.m = m;
  cert.K = s.K();
  cert.a.assign(m, std::vector<SupValue>(m));
  for (int i = 1; i <= m; ++i)
    for (int n = i; n <= m; ++n) cert.a[i - 1][n - 1] = a_in(s, i, n);
  cert.theta.assign(m + 1, 0.0);
  cert.theta[0] = 1.0;
  for (int n = 1; n <= m; ++n)
    for (int i = 1; i <= n; ++i) cert.theta[n] += cert.theta[i - 1] * std::sqrt(cert.a[i - 1][n - 1].value);
  cert.lipschitz_virtual = cert.theta[m] / std::ldexp(1.0, m - 1);

  cert.a_bar.resize(m);
  cert.theta_bar = 0.0;
  for (int i = 1; i <= m; ++i) {
    cert.a_bar[i - 1] = a_bar_in(s, i, m);
    cert.theta_bar += cert.theta[i - 1] * std::sqrt(cert.a_bar[i - 1].value);
  }
  if (m >= 2) cert.hat = seminorm_variants(s, cert.theta).hat;

  cert.eta_1m = eta_product(s, 1, m);
  for (int n = 0; n < m; ++n) cert.leakage_is_unity = cert.leakage_is_unity && s.eta(n) == 1.0;
  const Vartheta vt = vartheta(s, cert.theta[m]);
  cert.vartheta_fixed = vt.fixed_init;
  cert.vartheta_data = vt.data_init;

  const double two_m = std::ldexp(1.0, m);
  const double sa = std::sqrt(cert.a[0][m - 1].value);
  const double sab = std::sqrt(cert.a_bar[0].value);
  for (double alpha : alpha_grid) {
    AlphaRow row = averagedness_row(s, alpha);
    const double rhs = two_m * alpha;
    row.flag_virtual = std::sqrt(row.b.value) - sa <= rhs - 2.0 * cert.theta[m];
    row.flag_bar = std::sqrt(row.b_bar.value) - sab <= rhs - 2.0 * cert.theta_bar;
    if (cert.hat) {
      for (int c = 0; c < 2; ++c) {
        const HatCase& hc = (*cert.hat)[c];
        row.flag_hat[c] = std::sqrt(row.b_hat[c].value) - std::sqrt(hc.a_hat[m - 1].value) <=
                          rhs - 2.0 * hc.theta_hat[m - 1];
      }
    }
    cert.alpha.push_back(row);
  }
  return cert;
}

/// Smallest grid alpha whose flag is set, if any.
template <class Pred>
std::optional<double> smallest_alpha(const Certificate& cert, Pred&& flag) {
  std::optional<double> best;
  for (const auto& row : cert.alpha)
    if (flag(row) && (!best || row.alpha < *best)) best = row.alpha;
  return best;
}

inline nlohmann::ordered_json certificate_to_json(const Certificate& cert) {
  using nlohmann::ordered_json;
  auto sup = [](const SupValue& v) { return ordered_json{{"value", v.value}, {"p", v.index}}; };
  auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json("none"); };
  ordered_json j;
  j["format"] = "abelnet-certificate";
  j["version"] = 1;
  j["m"] = cert.m;
  j["K"] = cert.K;
  j["leakage_is_unity"] = cert.leakage_is_unity;
  j["eta_1m"] = cert.eta_1m;
  j["lipschitz_virtual"] = cert.lipschitz_virtual;
  if (cert.hat) {
    j["lipschitz_case1"] = (*cert.hat)[0].lipschitz;
    j["lipschitz_case2"] = (*cert.hat)[1].lipschitz;
  } else {
    j["lipschitz_case1"] = "undefined for m < 2";
    j["lipschitz_case2"] = "undefined for m < 2";
  }
  j["vartheta_fixed_init"] = cert.vartheta_fixed;
  j["vartheta_data_init"] = cert.vartheta_data;
  j["theta"] = cert.theta;
  j["theta_bar"] = cert.theta_bar;
  auto a = ordered_json::array();
  for (int i = 1; i <= cert.m; ++i)
    for (int n = i; n <= cert.m; ++n) {
      auto e = sup(cert.a[i - 1][n - 1]);
      e["i"] = i;
      e["n"] = n;
      a.push_back(e);
    }
  j["a"] = a;
  auto ab = ordered_json::array();
  for (int i = 1; i <= cert.m; ++i) {
    auto e = sup(cert.a_bar[i - 1]);
    e["i"] = i;
    ab.push_back(e);
  }
  j["a_bar_im"] = ab;
  if (cert.hat) {
    for (int c = 0; c < 2; ++c) {
      const HatCase& hc = (*cert.hat)[c];
      auto ah = ordered_json::array();
      for (int n = 1; n <= cert.m; ++n) {
        auto e = sup(hc.a_hat[n - 1]);
        e["n"] = n;
        ah.push_back(e);
      }
      const std::string key = c == 0 ? "case1" : "case2";
      j[key] = {{"x0", c == 0 ? "zero" : "data"}, {"a_hat_1n", ah}, {"theta_hat", hc.theta_hat},
                {"lipschitz", hc.lipschitz}};
    }
  }
  auto rows = ordered_json::array();
  for (const auto& r : cert.alpha) {
    ordered_json e{{"alpha", r.alpha},
                   {"gamma", r.gamma},
                   {"b", sup(r.b)},
                   {"b_bar", sup(r.b_bar)},
                   {"b_hat_case1", sup(r.b_hat[0])},
                   {"b_hat_case2", sup(r.b_hat[1])},
                   {"averaged_virtual", r.flag_virtual},
                   {"averaged_seminorm", r.flag_bar}};
    if (cert.hat) {
      e["averaged_case1"] = r.flag_hat[0];
      e["averaged_case2"] = r.flag_hat[1];
    }
    rows.push_back(e);
  }
  j["alpha_grid"] = rows;
  j["smallest_alpha"] = {
      {"virtual", opt(smallest_alpha(cert, [](const AlphaRow& r) { return r.flag_virtual; }))},
      {"seminorm", opt(smallest_alpha(cert, [](const AlphaRow& r) { return r.flag_bar; }))},
      {"case1", opt(smallest_alpha(cert, [](const AlphaRow& r) { return r.flag_hat[0]; }))},
      {"case2", opt(smallest_alpha(cert, [](const AlphaRow& r) { return r.flag_hat[1]; }))}};
  return j;
}

}  // namespace abelnet
