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

// Log-barrier constraints and their proximity operators.
//
//   box:  g(x) = -sum_i [ln(x_i - x_min) + ln(x_max - x_i)]
//   slab: g(x) = -ln<w,x> - ln(1 - <w,x>),  w_i = h t_i^j
//
// prox_{gamma g}(v) solves x - v = -gamma grad g(x). Both reduce to scalar
// monotone equations solved by bracketed Newton.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <variant>

#include "abelnet/abel_core.hpp"
#include "abelnet/error.hpp"

namespace abelnet {

struct BoxConstraint {
  double x_min = 0.0;
  double x_max = 1.0;
};

struct SlabConstraint {
  int j = 1;
  Eigen::VectorXd w;

  static SlabConstraint moment(int j, const GridSpec& grid) {
    require(j >= 1, ErrorKind::InvalidArgument, "moment order must be >= 1");
    SlabConstraint s;
    s.j = j;
    s.w.resize(grid.N);
    for (int i = 0; i < grid.N; ++i) s.w(i) = grid.h * std::pow(grid.nodes(i), j);
    return s;
  }
};

/// g = 0; the prox is the identity. Test hook only, never produced by configs.
struct NoBarrier {};

using Constraint = std::variant<BoxConstraint, SlabConstraint, NoBarrier>;

inline void validate(const Constraint& c) {
  if (const auto* b = std::get_if<BoxConstraint>(&c)) {
    require(std::isfinite(b->x_min) && std::isfinite(b->x_max) && b->x_min < b->x_max,
            ErrorKind::InvalidArgument, "box constraint needs finite x_min < x_max");
  } else if (const auto* s = std::get_if<SlabConstraint>(&c)) {
    require(s->w.size() > 0 && (s->w.array() >= 0.0).all() && s->w.squaredNorm() > 0.0,
            ErrorKind::InvalidArgument, "slab weights must be nonnegative and not all zero");
  }
}

inline double barrier_value(const Eigen::VectorXd& x, const Constraint& c) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (const auto* b = std::get_if<BoxConstraint>(&c)) {
    double v = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double lo = x(i) - b->x_min, hi = b->x_max - x(i);
      if (!(lo > 0.0 && hi > 0.0)) return inf;
      v -= std::log(lo) + std::log(hi);
    }
    return v;
  }
  if (const auto* s = std::get_if<SlabConstraint>(&c)) {
    require(s->w.size() == x.size(), ErrorKind::DimensionMismatch, "slab weights length mismatch");
    const double u = s->w.dot(x);
    if (!(u > 0.0 && u < 1.0)) return inf;
    return -std::log(u) - std::log(1.0 - u);
  }
  return 0.0;
}

namespace detail {

struct ScalarRoot {
  double x = 0.0;
  double residual = 0.0;
};

/// Root of an increasing function on the open interval (lo, hi) that tends to
/// -inf at lo and +inf at hi. Newton steps, bisection whenever Newton leaves
/// the current bracket.
template <class F, class DF>
ScalarRoot solve_bracketed(F&& f, DF&& df, double lo, double hi, double start, double tol) {
  constexpr int kMaxIter = 200;
  double a = lo, b = hi;
  double x = start;
  if (!(x > a && x < b)) x = 0.5 * (a + b);
  for (int it = 0; it < kMaxIter; ++it) {
    const double r = f(x);
    if (std::abs(r) <= tol) return {x, r};
    if (r < 0.0) a = x; else b = x;
    double next = x - r / df(x);
    if (!(next > a && next < b)) next = a + 0.5 * (b - a);
    if (next == x || next <= a || next >= b) {
      // bracket collapsed to adjacent doubles; x is as good as representable
      return {x, r};
    }
    x = next;
  }
  fail(ErrorKind::Numerical, "barrier prox root solve did not converge");
}

inline double slab_phi(double u) { return 1.0 / u - 1.0 / (1.0 - u); }
inline double slab_psi(double u) { return 1.0 / (u * u) + 1.0 / ((1.0 - u) * (1.0 - u)); }

}  // namespace detail

inline double prox_box_scalar(double v, double gamma, double x_min, double x_max) {
  auto f = [&](double x) { return x - v - gamma * (1.0 / (x - x_min) - 1.0 / (x_max - x)); };
  auto df = [&](double x) {
    const double lo = x - x_min, hi = x_max - x;
    return 1.0 + gamma * (1.0 / (lo * lo) + 1.0 / (hi * hi));
  };
  const double width = x_max - x_min;
  const double start = std::min(std::max(v, x_min + 1e-3 * width), x_max - 1e-3 * width);
  return detail::solve_bracketed(f, df, x_min, x_max, start, 1e-12 * (1.0 + std::abs(v))).x;
}

inline Eigen::VectorXd prox_box(const Eigen::VectorXd& v, double gamma, double x_min, double x_max) {
  require(gamma > 0.0 && std::isfinite(gamma), ErrorKind::InvalidArgument, "prox parameter must be > 0");
  require(x_min < x_max, ErrorKind::InvalidArgument, "box needs x_min < x_max");
  Eigen::VectorXd x(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) x(i) = prox_box_scalar(v(i), gamma, x_min, x_max);
  return x;
}

/// Moment u = <w,x> of the slab prox output.
inline double prox_slab_moment(double s, double w2, double gamma) {
  auto f = [&](double u) { return u - s - w2 * gamma * detail::slab_phi(u); };
  auto df = [&](double u) { return 1.0 + w2 * gamma * detail::slab_psi(u); };
  const double start = std::min(std::max(s, 1e-3), 1.0 - 1e-3);
  return detail::solve_bracketed(f, df, 0.0, 1.0, start, 1e-12 * (1.0 + std::abs(s))).x;
}

inline Eigen::VectorXd prox_slab(const Eigen::VectorXd& v, double gamma, const Eigen::VectorXd& w) {
  require(gamma > 0.0 && std::isfinite(gamma), ErrorKind::InvalidArgument, "prox parameter must be > 0");
  require(w.size() == v.size(), ErrorKind::DimensionMismatch, "slab weights length mismatch");
  const double w2 = w.squaredNorm();
  require(w2 > 0.0, ErrorKind::InvalidArgument, "slab weights must not vanish");
  const double u = prox_slab_moment(w.dot(v), w2, gamma);
  return v + gamma * detail::slab_phi(u) * w;
}

inline Eigen::VectorXd prox(const Eigen::VectorXd& v, double gamma, const Constraint& c) {
  if (const auto* b = std::get_if<BoxConstraint>(&c)) return prox_box(v, gamma, b->x_min, b->x_max);
  if (const auto* s = std::get_if<SlabConstraint>(&c)) return prox_slab(v, gamma, s->w);
  return v;
}

/// Optimality residual of a prox output, as the Newton step |r| / r'(x) of the
/// scalar equation (componentwise max for the box, the moment equation for the
/// slab). Near the barrier wall r' reaches 1/ulp scales, so the raw residual is
/// not a usable accuracy measure there.
inline double prox_residual(const Eigen::VectorXd& v, const Eigen::VectorXd& x, double gamma,
                            const Constraint& c) {
  if (const auto* b = std::get_if<BoxConstraint>(&c)) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double lo = x(i) - b->x_min, hi = b->x_max - x(i);
      const double r = x(i) - v(i) - gamma * (1.0 / lo - 1.0 / hi);
      const double dr = 1.0 + gamma * (1.0 / (lo * lo) + 1.0 / (hi * hi));
      worst = std::max(worst, std::abs(r) / dr);
    }
    return worst;
  }
  if (const auto* s = std::get_if<SlabConstraint>(&c)) {
    const double u = s->w.dot(x), sv = s->w.dot(v);
    const double w2 = s->w.squaredNorm();
    return std::abs(u - sv - w2 * gamma * detail::slab_phi(u)) / (1.0 + w2 * gamma * detail::slab_psi(u));
  }
  return (x - v).cwiseAbs().maxCoeff();
}

/// Derivatives of x = prox_{gamma g}(v): dx/dv is symmetric (diagonal for the
/// box, identity minus a rank-one term for the slab) and dx/dgamma is a vector.
struct ProxJacobian {
  enum class Kind { Diagonal, RankOne, Identity } kind = Kind::Identity;
  Eigen::VectorXd diag;       // Diagonal
  Eigen::VectorXd w;          // RankOne: J = I - coef w w^T
  double coef = 0.0;
  Eigen::VectorXd d_gamma;    // dx/dgamma

  Eigen::VectorXd apply(const Eigen::VectorXd& g) const {
    switch (kind) {
      case Kind::Diagonal: return diag.cwiseProduct(g);
      case Kind::RankOne: return g - coef * w.dot(g) * w;
      case Kind::Identity: break;
    }
    return g;
  }
  // J is symmetric, so the transpose action is the same map.
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& g) const { return apply(g); }

  Eigen::MatrixXd dense(Eigen::Index n) const {
    switch (kind) {
      case Kind::Diagonal: return diag.asDiagonal();
      case Kind::RankOne: return Eigen::MatrixXd::Identity(n, n) - coef * w * w.transpose();
      case Kind::Identity: break;
    }
    return Eigen::MatrixXd::Identity(n, n);
  }
};

/// Jacobian at a solved pair (v, x = prox(v)).
inline ProxJacobian prox_jacobian_at(const Eigen::VectorXd& x, double gamma, const Constraint& c) {
  ProxJacobian J;
  if (const auto* b = std::get_if<BoxConstraint>(&c)) {
    J.kind = ProxJacobian::Kind::Diagonal;
    J.diag.resize(x.size());
    J.d_gamma.resize(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double lo = x(i) - b->x_min, hi = b->x_max - x(i);
      const double d = 1.0 / (1.0 + gamma * (1.0 / (lo * lo) + 1.0 / (hi * hi)));
      J.diag(i) = d;
      J.d_gamma(i) = (1.0 / lo - 1.0 / hi) * d;
    }
  } else if (const auto* s = std::get_if<SlabConstraint>(&c)) {
    const double u = s->w.dot(x);
    const double w2 = s->w.squaredNorm();
    const double D = 1.0 + w2 * gamma * detail::slab_psi(u);
    J.kind = ProxJacobian::Kind::RankOne;
    J.w = s->w;
    J.coef = gamma * detail::slab_psi(u) / D;
    J.d_gamma = (detail::slab_phi(u) / D) * s->w;
  } else {
    J.kind = ProxJacobian::Kind::Identity;
    J.d_gamma = Eigen::VectorXd::Zero(x.size());
  }
  return J;
}

inline ProxJacobian prox_jacobian(const Eigen::VectorXd& v, double gamma, const Constraint& c) {
  return prox_jacobian_at(prox(v, gamma, c), gamma, c);
}

}  // namespace abelnet
