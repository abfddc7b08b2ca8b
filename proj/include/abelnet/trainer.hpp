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

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "abelnet/abel_core.hpp"
#include "abelnet/barrier_prox.hpp"
#include "abelnet/datagen.hpp"
#include "abelnet/error.hpp"
#include "abelnet/robustness_cert.hpp"
#include "abelnet/unrolled_net.hpp"

namespace abelnet {

inline double mse_loss(const Eigen::VectorXd& x_out, const Eigen::VectorXd& x_true) {
  require(x_out.size() == x_true.size() && x_out.size() > 0, ErrorKind::DimensionMismatch, "mse size mismatch");
  return (x_out - x_true).squaredNorm() / static_cast<double>(x_out.size());
}

struct Gradients {
  Eigen::VectorXd c, d, e;

  static Gradients zeros(int m) {
    return {Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(m)};
  }
  Gradients& operator+=(const Gradients& o) {
    c += o.c;
    d += o.d;
    e += o.e;
    return *this;
  }
  Gradients& operator*=(double s) {
    c *= s;
    d *= s;
    e *= s;
    return *this;
  }
  bool finite() const { return c.allFinite() && d.allFinite() && e.allFinite(); }
};

/// Reverse sweep of the MSE loss through a recorded forward pass.
///
/// Per layer, with g the adjoint of x_n:
///   g_v      = h V g                 (to nodal values)
///   g_pre    = V^T J g_v             (J symmetric)
///   g_gamma  = <g_v, dx/dgamma>
///   g_lambda = <g_pre, eta b0 - s x_{n-1}> + mu g_gamma
///   g_tau    = -lambda <g_pre, betaD x_{n-1}>
///   g_mu     = lambda g_gamma
///   g       <- (1 - lambda s) g_pre
inline Gradients backward(const LayerTrace& trace, const Eigen::VectorXd& x_true, const NetParams& params,
                          const NetConfig& cfg, const AbelSystem& sys) {
  const int m = cfg.m;
  require(static_cast<int>(trace.layers.size()) == m, ErrorKind::InvalidArgument, "backward needs a full trace");
  require(params.layers() == m, ErrorKind::DimensionMismatch, "parameter count differs from m");
  const double beta = cfg.softplus_beta;
  Gradients gr = Gradients::zeros(m);
  Eigen::VectorXd g = 2.0 * (trace.layers.back().x_out - x_true) / static_cast<double>(x_true.size());
  const Eigen::ArrayXd bT = sys.betaT().array(), bD = sys.betaD().array();
  for (int n = m; n >= 1; --n) {
    const LayerRecord& L = trace.layers[n - 1];
    Eigen::VectorXd g_pre;
    double g_gamma = 0.0;
    if (L.jac.kind == ProxJacobian::Kind::Identity) {
      g_pre = g;
    } else {
      const Eigen::VectorXd g_v = sys.h() * (sys.V() * g);
      g_pre = sys.V().transpose() * L.jac.apply_transpose(g_v);
      g_gamma = g_v.dot(L.jac.d_gamma);
    }
    const Eigen::ArrayXd s = bT + L.tau * bD;
    const Eigen::ArrayXd xin = L.x_in.array();
    const double g_lambda =
        (g_pre.array() * (L.eta_prod * trace.b0.array() - s * xin)).sum() + L.mu * g_gamma;
    const double g_tau = -L.lambda * (g_pre.array() * bD * xin).sum();
    const double g_mu = L.lambda * g_gamma;
    gr.c(n - 1) = g_lambda * softplus_grad(params.c(n - 1), beta);
    gr.d(n - 1) = g_tau * trace.ratio * softplus_grad(params.d(n - 1), beta);
    gr.e(n - 1) = g_mu * softplus_grad(params.e(n - 1), beta);
    g = ((1.0 - L.lambda * s) * g_pre.array()).matrix();
  }
  return gr;
}

struct AdamState {
  Eigen::VectorXd m1, m2;  // stacked (c, d, e)
  long step = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void adam_step(NetParams& p, const Gradients& g, AdamState& st, const AdamConfig& ac) {
  const int m = p.layers();
  Eigen::VectorXd theta(3 * m), grad(3 * m);
  theta << p.c, p.d, p.e;
  grad << g.c, g.d, g.e;
  if (st.m1.size() != 3 * m) {
    st.m1 = Eigen::VectorXd::Zero(3 * m);
    st.m2 = Eigen::VectorXd::Zero(3 * m);
    st.step = 0;
  }
  ++st.step;
  st.m1 = ac.beta1 * st.m1 + (1.0 - ac.beta1) * grad;
  st.m2 = ac.beta2 * st.m2 + (1.0 - ac.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(ac.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(ac.beta2, static_cast<double>(st.step));
  theta.array() -= ac.lr * (st.m1.array() / c1) / ((st.m2.array() / c2).sqrt() + ac.eps);
  p.c = theta.segment(0, m);
  p.d = theta.segment(m, m);
  p.e = theta.segment(2 * m, m);
}

// ---------------------------------------------------------------------------
// initialization

enum class InitScheme { Calibrated, Fixed };

struct InitConfig {
  InitScheme scheme = InitScheme::Calibrated;
  double mu0 = 1e-4;     // initial barrier weight (calibrated scheme)
  int probe_records = 50;  // records used to rank the finalists with the full network
  int finalists = 8;
};

/// Median of noise_ratio over records; the representative value used for
/// certificates and for mapping a target tau to the raw parameter d.
inline double reference_ratio(const std::vector<SignalRecord>& recs, const NetConfig& cfg, const AbelSystem& sys) {
  require(!recs.empty(), ErrorKind::InvalidArgument, "reference ratio needs at least one record");
  std::vector<double> r;
  r.reserve(recs.size());
  for (const auto& rec : recs) r.push_back(noise_ratio(rec.b0, cfg, sys));
  std::nth_element(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(r.size() / 2), r.end());
  return r[r.size() / 2];
}

inline NetParams params_from_schedule(const std::vector<double>& lambda, double tau, double mu, double ratio_ref,
                                      const NetConfig& cfg) {
  const int m = cfg.m;
  NetParams p = NetParams::constant(m, 0.0, softplus_inverse(tau / ratio_ref, cfg.softplus_beta),
                                    softplus_inverse(mu, cfg.softplus_beta));
  for (int n = 0; n < m; ++n) p.c(n) = softplus_inverse(lambda[n], cfg.softplus_beta);
  return p;
}

/// Mean relative error of the network with the barrier removed; each layer is
/// then a per-mode affine map, so the output is F_k b0_k.
inline double linear_surrogate_error(const std::vector<double>& lambda, double tau0, double ratio_ref,
                                     const std::vector<SignalRecord>& recs, const NetConfig& cfg,
                                     const AbelSystem& sys) {
  const int K = sys.K();
  double acc = 0.0;
  for (const auto& r : recs) {
    const double tau = tau0 * noise_ratio(r.b0, cfg, sys) / ratio_ref;
    double err2 = 0.0;
    for (int k = 0; k < K; ++k) {
      const double s = sys.betaT()(k) + tau * sys.betaD()(k);
      double F = cfg.x0 == InitialIterate::Data ? 1.0 : 0.0, eta = 1.0;
      for (int n = 1; n <= cfg.m; ++n) {
        F = (1.0 - lambda[n - 1] * s) * F + lambda[n - 1] * eta;
        eta *= cfg.eta_at(n);
      }
      const double e = F * r.b0.coeffs(k) - r.x_true.coeffs(k);
      err2 += e * e;
    }
    acc += std::sqrt(err2) / r.x_true.coeffs.norm();
  }
  return acc / static_cast<double>(recs.size());
}

inline double evaluate(const NetParams& params, const std::vector<SignalRecord>& recs, const NetConfig& cfg,
                       const AbelSystem& sys);

/// Initial parameters. Calibrated: geometric step schedules
/// lambda_n = f rho^{n-1} / (betaT_0 + tau0 betaD_{K-1}) ranked on the
/// training records, first by the barrier-free surrogate, then by the full
/// network. Fixed: constant lambda = 0.5 / (betaT_0 + tau betaD_{K-1}),
/// tau = 0.05, mu = 1e-2.
inline NetParams initialize_params(const InitConfig& ic, const std::vector<SignalRecord>& train,
                                   const NetConfig& cfg, const AbelSystem& sys, double ratio_ref) {
  const int m = cfg.m, K = sys.K();
  if (ic.scheme == InitScheme::Fixed || train.empty()) {
    const double tau = 0.05;
    const double lam = 0.5 / (sys.betaT()(0) + tau * sys.betaD()(K - 1));
    return params_from_schedule(std::vector<double>(m, lam), tau, 1e-2, ratio_ref, cfg);
  }
  struct Cand {
    double tau0, f, rho, score;
  };
  std::vector<Cand> cands;
  for (int t = 0; t <= 10; ++t) {
    const double tau0 = std::pow(10.0, -8.0 + 0.5 * t);
    for (double f : {0.5, 1.0, 1.5, 1.9})
      for (double rho : {1.0, 1.1, 1.2, 1.3, 1.5, 2.0}) {
        const double L = sys.betaT()(0) + tau0 * sys.betaD()(K - 1);
        std::vector<double> lam(m);
        for (int n = 0; n < m; ++n) lam[n] = f * std::pow(rho, n) / L;
        cands.push_back({tau0, f, rho, linear_surrogate_error(lam, tau0, ratio_ref, train, cfg, sys)});
      }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) { return x.score < y.score; });
  const std::vector<SignalRecord> probe(train.begin(),
                                        train.begin() + std::min<std::ptrdiff_t>(ic.probe_records,
                                                                                  static_cast<std::ptrdiff_t>(train.size())));
  NetParams best;
  double best_err = std::numeric_limits<double>::infinity();
  const int nf = std::min<int>(ic.finalists, static_cast<int>(cands.size()));
  for (int k = 0; k < nf; ++k) {
    const Cand& c = cands[k];
    const double L = sys.betaT()(0) + c.tau0 * sys.betaD()(K - 1);
    std::vector<double> lam(m);
    for (int n = 0; n < m; ++n) lam[n] = c.f * std::pow(c.rho, n) / L;
    NetParams p = params_from_schedule(lam, c.tau0, ic.mu0, ratio_ref, cfg);
    double err = std::numeric_limits<double>::infinity();
    try {
      err = evaluate(p, probe, cfg, sys);
    } catch (const Error&) {
    }
    if (std::isfinite(err) && err < best_err) {
      best_err = err;
      best = std::move(p);
    }
  }
  require(std::isfinite(best_err), ErrorKind::Numerical, "no finite initial schedule found");
  return best;
}

// ---------------------------------------------------------------------------
// evaluation

inline double relative_error(const Eigen::VectorXd& x_out, const Eigen::VectorXd& x_true) {
  const double nt = x_true.norm();
  require(nt > 0.0, ErrorKind::InvalidArgument, "relative error of a zero-norm truth");
  return (x_out - x_true).norm() / nt;
}

inline SpectralSignal run_network(const NetParams& params, const SpectralSignal& b0, const NetConfig& cfg,
                                  const AbelSystem& sys, const Constraint& C) {
  return forward(initial_iterate(b0, cfg), b0, params, cfg, sys, C).x;
}

inline std::vector<double> record_errors(const NetParams& params, const std::vector<SignalRecord>& recs,
                                         const NetConfig& cfg, const AbelSystem& sys) {
  const Constraint C = cfg.constraint.materialize(sys.grid());
  std::vector<double> out;
  out.reserve(recs.size());
  for (const auto& r : recs) out.push_back(relative_error(run_network(params, r.b0, cfg, sys, C).coeffs, r.x_true.coeffs));
  return out;
}

/// Mean of ||x_out - x_true|| / ||x_true|| in the h-weighted norm (equal to the
/// Euclidean norm of eigen coefficients).
inline double evaluate(const NetParams& params, const std::vector<SignalRecord>& recs, const NetConfig& cfg,
                       const AbelSystem& sys) {
  require(!recs.empty(), ErrorKind::InvalidArgument, "evaluation needs at least one record");
  const auto e = record_errors(params, recs, cfg, sys);
  return std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());
}

inline double mean_loss(const NetParams& params, const std::vector<SignalRecord>& recs, const NetConfig& cfg,
                        const AbelSystem& sys, const Constraint& C) {
  double acc = 0.0;
  for (const auto& r : recs) acc += mse_loss(run_network(params, r.b0, cfg, sys, C).coeffs, r.x_true.coeffs);
  return recs.empty() ? 0.0 : acc / static_cast<double>(recs.size());
}

// ---------------------------------------------------------------------------
// training

struct TrainConfig {
  int epochs = 30;
  double learning_rate = 1e-3;
  int batch_size = 1;
  std::uint64_t seed = 1;
  AdamConfig adam;
  InitConfig init;
  bool certify_each_epoch = true;
};

struct EpochReport {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lipschitz_case1 = std::numeric_limits<double>::quiet_NaN();
  double lipschitz_case2 = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
};

struct TrainResult {
  NetParams params;          // best validation loss (initial params included)
  NetParams initial;
  std::vector<EpochReport> reports;  // epoch 0 (initial params) through epochs
  int best_epoch = 0;        // 0 means the initial parameters won
  double tau_reference_ratio = 1.0;
};

inline TrainResult train(const std::vector<SignalRecord>& train_set, const std::vector<SignalRecord>& val_set,
                         const TrainConfig& tc, const NetConfig& cfg, const AbelSystem& sys,
                         const NetParams* init = nullptr) {
  cfg.validate(sys.K());
  require(tc.epochs >= 0, ErrorKind::InvalidArgument, "epochs must be >= 0");
  require(tc.learning_rate > 0.0, ErrorKind::InvalidArgument, "learning rate must be > 0");
  require(tc.batch_size >= 1, ErrorKind::InvalidArgument, "batch size must be >= 1");
  require(!train_set.empty(), ErrorKind::InvalidArgument, "training set is empty");
  const Constraint C = cfg.constraint.materialize(sys.grid());

  TrainResult res;
  res.tau_reference_ratio = reference_ratio(train_set, cfg, sys);
  res.initial = init ? *init : initialize_params(tc.init, train_set, cfg, sys, res.tau_reference_ratio);
  res.params = res.initial;
  const std::vector<SignalRecord>& val = val_set.empty() ? train_set : val_set;

  // row 0 scores the initial parameters
  auto finish_report = [&](EpochReport& rep, const NetParams& p) {
    rep.val_loss = mean_loss(p, val, cfg, sys, C);
    require(std::isfinite(rep.val_loss), ErrorKind::Numerical, "non-finite validation loss");
    if (tc.certify_each_epoch && cfg.m >= 2) {
      const Certificate cert = certify(LayerSpectra::from_network(p, cfg, sys, res.tau_reference_ratio), {});
      rep.lipschitz_case1 = cert.lipschitz_case(InitCase::Zero);
      rep.lipschitz_case2 = cert.lipschitz_case(InitCase::Data);
    }
  };
  {
    const auto t0 = std::chrono::steady_clock::now();
    EpochReport rep;
    rep.train_loss = mean_loss(res.initial, train_set, cfg, sys, C);
    finish_report(rep, res.initial);
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.reports.push_back(rep);
  }
  if (tc.epochs == 0) return res;

  NetParams p = res.initial;
  AdamState st;
  AdamConfig ac = tc.adam;
  ac.lr = tc.learning_rate;
  double best_val = res.reports.front().val_loss;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(mix_seed(tc.seed, 17, 0));

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_acc = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
      Gradients g = Gradients::zeros(cfg.m);
      for (std::size_t k = start; k < stop; ++k) {
        const SignalRecord& r = train_set[order[k]];
        const ForwardResult fr = forward(initial_iterate(r.b0, cfg), r.b0, p, cfg, sys, C);
        const double loss = mse_loss(fr.x.coeffs, r.x_true.coeffs);
        const Gradients gk = backward(fr.trace, r.x_true.coeffs, p, cfg, sys);
        require(std::isfinite(loss) && gk.finite(), ErrorKind::Numerical,
                "non-finite loss or gradient at training sample " + std::to_string(order[k]));
        loss_acc += loss;
        g += gk;
      }
      g *= 1.0 / static_cast<double>(stop - start);
      adam_step(p, g, st, ac);
      require(p.finite(), ErrorKind::Numerical, "non-finite parameters after sample " + std::to_string(order[start]));
    }
    EpochReport rep;
    rep.epoch = epoch;
    rep.train_loss = loss_acc / static_cast<double>(order.size());
    finish_report(rep, p);
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (rep.val_loss < best_val) {
      best_val = rep.val_loss;
      res.params = p;
      res.best_epoch = epoch;
    }
    res.reports.push_back(rep);
  }
  return res;
}

inline void write_metrics_csv(const std::vector<EpochReport>& reps, const std::string& path) {
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorKind::Io, "cannot open '" + path + "' for writing");
  os << "epoch,train_loss,val_loss,lipschitz_case1,lipschitz_case2,seconds\n";
  for (const auto& r : reps)
    os << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.val_loss) << ','
       << format_double(r.lipschitz_case1) << ',' << format_double(r.lipschitz_case2) << ',' << r.seconds << '\n';
  require(static_cast<bool>(os), ErrorKind::Io, "write failed for '" + path + "'");
}

}  // namespace abelnet
