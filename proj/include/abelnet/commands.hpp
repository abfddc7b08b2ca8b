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

// Command implementations behind the `abelnet` executable. Each command takes
// a resolved RunConfig, writes its artifacts plus a config echo into
// report_dir, and logs a short summary to `log`.

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "abelnet/abel_core.hpp"
#include "abelnet/baselines.hpp"
#include "abelnet/config.hpp"
#include "abelnet/datagen.hpp"
#include "abelnet/error.hpp"
#include "abelnet/robustness_cert.hpp"
#include "abelnet/trainer.hpp"
#include "abelnet/unrolled_net.hpp"

namespace abelnet::cli {

namespace fs = std::filesystem;

inline void require_input(const std::string& path, const std::string& what) {
  require(!path.empty(), ErrorKind::Config, what + " path is empty");
  require(fs::is_regular_file(path), ErrorKind::Io, what + " '" + path + "' does not exist");
}

inline void require_output(const std::string& path, const std::string& what) {
  require(!path.empty(), ErrorKind::Config, what + " path is empty");
  const fs::path parent = fs::path(path).parent_path();
  require(parent.empty() || fs::is_directory(parent), ErrorKind::Io,
          what + " directory '" + parent.string() + "' does not exist");
}

inline fs::path prepare_report_dir(const RunConfig& cfg) {
  const fs::path dir = cfg.get("report_dir");
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(fs::is_directory(dir), ErrorKind::Io, "cannot create report directory '" + dir.string() + "'");
  return dir;
}

inline void echo_config(const RunConfig& cfg, const fs::path& dir, const std::string& command) {
  cfg.save((dir / (command + ".resolved.cfg")).string());
}

inline AbelSystem acquire_system(const RunConfig& cfg, double a, std::ostream& log) {
  const std::string path = cfg.get("system_path");
  const double r = cfg.num("r");
  if (!path.empty() && fs::is_regular_file(path)) {
    AbelSystem s = AbelSystem::load(path);
    if (s.a() == a && s.r() == r && s.N() == cfg.N() && s.K() == cfg.K()) {
      s.set_source(cfg.eigen_source());
      return s;
    }
    log << "operator cache '" << path << "' does not match; rebuilding\n";
  }
  AbelSystem s = AbelSystem::build(a, r, cfg.N(), cfg.K(), cfg.eigen_source());
  if (!path.empty()) s.save(path);
  return s;
}

inline std::string output_or(const RunConfig& cfg, const fs::path& fallback) {
  const std::string o = cfg.get("output_path");
  return o.empty() ? fallback.string() : o;
}

// ---------------------------------------------------------------------------

struct GenDataOutcome {
  std::size_t records = 0;
  double decay = 0.0;
  double mean_relative_delta = 0.0;
};

inline GenDataOutcome cmd_gen_data(const RunConfig& cfg, std::ostream& log) {
  const DatasetSpec spec = cfg.dataset_spec();
  if (spec.source == DataSource::CsvIngest) require_input(spec.ingest_path, "ingestion file");
  const std::string out = cfg.get("dataset_path");
  require_output(out, "dataset");
  const fs::path dir = prepare_report_dir(cfg);
  echo_config(cfg, dir, "gen-data");

  const AbelSystem sys = acquire_system(cfg, spec.a, log);
  const Dataset ds = make_dataset(spec, sys);
  write_dataset_csv(ds, sys, out);

  GenDataOutcome o;
  o.records = ds.size();
  std::vector<SignalRecord> all = ds.train;
  all.insert(all.end(), ds.val.begin(), ds.val.end());
  if (!all.empty() && sys.K() > 10) o.decay = coefficient_decay(all, 10);
  double acc = 0.0;
  for (const auto& r : all) {
    const double yc = h_norm(apply_operator(r.x_elt, sys).coeffs, sys.h());
    acc += yc > 0 ? r.delta / yc : 0.0;
  }
  o.mean_relative_delta = all.empty() ? 0.0 : acc / static_cast<double>(all.size());
  log << "records: " << o.records << " (train " << ds.train.size() << ", val " << ds.val.size() << ")\n"
      << "mean |x_10|/|x_0|: " << o.decay << "\n"
      << "mean realized delta / ||y||: " << o.mean_relative_delta << "\n"
      << "wrote " << out << "\n";
  return o;
}

// ---------------------------------------------------------------------------

struct TrainOutcome {
  TrainResult result;
  Checkpoint checkpoint;
  double val_error = 0.0;
};

inline TrainOutcome train_on(const RunConfig& cfg, const Dataset& ds, const AbelSystem& sys) {
  const NetConfig net = cfg.net_config();
  const TrainConfig tc = cfg.train_config();
  TrainOutcome o;
  o.result = train(ds.train, ds.val, tc, net, sys);
  o.checkpoint.system = SystemRef::of(sys);
  o.checkpoint.config = net;
  o.checkpoint.params = o.result.params;
  o.checkpoint.tau_reference_ratio = o.result.tau_reference_ratio;
  o.val_error = evaluate(o.result.params, ds.val.empty() ? ds.train : ds.val, net, sys);
  return o;
}

inline TrainOutcome cmd_train(const RunConfig& cfg, std::ostream& log) {
  const std::string data = cfg.get("dataset_path");
  const std::string ckpt = cfg.get("checkpoint_path");
  require_input(data, "dataset");
  require_output(ckpt, "checkpoint");
  const NetConfig net = cfg.net_config();
  (void)cfg.train_config();
  const fs::path dir = prepare_report_dir(cfg);
  echo_config(cfg, dir, "train");

  const AbelSystem sys = acquire_system(cfg, cfg.num("a"), log);
  const Dataset ds = read_dataset_csv(data, sys);
  TrainOutcome o = train_on(cfg, ds, sys);
  save_checkpoint(o.checkpoint, ckpt);
  const std::string metrics = (dir / "metrics.csv").string();
  write_metrics_csv(o.result.reports, metrics);
  log << "m = " << net.m << ", epochs = " << o.result.reports.size() - 1 << ", best epoch = " << o.result.best_epoch
      << "\nvalidation mean relative error: " << o.val_error << "\nwrote " << ckpt << " and " << metrics << "\n";
  return o;
}

// ---------------------------------------------------------------------------

inline LayerSpectra checkpoint_spectra(const Checkpoint& ck, double ratio, const AbelSystem* sys) {
  LayerSpectra s;
  const NetConfig& c = ck.config;
  s.lambda.resize(c.m);
  s.tau.resize(c.m);
  s.eta.resize(c.m);
  for (int n = 1; n <= c.m; ++n) {
    s.lambda(n - 1) = step_size(ck.params.c(n - 1), c);
    s.tau(n - 1) = softplus(ck.params.d(n - 1), c.softplus_beta) * ratio;
    s.eta(n - 1) = c.eta_at(n);
  }
  if (sys) {
    s.betaT = sys->betaT();
    s.betaD = sys->betaD();
  } else {
    // analytic eigenvalues need no eigendecomposition
    s.betaT.resize(ck.system.K);
    s.betaD.resize(ck.system.K);
    for (int k = 0; k < ck.system.K; ++k) {
      s.betaT(k) = analytic_beta_t(ck.system.a, k);
      s.betaD(k) = std::pow(s.betaT(k), -ck.system.r / ck.system.a);
    }
  }
  return s;
}

struct CertifyOutcome {
  Certificate certificate;
  std::string path;
};

inline CertifyOutcome cmd_certify(const RunConfig& cfg, std::ostream& log) {
  const std::string ckpt = cfg.get("checkpoint_path");
  require_input(ckpt, "checkpoint");
  const int points = static_cast<int>(cfg.integer("alpha_points"));
  require(points >= 2, ErrorKind::Config, "alpha_points must be >= 2");
  const long long rec = cfg.integer("record_index");
  if (rec >= 0) require_input(cfg.get("dataset_path"), "dataset");
  const fs::path dir = prepare_report_dir(cfg);
  const std::string out = output_or(cfg, dir / "certificate.json");
  require_output(out, "certificate");
  echo_config(cfg, dir, "certify");

  const Checkpoint ck = load_checkpoint(ckpt);
  std::unique_ptr<AbelSystem> sys;
  if (ck.system.source == EigenSource::Numeric || rec >= 0) {
    RunConfig c2 = cfg;
    c2.set("N", std::to_string(ck.system.N));
    c2.set("K", std::to_string(ck.system.K));
    c2.set("r", format_double(ck.system.r));
    c2.set("eigen_source", eigen_source_name(ck.system.source));
    sys = std::make_unique<AbelSystem>(acquire_system(c2, ck.system.a, log));
    check_compatible(ck, *sys);
  }
  double ratio = ck.tau_reference_ratio;
  if (rec >= 0) {
    const Dataset ds = read_dataset_csv(cfg.get("dataset_path"), *sys);
    const SignalRecord* found = nullptr;
    for (const auto* set : {&ds.train, &ds.val})
      for (const auto& r : *set)
        if (r.id == rec) found = &r;
    require(found != nullptr, ErrorKind::Config, "record " + std::to_string(rec) + " not in dataset");
    ratio = noise_ratio(found->b0, ck.config, *sys);
  }
  CertifyOutcome o;
  o.certificate = certify(checkpoint_spectra(ck, ratio, sys.get()), default_alpha_grid(points));
  o.path = out;
  std::ofstream os(out);
  require(static_cast<bool>(os), ErrorKind::Io, "cannot open '" + out + "' for writing");
  auto j = certificate_to_json(o.certificate);
  j["tau_ratio"] = ratio;
  os << j.dump(2) << "\n";

  const Certificate& c = o.certificate;
  const int m = c.m;
  log << "m = " << m << ", K = " << c.K << (c.leakage_is_unity ? "" : " (leakage factors differ from 1)") << "\n"
      << "lipschitz_virtual = " << c.lipschitz_virtual << "  (a_{1,m} attained at p = " << c.a[0][m - 1].index
      << ")\n";
  if (c.hat) {
    log << "lipschitz_case1 (x0 = 0)  = " << (*c.hat)[0].lipschitz
        << "  (a_hat_{1,m} attained at p = " << (*c.hat)[0].a_hat[m - 1].index << ")\n"
        << "lipschitz_case2 (x0 = b0) = " << (*c.hat)[1].lipschitz
        << "  (a_hat_{1,m} attained at p = " << (*c.hat)[1].a_hat[m - 1].index << ")\n";
  }
  log << "theta_bar_m = " << c.theta_bar << "  (a_bar_{1,m} attained at p = " << c.a_bar[0].index << ")\n"
      << "vartheta fixed-init = " << c.vartheta_fixed << ", data-init = " << c.vartheta_data << "\n";
  auto show = [&](const char* name, auto pred) {
    const auto s = smallest_alpha(c, pred);
    log << "smallest averaged alpha (" << name << "): " << (s ? format_double(*s) : std::string("none")) << "\n";
  };
  show("virtual", [](const AlphaRow& r) { return r.flag_virtual; });
  show("seminorm", [](const AlphaRow& r) { return r.flag_bar; });
  if (c.hat) {
    show("case1", [](const AlphaRow& r) { return r.flag_hat[0]; });
    show("case2", [](const AlphaRow& r) { return r.flag_hat[1]; });
  }
  log << "wrote " << out << "\n";
  return o;
}

// ---------------------------------------------------------------------------

struct LoadedModel {
  Checkpoint checkpoint;
  AbelSystem system;
};

inline LoadedModel load_model(const RunConfig& cfg, std::ostream& log) {
  LoadedModel mdl;
  mdl.checkpoint = load_checkpoint(cfg.get("checkpoint_path"));
  RunConfig c2 = cfg;
  c2.set("N", std::to_string(mdl.checkpoint.system.N));
  c2.set("K", std::to_string(mdl.checkpoint.system.K));
  c2.set("r", format_double(mdl.checkpoint.system.r));
  c2.set("eigen_source", eigen_source_name(mdl.checkpoint.system.source));
  mdl.system = acquire_system(c2, mdl.checkpoint.system.a, log);
  check_compatible(mdl.checkpoint, mdl.system);
  return mdl;
}

struct InvertOutcome {
  Eigen::VectorXd x;  // nodal values
  std::optional<double> relative_error;
  std::string path;
};

inline InvertOutcome cmd_invert(const RunConfig& cfg, std::ostream& log) {
  require_input(cfg.get("checkpoint_path"), "checkpoint");
  const std::string sig = cfg.get("signal_path");
  require_input(sig, "signal");
  const fs::path dir = prepare_report_dir(cfg);
  const std::string out = output_or(cfg, dir / "reconstruction.csv");
  require_output(out, "reconstruction");
  echo_config(cfg, dir, "invert");

  const LoadedModel mdl = load_model(cfg, log);
  const AbelSystem& sys = mdl.system;
  const long long rec = cfg.integer("record_index");
  ElementSignal y;
  std::optional<SpectralSignal> truth;
  if (rec >= 0) {
    const Dataset ds = read_dataset_csv(sig, sys);
    bool found = false;
    for (const auto* set : {&ds.train, &ds.val})
      for (const auto& r : *set)
        if (r.id == rec) {
          y = r.y_noisy;
          truth = r.x_true;
          found = true;
        }
    require(found, ErrorKind::Config, "record " + std::to_string(rec) + " not in '" + sig + "'");
  } else {
    const auto rows = read_ingest_csv(sig, sys.N());
    require(rows.size() == 1, ErrorKind::Format, "signal file must hold exactly one row of N values");
    y = ElementSignal(rows[0]);
  }
  const Constraint C = mdl.checkpoint.config.constraint.materialize(sys.grid());
  const SpectralSignal b0 = bias_from_data(y, sys);
  const SpectralSignal xe = run_network(mdl.checkpoint.params, b0, mdl.checkpoint.config, sys, C);
  InvertOutcome o;
  o.x = to_elt(xe, sys).coeffs;
  o.path = out;
  if (truth) o.relative_error = relative_error(xe.coeffs, truth->coeffs);
  std::ofstream os(out);
  require(static_cast<bool>(os), ErrorKind::Io, "cannot open '" + out + "' for writing");
  os << "t,x\n";
  for (int i = 0; i < sys.N(); ++i) os << format_double(sys.grid().nodes(i)) << ',' << format_double(o.x(i)) << '\n';
  log << "m = " << mdl.checkpoint.config.m << "\n";
  if (o.relative_error) log << "relative error: " << *o.relative_error << "\n";
  log << "wrote " << out << "\n";
  return o;
}

// ---------------------------------------------------------------------------

struct EvalOutcome {
  double network_val = 0.0;
  double network_train = 0.0;
  BaselineResult baseline{BaselineMethod::SpectralCutoff};
};

inline EvalOutcome cmd_eval(const RunConfig& cfg, std::ostream& log) {
  require_input(cfg.get("checkpoint_path"), "checkpoint");
  require_input(cfg.get("dataset_path"), "dataset");
  const fs::path dir = prepare_report_dir(cfg);
  echo_config(cfg, dir, "eval");
  const LoadedModel mdl = load_model(cfg, log);
  const Dataset ds = read_dataset_csv(cfg.get("dataset_path"), mdl.system);
  const auto& val = ds.val.empty() ? ds.train : ds.val;
  EvalOutcome o;
  o.network_val = evaluate(mdl.checkpoint.params, val, mdl.checkpoint.config, mdl.system);
  o.network_train = ds.train.empty() ? 0.0 : evaluate(mdl.checkpoint.params, ds.train, mdl.checkpoint.config, mdl.system);
  o.baseline = run_baseline(cfg.baseline_config(), val, val, mdl.system);
  log << "m = " << mdl.checkpoint.config.m << "\n"
      << "network mean relative error: validation " << o.network_val << ", train " << o.network_train << "\n"
      << baseline_name(o.baseline.method) << " (parameter " << o.baseline.parameter << "): " << o.baseline.error
      << "\n";
  return o;
}

// ---------------------------------------------------------------------------

inline std::string compare_checkpoint_name(double a, double delta) {
  return "checkpoint_a" + format_double(a) + "_delta" + format_double(delta) + ".json";
}

inline std::vector<CompareCell> cmd_compare(const RunConfig& cfg, std::ostream& log) {
  const bool with_net = cfg.flag("compare_network");
  const bool do_train = cfg.flag("compare_train");
  const std::string ckdir = cfg.get("compare_checkpoint_dir");
  if (with_net) {
    require(!ckdir.empty(), ErrorKind::Config, "compare_checkpoint_dir is required for the network row");
    if (!do_train) require(fs::is_directory(ckdir), ErrorKind::Io, "checkpoint directory '" + ckdir + "' does not exist");
    fs::create_directories(ckdir);
  }
  const auto methods = cfg.compare_methods();
  (void)cfg.dataset_spec();
  const fs::path dir = prepare_report_dir(cfg);
  const std::string out = output_or(cfg, dir / "compare.csv");
  require_output(out, "comparison table");
  echo_config(cfg, dir, "compare");

  std::map<double, std::unique_ptr<AbelSystem>> systems;
  std::map<std::pair<double, double>, std::unique_ptr<Dataset>> datasets;
  auto data = [&](double a, double delta) -> std::pair<const AbelSystem*, const Dataset*> {
    auto& sys = systems[a];
    if (!sys) {
      RunConfig c2 = cfg;
      c2.set("system_path", "");
      sys = std::make_unique<AbelSystem>(acquire_system(c2, a, log));
    }
    auto& ds = datasets[{a, delta}];
    if (!ds) {
      DatasetSpec spec = cfg.dataset_spec();
      spec.a = a;
      spec.noise_frac = delta;
      ds = std::make_unique<Dataset>(make_dataset(spec, *sys));
    }
    return {sys.get(), ds.get()};
  };
  auto network = [&](double a, double delta) -> std::optional<Checkpoint> {
    const fs::path p = fs::path(ckdir) / compare_checkpoint_name(a, delta);
    if (fs::is_regular_file(p)) return load_checkpoint(p.string());
    if (!do_train) return std::nullopt;
    RunConfig c2 = cfg;
    c2.set("a", format_double(a));
    const auto [sys, ds] = data(a, delta);
    TrainOutcome t = train_on(c2, *ds, *sys);
    save_checkpoint(t.checkpoint, p.string());
    log << "trained " << p.string() << " (validation error " << t.val_error << ")\n";
    return t.checkpoint;
  };
  const auto cells = compare(methods, with_net, data, network);
  write_compare_csv(cells, out);
  log << "m = " << cfg.integer("m") << "\n";
  for (const auto& c : cells)
    log << c.method << " a=" << c.a << " delta=" << c.delta << ": " << c.error << "\n";
  log << "wrote " << out << "\n";
  return cells;
}

}  // namespace abelnet::cli
