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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "abelnet/datagen.hpp"

using namespace abelnet;
namespace fs = std::filesystem;

namespace {

const AbelSystem& sys500() {
  static const AbelSystem s = AbelSystem::build(1.0, 1.0, 500, 50);
  return s;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("abelnet_datagen_" + name);
  fs::create_directories(d);
  return d;
}

// Window-21 weights from the normal equations with integer offsets, in long
// double; independent of the scaled QR used by the library.
Eigen::VectorXd sg_center_oracle(int window, int order) {
  const int half = window / 2;
  using MatL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  MatL A(window, order + 1);
  for (int r = 0; r < window; ++r)
    for (int c = 0; c <= order; ++c) A(r, c) = std::pow(static_cast<long double>(r - half), c);
  const MatL AtA = A.transpose() * A;
  const MatL W = AtA.fullPivLu().solve(A.transpose());  // (A^T A)^{-1} A^T
  return W.row(0).transpose().cast<double>();            // value at offset 0
}

}  // namespace

TEST(SavGol, ReproducesQuinticPolynomials) {
  const int n = 120;
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / (n - 1);
    v(i) = 0.3 - 1.2 * t + 2.0 * t * t + 0.7 * std::pow(t, 3) - 1.1 * std::pow(t, 4) + 0.4 * std::pow(t, 5);
  }
  EXPECT_LE((savgol_smooth(v) - v).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(SavGol, ConstantIsFixed) {
  const Eigen::VectorXd v = Eigen::VectorXd::Constant(60, 0.8125);
  EXPECT_LE((savgol_smooth(v) - v).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(SavGol, CenterWeightsMatchNormalEquations) {
  const Eigen::VectorXd w = savgol_weights(21, 5, 10);
  const Eigen::VectorXd o = sg_center_oracle(21, 5);
  EXPECT_LE((w - o).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_NEAR(w.sum(), 1.0, 1e-14);
  for (int k = 0; k < 10; ++k) EXPECT_NEAR(w(k), w(20 - k), 1e-14);
}

TEST(SavGol, NoisyRampInteriorIsConvolution) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 0.05);
  const int n = 80;
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = 0.01 * i + nd(rng);
  const Eigen::VectorXd s = savgol_smooth(v);
  const Eigen::VectorXd o = sg_center_oracle(21, 5);
  for (int i = 10; i < n - 10; ++i) EXPECT_NEAR(s(i), o.dot(v.segment(i - 10, 21)), 1e-13);
  // ends: polynomial fit on the boundary window, evaluated at the end offsets
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd wi = savgol_weights(21, 5, i);
    EXPECT_NEAR(s(i), wi.dot(v.head(21)), 1e-13);
  }
}

TEST(SavGol, RejectsBadArguments) {
  const Eigen::VectorXd v = Eigen::VectorXd::Ones(30);
  EXPECT_THROW(savgol_smooth(v, 20, 5), Error);
  EXPECT_THROW(savgol_smooth(v, 5, 5), Error);
  EXPECT_THROW(savgol_smooth(Eigen::VectorXd::Ones(15), 21, 5), Error);
}

TEST(Raw, NormalizedPositiveAndDeterministic) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    BumpMixture mix;
    const Eigen::VectorXd x = generate_raw(seed, 300, &mix);
    EXPECT_GE(x.minCoeff(), 0.0);
    EXPECT_EQ(x.maxCoeff(), 1.0);
    EXPECT_EQ(x, generate_raw(seed, 300));
    for (int c = 0; c < mix.components; ++c) {
      EXPECT_GT(mix.centers[c], 0.1);
      EXPECT_LT(mix.centers[c], 0.9);
      EXPECT_GE(mix.widths[c], 0.02);
      EXPECT_LT(mix.widths[c], 0.2);
      EXPECT_GE(mix.heights[c], 0.2);
      EXPECT_LT(mix.heights[c], 1.0);
    }
  }
  EXPECT_NE(generate_raw(1, 300), generate_raw(2, 300));
  EXPECT_THROW(generate_raw(1, 41), Error);
}

TEST(Raw, ComponentCountsCoverTwoToFour) {
  std::set<int> seen;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    BumpMixture mix;
    generate_raw(mix_seed(9, 0, seed), 42, &mix);
    seen.insert(mix.components);
  }
  EXPECT_EQ(seen, (std::set<int>{2, 3, 4}));
}

TEST(Regularize, VanishesAtRightEnd) {
  const AbelSystem& sys = sys500();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Eigen::VectorXd x = to_elt(regularize_signal(generate_raw(seed, 500), sys), sys).coeffs;
    EXPECT_LE(std::abs(x(499)), 1e-2 * x.cwiseAbs().maxCoeff()) << "seed " << seed;
  }
}

TEST(Regularize, EigenvectorPassesThrough) {
  const AbelSystem& sys = sys500();
  for (int k : {0, 1, 2}) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(50);
    e(k) = 1.0;
    const SpectralSignal out = regularize_signal(to_elt(SpectralSignal(e), sys).coeffs, sys);
    EXPECT_LE((out.coeffs - e).norm(), 0.05) << "k " << k;
  }
}

TEST(Regularize, SecondPassNearlyInvariant) {
  const AbelSystem& sys = sys500();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SpectralSignal once = regularize_signal(generate_raw(seed, 500), sys);
    const SpectralSignal twice = regularize_signal(to_elt(once, sys).coeffs, sys);
    EXPECT_LE((twice.coeffs - once.coeffs).norm(), 0.02 * once.coeffs.norm()) << "seed " << seed;
  }
}

TEST(Dataset, CountsAndRecordInvariants) {
  const AbelSystem& sys = sys500();
  DatasetSpec spec;
  const Dataset ds = make_dataset(spec, sys);
  EXPECT_EQ(ds.train.size(), 400u);
  EXPECT_EQ(ds.val.size(), 200u);
  for (const auto* part : {&ds.train, &ds.val})
    for (const auto& r : *part) {
      EXPECT_LE((r.x_elt.coeffs - to_elt(r.x_true, sys).coeffs).cwiseAbs().maxCoeff(), 1e-10);
      const ElementSignal y_clean = apply_operator(r.x_elt, sys);
      EXPECT_NEAR(r.delta, 0.05 * h_norm(y_clean.coeffs, sys.h()), 1e-12);
      EXPECT_NEAR(h_norm(r.y_noisy.coeffs - y_clean.coeffs, sys.h()), r.delta, 1e-12);
      // span residual of the rendering
      const Eigen::VectorXd back = to_elt(to_eigen(r.x_elt, sys), sys).coeffs;
      EXPECT_LE((back - r.x_elt.coeffs).norm() / r.x_elt.coeffs.norm(), 1e-10);
      EXPECT_FALSE(r.provenance.empty());
    }
  // disjoint streams
  std::set<double> train_keys;
  for (const auto& r : ds.train) train_keys.insert(r.x_true.coeffs(0));
  for (const auto& r : ds.val) EXPECT_EQ(train_keys.count(r.x_true.coeffs(0)), 0u);
}

TEST(Dataset, NoiselessHasZeroDelta) {
  DatasetSpec spec;
  spec.n_train = 10;
  spec.n_val = 5;
  spec.noise_frac = 0.0;
  const Dataset ds = make_dataset(spec, sys500());
  for (const auto& r : ds.train) {
    EXPECT_EQ(r.delta, 0.0);
    EXPECT_EQ(r.y_noisy.coeffs, apply_operator(r.x_elt, sys500()).coeffs);
  }
}

TEST(Dataset, SerializationDeterministicAndExact) {
  const AbelSystem& sys = sys500();
  DatasetSpec spec;
  spec.n_train = 12;
  spec.n_val = 6;
  spec.seed = 77;
  const fs::path dir = scratch_dir("csv");
  const std::string p1 = (dir / "a.csv").string(), p2 = (dir / "b.csv").string();
  write_dataset_csv(make_dataset(spec, sys), sys, p1);
  write_dataset_csv(make_dataset(spec, sys), sys, p2);
  EXPECT_EQ(slurp(p1), slurp(p2));

  const Dataset orig = make_dataset(spec, sys);
  const Dataset back = read_dataset_csv(p1, sys);
  ASSERT_EQ(back.train.size(), 12u);
  ASSERT_EQ(back.val.size(), 6u);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(back.train[i].x_true.coeffs, orig.train[i].x_true.coeffs);
    EXPECT_EQ(back.train[i].y_noisy.coeffs, orig.train[i].y_noisy.coeffs);
    EXPECT_EQ(back.train[i].delta, orig.train[i].delta);
    EXPECT_EQ(back.train[i].b0.coeffs, orig.train[i].b0.coeffs);
  }
  EXPECT_EQ(back.spec.seed, 77u);
  // a different operator rejects the file
  const AbelSystem other = AbelSystem::build(1.0, 1.0, 500, 40);
  EXPECT_THROW(read_dataset_csv(p1, other), Error);
  fs::remove_all(dir);
}

TEST(Dataset, CsvIngestion) {
  const AbelSystem& sys = sys500();
  const fs::path dir = scratch_dir("ingest");
  const std::string path = (dir / "raw.csv").string();
  {
    std::ofstream os(path);
    os << "# three raw signals\n";
    for (std::uint64_t s = 0; s < 3; ++s) {
      const Eigen::VectorXd x = generate_raw(s, 500);
      for (int i = 0; i < 500; ++i) os << (i ? "," : "") << format_double(x(i));
      os << "\n";
    }
  }
  DatasetSpec spec;
  spec.source = DataSource::CsvIngest;
  spec.ingest_path = path;
  spec.n_train = 2;
  const Dataset ds = make_dataset(spec, sys);
  ASSERT_EQ(ds.train.size(), 2u);
  ASSERT_EQ(ds.val.size(), 1u);
  EXPECT_LE((ds.val[0].x_true.coeffs - regularize_signal(generate_raw(2, 500), sys).coeffs).norm(), 1e-15);

  {
    std::ofstream os(path);
    os << "1,2,3\n";
  }
  EXPECT_THROW(make_dataset(spec, sys), Error);
  spec.ingest_path = (dir / "missing.csv").string();
  try {
    make_dataset(spec, sys);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
  }
  fs::remove_all(dir);
}

TEST(Dataset, RejectsInvalidSpecs) {
  DatasetSpec spec;
  spec.n_train = -1;
  EXPECT_THROW(make_dataset(spec, sys500()), Error);
  spec.n_train = 1;
  spec.noise_frac = -0.1;
  EXPECT_THROW(make_dataset(spec, sys500()), Error);
}

// Mean over the corpus of |x_10| / |x_0|.
TEST(Dataset, EigenCoefficientDecay) {
  DatasetSpec spec;
  spec.n_train = 200;
  spec.n_val = 0;
  const Dataset ds = make_dataset(spec, sys500());
  const double decay = coefficient_decay(ds.train, 10);
  EXPECT_LE(decay, 1e-2) << "mean |x_10|/|x_0| = " << decay;
}
