// Copyright 2026 The SaLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "salora/error.hpp"
#include "salora/linalg.hpp"
#include "salora/probe.hpp"
#include "salora/trainer.hpp"

namespace {

using salora::Matrix;

salora::WorldParams small_params() {
  salora::WorldParams p;
  p.width = 12;
  p.layers = 2;
  p.planted_rank = 3;
  p.n_benign = 96;
  p.n_protected = 24;
  return p;
}

void expect_same_world(const salora::SyntheticWorld& a, const salora::SyntheticWorld& b) {
  ASSERT_EQ(a.model.layers.size(), b.model.layers.size());
  for (std::size_t l = 0; l < a.model.layers.size(); ++l) {
    EXPECT_EQ(a.model.layers[l].weight, b.model.layers[l].weight);
    EXPECT_EQ(a.planted_subspace[l], b.planted_subspace[l]);
    EXPECT_EQ(a.planted_alpha[l], b.planted_alpha[l]);
  }
  EXPECT_EQ(a.benign_inputs, b.benign_inputs);
  EXPECT_EQ(a.benign_targets, b.benign_targets);
  EXPECT_EQ(a.protected_inputs, b.protected_inputs);
  EXPECT_EQ(a.gamma, b.gamma);
}

TEST(World, SameSeedIsBitIdentical) {
  expect_same_world(salora::build_world(small_params(), 5), salora::build_world(small_params(), 5));
  EXPECT_NE(salora::build_world(small_params(), 5).benign_inputs,
            salora::build_world(small_params(), 6).benign_inputs);
}

TEST(World, ShapesAndPlantedOrthonormality) {
  const auto w = salora::build_world(small_params(), 1);
  EXPECT_EQ(w.benign_inputs.rows(), 12u);
  EXPECT_EQ(w.benign_inputs.cols(), 96u);
  EXPECT_EQ(w.benign_targets.cols(), 96u);
  EXPECT_EQ(w.protected_inputs.cols(), 24u);
  for (const Matrix& v : w.planted_subspace) {
    ASSERT_EQ(v.cols(), 3u);
    EXPECT_LT(salora::frobenius_norm(salora::matmul(salora::transpose(v), v) - Matrix::identity(3)),
              1e-10);
  }
}

TEST(World, GammaMatchesDirectRecomputation) {
  const auto w = salora::build_world(small_params(), 2);
  // Layer inputs on the protected set, recomputed scalar by scalar.
  Matrix h = w.protected_inputs;
  for (std::size_t l = 0; l < w.model.layers.size(); ++l) {
    const Matrix& v = w.planted_subspace[l];
    Matrix ws(v.rows(), v.rows());
    for (std::size_t i = 0; i < v.rows(); ++i)
      for (std::size_t j = 0; j < v.rows(); ++j)
        for (std::size_t k = 0; k < v.cols(); ++k) ws(i, j) += v(i, k) * w.planted_alpha[l][k] * v(j, k);
    const Matrix a = oracle::naive_matmul(ws, h);
    double gamma = 1e300;
    for (std::size_t n = 0; n < a.cols(); ++n) {
      double s = 0.0;
      for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, n) * a(i, n);
      gamma = std::min(gamma, std::sqrt(s));
    }
    EXPECT_GT(w.gamma[l], 0.0);
    EXPECT_NEAR(w.gamma[l], gamma, 1e-12 * (1.0 + gamma));
    EXPECT_LT(salora::max_abs_diff(w.planted_weight(l), ws), 1e-14);
    Matrix y = oracle::naive_matmul(w.model.layers[l].weight, h);
    for (double& x : y.data()) x = std::tanh(x);
    h = y;
  }
}

TEST(World, ProtectedInputsActivatePlantedRegion) {
  const auto w = salora::build_world(salora::WorldParams{}, 3);
  const Matrix a = salora::matmul(w.planted_weight(0), w.protected_inputs);
  for (std::size_t n = 0; n < a.cols(); ++n) {
    EXPECT_GE(salora::frobenius_norm(salora::column_block(a, n, 1)), w.gamma[0]);
  }
  // Stronger along the planted directions than benign inputs on average.
  const Matrix b = salora::matmul(w.planted_weight(0), w.benign_inputs);
  EXPECT_GT(salora::frobenius_norm(a) / std::sqrt(64.0), salora::frobenius_norm(b) / std::sqrt(512.0));
}

TEST(World, InfeasibleDimensions) {
  auto p = small_params();
  p.planted_rank = 12;
  EXPECT_THROW(salora::build_world(p, 0), salora::ConfigError);
  p = small_params();
  p.teacher_task_rank = 10;
  EXPECT_THROW(salora::build_world(p, 0), salora::ConfigError);
  p = small_params();
  p.n_protected = 0;
  EXPECT_THROW(salora::build_world(p, 0), salora::ConfigError);
}

TEST(World, NullWorldProbesAtChance) {
  auto p = salora::WorldParams{};
  p.planted_rank = 0;
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto w = salora::build_world(p, seed);
    EXPECT_EQ(w.gamma, std::vector<double>(3, 0.0));
    const auto ds = salora::probe_datasets(w, w.model);
    for (const auto& d : ds) {
      // Held-out evaluation: train on even columns, test on odd ones.
      salora::ProbeDataset train, test;
      std::vector<std::size_t> even, odd;
      for (std::size_t j = 0; j < d.labels.size(); ++j) (j % 2 ? odd : even).push_back(j);
      train.features = salora::gather_columns(d.features, even);
      test.features = salora::gather_columns(d.features, odd);
      for (auto j : even) train.labels.push_back(d.labels[j]);
      for (auto j : odd) test.labels.push_back(d.labels[j]);
      total += salora::probe_accuracy(salora::train_probe(train), test);
    }
  }
  const double mean = total / 15.0;
  EXPECT_GT(mean, 0.35);
  EXPECT_LT(mean, 0.65);
}

TEST(World, PlantedWorldProbesWell) {
  const auto w = salora::build_world(salora::WorldParams{}, 0);
  for (const auto& d : salora::probe_datasets(w, w.model)) {
    EXPECT_GT(salora::probe_accuracy(salora::train_probe(d), d), 0.9);
  }
}

TEST(Probe, SeparatedOneDimensional) {
  salora::ProbeDataset d{Matrix::from_rows({{-1, -1, -1, 1, 1, 1}}), {0, 0, 0, 1, 1, 1}};
  EXPECT_EQ(salora::probe_accuracy(salora::train_probe(d), d), 1.0);
}

TEST(Probe, IndependentLabelsStayNearChance) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 gen(seed);
    salora::ProbeDataset d;
    d.features = oracle::random_gaussian(2, 200, gen);
    for (int i = 0; i < 200; ++i) d.labels.push_back(static_cast<int>(gen() % 2));
    const double acc = salora::probe_accuracy(salora::train_probe(d), d);
    EXPECT_GE(acc, 0.35) << seed;
    EXPECT_LE(acc, 0.65) << seed;
  }
}

TEST(Probe, ZeroIterationsGivesZeroProbe) {
  salora::ProbeDataset d{Matrix::from_rows({{1, 2, 3, 4, 5}}), {1, 1, 1, 0, 0}};
  const auto p = salora::train_probe(d, {0, 0.5, 1e-4});
  EXPECT_EQ(p.weight, Matrix(1, 1));
  EXPECT_EQ(p.bias, 0.0);
  EXPECT_DOUBLE_EQ(salora::probe_accuracy(p, d), 0.6);  // class 1 is the majority here
}

TEST(Probe, SingleClassIsValidationError) {
  salora::ProbeDataset d{Matrix::from_rows({{1, 2}}), {1, 1}};
  EXPECT_THROW(salora::train_probe(d), salora::ValidationError);
  d.labels = {0, 2};
  EXPECT_THROW(salora::train_probe(d), salora::ValidationError);
}

TEST(Probe, DeterministicBits) {
  std::mt19937_64 gen(4);
  salora::ProbeDataset d;
  d.features = oracle::random_gaussian(5, 40, gen);
  for (int i = 0; i < 40; ++i) d.labels.push_back(i % 3 == 0);
  const auto a = salora::train_probe(d);
  const auto b = salora::train_probe(d);
  EXPECT_EQ(a.weight, b.weight);
  EXPECT_EQ(a.bias, b.bias);
}

TEST(ProbeAccuracy, ExactInvertedAndEmpty) {
  salora::ProbeDataset d{Matrix::from_rows({{-1, 1, 1, -1}}), {0, 1, 1, 0}};
  const salora::LinearProbe exact{Matrix::from_rows({{1}}), 0.0};
  EXPECT_EQ(salora::probe_accuracy(exact, d), 1.0);

  std::mt19937_64 gen(9);
  salora::ProbeDataset r;
  r.features = oracle::random_gaussian(3, 30, gen);
  for (int i = 0; i < 30; ++i) r.labels.push_back(static_cast<int>(gen() % 2));
  const salora::LinearProbe p{oracle::random_gaussian(1, 3, gen), 0.1};
  const salora::LinearProbe inv{-1.0 * p.weight, -p.bias};
  EXPECT_DOUBLE_EQ(salora::probe_accuracy(inv, r), 1.0 - salora::probe_accuracy(p, r));

  const salora::LinearProbe empty{Matrix(1, 1), 0.0};
  EXPECT_EQ(salora::probe_accuracy(empty, d), 0.5);
  EXPECT_THROW(salora::probe_accuracy(salora::LinearProbe{Matrix(1, 2), 0.0}, d),
               salora::ShapeError);
}

TEST(Drift, IdenticalModelsAreAllZero) {
  const auto w = salora::build_world(small_params(), 7);
  for (const auto& row : salora::drift_report(w, w.model, w.model)) {
    EXPECT_EQ(row.acc_before, row.acc_after);
    EXPECT_EQ(row.output_drift, 0.0);
    EXPECT_EQ(row.subspace_perturbation, 0.0);
  }
}

TEST(Drift, ArchitectureMismatch) {
  const auto w = salora::build_world(small_params(), 7);
  auto other = w.model;
  other.layers.pop_back();
  EXPECT_THROW(salora::drift_report(w, w.model, other), salora::ConfigError);
}

TEST(Drift, SaloraOutputDeltaVanishesInsideSafetySpan) {
  auto p = small_params();
  p.n_protected = 3;  // W X_h has rank 3, so U_C (r_s = 4, clamped) spans it exactly
  const auto w = salora::build_world(p, 11);
  const auto ctx = salora::capture_contexts(w.model, w.protected_inputs, w.benign_inputs, 4, 2);
  salora::TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.epochs = 3;
  const auto r = salora::fine_tune(w.model, {w.benign_inputs, w.benign_targets},
                                   {salora::Method::kSaLoRA, 2, {}, 1}, cfg, &ctx);
  const auto before = salora::forward(w.model, w.protected_inputs, true);
  const auto after = salora::forward(r.model, w.protected_inputs, true);
  for (std::size_t l = 0; l < r.model.layers.size(); ++l) {
    const Matrix& uc = *r.model.layers[l].adapter->safety_basis;
    EXPECT_EQ(uc.cols(), 3u);
    const Matrix dw = r.model.layers[l].effective_weight() - w.model.layers[l].weight;
    EXPECT_GT(salora::frobenius_norm(dw), 1e-4);
    EXPECT_LT(salora::frobenius_norm(salora::matmul(salora::transpose(uc), salora::matmul(dw, ctx.safety[l].x_h))), 1e-8);
  }
  const Matrix uc0 = *r.model.layers[0].adapter->safety_basis;
  EXPECT_LT(salora::frobenius_norm(salora::matmul(salora::transpose(uc0),
                                                  after.trace->outputs[0] - before.trace->outputs[0])),
            1e-8);
}

TEST(Drift, LoraDropsMoreThanSalora) {
  const auto w = salora::build_world(salora::WorldParams{}, 0);
  const auto ctx = salora::capture_contexts(w.model, w.protected_inputs, w.benign_inputs, 4, 4);
  salora::TrainConfig cfg;
  cfg.epochs = 50;
  const salora::Dataset data{w.benign_inputs, w.benign_targets};
  const auto lora = salora::fine_tune(w.model, data, {salora::Method::kLoRA, 4, {}, 1}, cfg, nullptr);
  const auto sal = salora::fine_tune(w.model, data, {salora::Method::kSaLoRA, 4, {}, 1}, cfg, &ctx);
  const double lora_drop = salora::mean_probe_drop(salora::drift_report(w, w.model, lora.model));
  const double sal_drop = salora::mean_probe_drop(salora::drift_report(w, w.model, sal.model));
  EXPECT_GT(lora_drop, sal_drop);
  EXPECT_LT(sal_drop, 0.05);
}

TEST(DriftCsv, ColumnContract) {
  std::ostringstream out;
  salora::write_drift_csv(out, {{0, 1.0, 0.5, 0.25, 0.125}});
  EXPECT_EQ(out.str(),
            "layer,acc_before,acc_after,output_drift,subspace_perturbation\n0,1,0.5,0.25,0.125\n");
}

TEST(Prop1, ZeroGradientIsVacuous) {
  const auto r = salora::proposition1_instance(
      {Matrix::identity(3), Matrix::identity(3), Matrix(3, 3), 1.0});
  EXPECT_EQ(r.lhs, 0.0);
  EXPECT_EQ(r.rhs, 0.0);
  EXPECT_TRUE(r.vacuous);
}

TEST(Prop1, IdentityRegionOrthonormalInputs) {
  std::mt19937_64 gen(12);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix x = oracle::random_orthonormal(6, 4, gen);
    const Matrix g = oracle::random_gaussian(4, 4, gen);
    // Coordinate projection onto the first 4 axes, so out = n.
    Matrix ws(4, 6);
    for (std::size_t i = 0; i < 4; ++i) ws(i, i) = 1.0;
    const double gamma = 1.0;  // min column norm of orthonormal x
    const auto r = salora::proposition1_instance({ws, x, g, gamma});
    const double direct = salora::frobenius_norm(salora::matmul(ws, salora::matmul(x, salora::transpose(g))));
    EXPECT_NEAR(r.lhs, direct, 1e-12);
    EXPECT_NEAR(r.sigma_min, oracle::gram_singular_values(g).back(), 1e-9);
    EXPECT_FALSE(r.vacuous);
    EXPECT_TRUE(r.pass);
    EXPECT_GE(r.lhs, r.rhs);
  }
}

TEST(Prop1, FiftyRandomInstancesAgainstDenseOracle) {
  std::mt19937_64 gen(13);
  int checked = 0;
  while (checked < 50) {
    const std::size_t d = 4 + gen() % 6, n = 1 + gen() % d, k = 1 + gen() % (d - 1);
    const Matrix v = oracle::random_orthonormal(d, k, gen);
    Matrix ws(d, d);
    for (std::size_t c = 0; c < k; ++c) {
      const double alpha = 0.5 + static_cast<double>(gen() % 100) / 50.0;
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) ws(i, j) += alpha * v(i, c) * v(j, c);
    }
    const Matrix protected_x = oracle::random_gaussian(d, 8, gen);
    double gamma = 1e300;
    for (std::size_t j = 0; j < 8; ++j) {
      gamma = std::min(gamma, oracle::frob(oracle::naive_matmul(ws, salora::column_block(protected_x, j, 1))));
    }
    const Matrix x = oracle::random_gaussian(d, n, gen);
    const Matrix g = oracle::random_gaussian(d, n, gen);
    if (!(oracle::frob(oracle::naive_matmul(ws, x)) > gamma)) continue;
    if (!(oracle::gram_singular_values(g).back() > 0)) continue;
    const auto r = salora::proposition1_instance({ws, x, g, gamma});
    EXPECT_FALSE(r.vacuous);
    EXPECT_NEAR(r.lhs, oracle::prop1_lhs(ws, x, g), 1e-12 * (1.0 + r.lhs));
    EXPECT_GE(r.lhs, r.rhs - 1e-12);
    EXPECT_TRUE(r.pass);
    ++checked;
  }
}

TEST(Prop1, MoreSamplesThanOutputsIsVacuous) {
  std::mt19937_64 gen(14);
  const auto r = salora::proposition1_instance({Matrix::identity(3), oracle::random_gaussian(3, 5, gen),
                                                oracle::random_gaussian(3, 5, gen), 0.1});
  EXPECT_EQ(r.sigma_min, 0.0);
  EXPECT_TRUE(r.vacuous);
}

TEST(Prop1, WorldCheckPassesOnBenignBatch) {
  const auto w = salora::build_world(salora::WorldParams{}, 4);
  const Matrix x = salora::column_block(w.benign_inputs, 0, 16);
  const Matrix y = salora::column_block(w.benign_targets, 0, 16);
  const Matrix g =
      salora::evaluate_loss(salora::LossKind::kMse, salora::forward(w.model, x).output, y).output_grad;
  const auto rows = salora::proposition1_check(w, w.model, x, g);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    EXPECT_FALSE(r.vacuous);
    EXPECT_TRUE(r.pass);
  }
}

TEST(Prop1, MissingPlantedDataIsConfigError) {
  auto w = salora::build_world(small_params(), 1);
  w.planted_subspace.clear();
  EXPECT_THROW(salora::proposition1_check(w, w.model, Matrix(12, 2), Matrix(12, 2)),
               salora::ConfigError);
}

TEST(Prop1Csv, ColumnContract) {
  std::ostringstream out;
  salora::Prop1Result r;
  r.lhs = 2.0;
  r.rhs = 1.5;
  salora::write_prop1_csv(out, {r});
  EXPECT_EQ(out.str(), "instance,lhs,rhs,vacuous,pass\n0,2,1.5,0,1\n");
}

}  // namespace
