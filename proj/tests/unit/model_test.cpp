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
#include <filesystem>

#include "oracles.hpp"
#include "salora/adapter.hpp"
#include "salora/checkpoint.hpp"
#include "salora/error.hpp"
#include "salora/model.hpp"

namespace {

using salora::AdapterKind;
using salora::Matrix;
using salora::ToyModel;

ToyModel random_model(std::mt19937_64& gen, const std::vector<std::size_t>& dims,
                      std::optional<AdapterKind> kind, std::size_t r = 2,
                      salora::Activation act = salora::Activation::kTanh) {
  ToyModel m;
  m.activation = act;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const Matrix w = oracle::random_gaussian(dims[l + 1], dims[l], gen, 0.6);
    salora::LinearLayer layer{w, std::nullopt};
    if (kind) {
      switch (*kind) {
        case AdapterKind::kLoRA:
          layer.adapter = salora::init_lora(dims[l + 1], dims[l], r, gen());
          break;
        case AdapterKind::kPiSSA:
          layer.adapter = salora::init_pissa(w, r);
          break;
        case AdapterKind::kSaLoRA:
          layer.adapter = salora::assemble_salora(w, {oracle::random_gaussian(dims[l], 6, gen), 2},
                                                  {oracle::random_gaussian(dims[l], 6, gen), r}, r);
          break;
      }
      // Move away from the initial point so every factor carries signal.
      layer.adapter->a = layer.adapter->a + oracle::random_gaussian(r, dims[l], gen, 0.3);
      layer.adapter->b = layer.adapter->b + oracle::random_gaussian(dims[l + 1], r, gen, 0.3);
    }
    m.layers.push_back(std::move(layer));
  }
  return m;
}

TEST(Forward, IdentityLayerPassesInputThrough) {
  ToyModel m;
  m.activation = salora::Activation::kIdentity;
  m.layers.push_back({Matrix::identity(3), std::nullopt});
  const Matrix x = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
  EXPECT_EQ(salora::forward(m, x).output, x);
}

TEST(Forward, IdentityActivationComposes) {
  std::mt19937_64 gen(1);
  ToyModel m = random_model(gen, {4, 5, 3}, std::nullopt, 2, salora::Activation::kIdentity);
  const Matrix x = oracle::random_gaussian(4, 6, gen);
  const Matrix want = oracle::naive_matmul(m.layers[1].weight, oracle::naive_matmul(m.layers[0].weight, x));
  EXPECT_LT(salora::max_abs_diff(salora::forward(m, x).output, want), 1e-12);
}

TEST(Forward, MatchesScalarReferenceForEveryKind) {
  std::mt19937_64 gen(2);
  for (auto act : {salora::Activation::kTanh, salora::Activation::kRelu,
                   salora::Activation::kIdentity}) {
    for (std::optional<AdapterKind> kind :
         {std::optional<AdapterKind>{}, std::optional{AdapterKind::kLoRA},
          std::optional{AdapterKind::kPiSSA}, std::optional{AdapterKind::kSaLoRA}}) {
      ToyModel m = random_model(gen, {5, 6, 6, 4}, kind, 2, act);
      const Matrix x = oracle::random_gaussian(5, 7, gen);
      EXPECT_LT(salora::max_abs_diff(salora::forward(m, x).output, oracle::reference_forward(m, x)),
                1e-12);
    }
  }
}

TEST(Forward, CaptureDoesNotChangeOutput) {
  std::mt19937_64 gen(3);
  ToyModel m = random_model(gen, {4, 4, 4, 2}, AdapterKind::kSaLoRA);
  const Matrix x = oracle::random_gaussian(4, 5, gen);
  const auto plain = salora::forward(m, x, false);
  const auto traced = salora::forward(m, x, true);
  EXPECT_EQ(plain.output, traced.output);
  EXPECT_FALSE(plain.trace.has_value());
  ASSERT_TRUE(traced.trace.has_value());
  EXPECT_EQ(traced.trace->inputs.size(), 3u);
  EXPECT_EQ(traced.trace->outputs.size(), 3u);
  EXPECT_EQ(traced.trace->inputs[0], x);
  EXPECT_EQ(traced.trace->outputs[2], traced.output);
}

TEST(Forward, ShapeErrors) {
  std::mt19937_64 gen(4);
  ToyModel m = random_model(gen, {4, 3}, std::nullopt);
  EXPECT_THROW(salora::forward(m, Matrix(5, 2)), salora::ShapeError);
  m.layers.push_back({Matrix(2, 4), std::nullopt});  // does not chain
  EXPECT_THROW(salora::forward(m, Matrix(4, 2)), salora::ShapeError);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 gen(5);
  ToyModel m = random_model(gen, {4, 5, 3}, AdapterKind::kLoRA);
  const Matrix x = oracle::random_gaussian(4, 6, gen);
  const auto r = salora::backward(m, x, Matrix(3, 6));
  for (const auto& g : r.adapters) {
    ASSERT_TRUE(g.has_value());
    EXPECT_EQ(salora::frobenius_norm(g->a), 0.0);
    EXPECT_EQ(salora::frobenius_norm(g->b), 0.0);
  }
}

TEST(Backward, SingleLinearLayerClosedForm) {
  std::mt19937_64 gen(6);
  ToyModel m = random_model(gen, {3, 2}, AdapterKind::kLoRA, 1, salora::Activation::kIdentity);
  const Matrix x = oracle::random_gaussian(3, 4, gen);
  const Matrix ones(2, 4, std::vector<double>(8, 1.0));  // L = sum of outputs
  const auto r = salora::backward(m, x, ones);
  const auto& slot = *m.layers[0].adapter;
  // dL/dB = 1 (A x)^T, dL/dA = B^T 1 x^T
  const Matrix ax = oracle::naive_matmul(slot.a, x);
  const Matrix want_b = oracle::naive_matmul(ones, salora::transpose(ax));
  const Matrix want_a = oracle::naive_matmul(salora::transpose(slot.b),
                                             oracle::naive_matmul(ones, salora::transpose(x)));
  EXPECT_LT(salora::max_abs_diff(r.adapters[0]->b, want_b), 1e-12);
  EXPECT_LT(salora::max_abs_diff(r.adapters[0]->a, want_a), 1e-12);
}

class GradientKinds : public ::testing::TestWithParam<AdapterKind> {};

TEST_P(GradientKinds, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    std::mt19937_64 gen(100 + seed);
    ToyModel m = random_model(gen, {5, 6, 4, 3}, GetParam());
    const Matrix x = oracle::random_gaussian(5, 4, gen);
    const Matrix y = oracle::random_gaussian(3, 4, gen);
    const Matrix out = salora::forward(m, x).output;
    Matrix upstream = out - y;
    upstream = (2.0 / static_cast<double>(out.size())) * upstream;
    const auto r = salora::backward(m, x, upstream);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      for (int which = 0; which < 2; ++which) {
        const Matrix fd = oracle::fd_gradient(m, l, which, x, y);
        const Matrix& an = which == 0 ? r.adapters[l]->a : r.adapters[l]->b;
        for (std::size_t i = 0; i < fd.size(); ++i) {
          EXPECT_LT(std::abs(an.data()[i] - fd.data()[i]) / (1e-8 + std::abs(fd.data()[i])), 1e-5)
              << "layer " << l << " factor " << which << " entry " << i;
        }
      }
    }
  }
}

INSTANTIATE_TEST_SUITE_P(AllKinds, GradientKinds,
                         ::testing::Values(AdapterKind::kLoRA, AdapterKind::kPiSSA,
                                           AdapterKind::kSaLoRA),
                         [](const auto& info) {
                           return std::string(salora::adapter_kind_name(info.param));
                         });

TEST(Backward, NoAdaptersIsConfigError) {
  std::mt19937_64 gen(7);
  ToyModel m = random_model(gen, {3, 3}, std::nullopt);
  EXPECT_THROW(salora::backward(m, Matrix(3, 1), Matrix(3, 1)), salora::ConfigError);
}

TEST(Backward, UpstreamShapeMismatch) {
  std::mt19937_64 gen(8);
  ToyModel m = random_model(gen, {3, 2}, AdapterKind::kLoRA, 1);
  EXPECT_THROW(salora::backward(m, Matrix(3, 2), Matrix(2, 3)), salora::ShapeError);
}

TEST(Backward, FrozenPerturbationKeepsGradientLayout) {
  std::mt19937_64 gen(9);
  ToyModel m = random_model(gen, {4, 4, 3}, AdapterKind::kSaLoRA);
  const Matrix x = oracle::random_gaussian(4, 3, gen);
  const Matrix g = oracle::random_gaussian(3, 3, gen);
  const auto before = salora::backward(m, x, g);
  for (auto& layer : m.layers) {
    auto& s = *layer.adapter;
    s.c = *s.c + oracle::random_gaussian(s.c->rows(), s.c->cols(), gen, 0.1);
    s.a0 = *s.a0 + oracle::random_gaussian(s.a0->rows(), s.a0->cols(), gen, 0.1);
    s.b0 = *s.b0 + oracle::random_gaussian(s.b0->rows(), s.b0->cols(), gen, 0.1);
    s.residual_w = *s.residual_w + oracle::random_gaussian(s.residual_w->rows(), s.residual_w->cols(), gen, 0.1);
  }
  const auto after = salora::backward(m, x, g);
  ASSERT_EQ(before.adapters.size(), after.adapters.size());
  for (std::size_t l = 0; l < before.adapters.size(); ++l) {
    ASSERT_EQ(before.adapters[l].has_value(), after.adapters[l].has_value());
    EXPECT_TRUE(salora::same_shape(before.adapters[l]->a, after.adapters[l]->a));
    EXPECT_TRUE(salora::same_shape(before.adapters[l]->b, after.adapters[l]->b));
  }
}

TEST(Backward, OnlyAdaptedLayersReceiveGradients) {
  std::mt19937_64 gen(10);
  ToyModel m = random_model(gen, {4, 4, 3}, AdapterKind::kLoRA);
  m.layers[0].adapter.reset();
  const auto r = salora::backward(m, oracle::random_gaussian(4, 2, gen),
                                  oracle::random_gaussian(3, 2, gen));
  EXPECT_FALSE(r.adapters[0].has_value());
  EXPECT_TRUE(r.adapters[1].has_value());
}

TEST(ModelCheckpoint, RoundTripsWeightsAndActivation) {
  std::mt19937_64 gen(11);
  ToyModel m = random_model(gen, {4, 5, 2}, std::nullopt, 2, salora::Activation::kRelu);
  const auto dir = std::filesystem::temp_directory_path() / "salora_model_ckpt_test";
  std::filesystem::remove_all(dir);
  salora::save_model(dir, m);
  const ToyModel back = salora::load_model(dir);
  EXPECT_EQ(back.activation, salora::Activation::kRelu);
  ASSERT_EQ(back.layers.size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) EXPECT_EQ(back.layers[l].weight, m.layers[l].weight);
  std::filesystem::remove_all(dir);
}

TEST(ModelCheckpoint, MissingDirectoryIsIoError) {
  EXPECT_THROW(salora::load_model("/nonexistent/salora/model"), salora::IoError);
}

}  // namespace
