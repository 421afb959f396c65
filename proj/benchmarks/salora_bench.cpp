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

#include <benchmark/benchmark.h>

#include "salora/adapter.hpp"
#include "salora/linalg.hpp"
#include "salora/probe.hpp"
#include "salora/random.hpp"
#include "salora/trainer.hpp"

namespace {

using salora::Matrix;

Matrix gaussian(std::size_t r, std::size_t c, std::uint64_t seed) {
  salora::Rng rng(seed);
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = gaussian(n, n, 1), b = gaussian(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(salora::matmul(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 256)->Complexity(benchmark::oNCubed);

void BM_Svd(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = gaussian(n, n, 3);
  for (auto _ : state) benchmark::DoNotOptimize(salora::svd(a));
}
BENCHMARK(BM_Svd)->RangeMultiplier(2)->Range(8, 128);

void BM_SafetyProjector(benchmark::State& state) {
  const Matrix w = gaussian(32, 32, 4), x = gaussian(32, 64, 5);
  for (auto _ : state) benchmark::DoNotOptimize(salora::compute_safety_projector(w, {x, 4}));
}
BENCHMARK(BM_SafetyProjector);

void BM_TrainEpoch(benchmark::State& state) {
  const auto world = salora::build_world({}, 0);
  const auto method = static_cast<salora::Method>(state.range(0));
  const auto ctx = salora::capture_contexts(world.model, world.protected_inputs, world.benign_inputs, 4, 4);
  salora::TrainConfig cfg;
  const salora::Dataset data{world.benign_inputs, world.benign_targets};
  for (auto _ : state) {
    benchmark::DoNotOptimize(salora::fine_tune(world.model, data, {method, 4, {}, 1}, cfg, &ctx));
  }
  state.SetLabel(std::string(salora::method_name(method)));
}
BENCHMARK(BM_TrainEpoch)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

void BM_BuildWorld(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(salora::build_world({}, 0));
}
BENCHMARK(BM_BuildWorld)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
