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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "salora/probe.hpp"
#include "salora/trainer.hpp"

namespace salora {

/// Experiment configuration, read from a sectioned key=value file:
///
///   [experiment]  method, seed, r, r_s, r_t, layers
///   [train]       lr, batch_size, epochs, beta1, beta2, eps, weight_decay, loss
///   [world]       width, layers, planted_rank, n_benign, n_protected, ...
///   [probe]       n_benign, group, iters, lr, l2
///   [paths]       world, run
///
/// Missing keys take the defaults below; r_t defaults to r.
struct ExperimentConfig {
  Method method = Method::kSaLoRA;
  std::uint64_t seed = 0;
  std::size_t r = 4;
  std::size_t r_s = 4;
  std::size_t r_t = 4;
  std::vector<std::size_t> layers;  // adapted layers; empty = all
  TrainConfig train = default_train();
  WorldParams world;
  ProbeSetup probe;
  std::string world_dir = "world";
  std::string run_dir = "run";

  static TrainConfig default_train();

  static ExperimentConfig parse(std::string_view text);
  static ExperimentConfig load(const std::filesystem::path& path);
  /// Every key, fixed order, with section headers.
  std::string to_string() const;
  void validate() const;
};

}  // namespace salora
