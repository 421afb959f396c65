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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "salora/checkpoint.hpp"
#include "salora/config.hpp"
#include "salora/probe.hpp"
#include "salora/trainer.hpp"

namespace salora {

namespace fs = std::filesystem;

/// World directory layout:
///   manifest.txt            seed, world parameters, gamma per layer
///   model/                  pre-trained model checkpoint
///   benign_inputs.mtx, benign_targets.mtx, protected_inputs.mtx
///   planted/layer<i>_v.mtx, planted/layer<i>_alpha.mtx
void save_world(const fs::path& dir, const SyntheticWorld& world);
SyntheticWorld load_world(const fs::path& dir);

void cmd_gen_world(const ExperimentConfig& config, const fs::path& out);

struct FinetuneOutcome {
  TrainResult train;
  std::uint64_t frozen_before = 0;
  std::uint64_t frozen_after = 0;
};

/// Fine-tunes the world's model in memory; no files touched.
FinetuneOutcome finetune_world(const SyntheticWorld& world, const ExperimentConfig& config,
                               const StepObserver& observer = {});

/// Adapter checkpoint for a trained model (merged for SaLoRA).
AdapterCheckpoint checkpoint_from(const ToyModel& trained, Method method);

/// Plain model whose weights are the training-time effective weights.
ToyModel snapshot_of(const ToyModel& trained);

/// Run directory layout:
///   adapter/     adapter checkpoint
///   loss.csv     per-step minibatch loss
///   snapshot/    training-time effective weights as a model checkpoint
///   summary.txt  initial/final loss and parameter digests
void cmd_finetune(const ExperimentConfig& config, const fs::path& world_dir, const fs::path& out);

/// Forward pass of the model with the adapter applied (adapter_dir may be
/// empty for the bare model); writes an MTX1 file.
void cmd_infer(const fs::path& model_dir, const fs::path& adapter_dir, const fs::path& inputs,
               const fs::path& out);

/// A model dir, or a run dir (its adapter/ applied to the world's model).
ToyModel resolve_model(const fs::path& path, const SyntheticWorld& world);

struct AnalyzeSummary {
  std::vector<DriftRow> drift;
  std::vector<Prop1Result> prop1;
  double mean_drop = 0.0;
  std::size_t prop1_checked = 0;
  std::size_t prop1_vacuous = 0;
  std::size_t prop1_failed = 0;
};

/// Drift report and gradient-overlap bound check; the latter runs on every benign
/// minibatch of the training batch size, gradients taken at the "after"
/// model.
AnalyzeSummary analyze(const SyntheticWorld& world, const ToyModel& before, const ToyModel& after,
                       const ExperimentConfig& config);

/// Writes drift.csv and prop1.csv into out and prints a summary table.
AnalyzeSummary cmd_analyze(const ExperimentConfig& config, const fs::path& world_dir,
                           const fs::path& before, const fs::path& after, const fs::path& out,
                           std::ostream& log);

struct SeedOutcome {
  std::uint64_t seed = 0;
  double lora_drop = 0.0;
  double salora_drop = 0.0;
  double salora_final_loss = 0.0;
  double no_init_final_loss = 0.0;
};

/// One default world per seed; LoRA, SaLoRA and SaLoRA without task init
/// trained on each.
std::vector<SeedOutcome> compare_methods(const ExperimentConfig& config,
                                         const std::vector<std::uint64_t>& seeds);

/// Quick internal consistency checks; one line per check. Returns true
/// when all pass.
bool selftest(std::ostream& log);

}  // namespace salora
