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
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "salora/adapter.hpp"
#include "salora/model.hpp"

namespace salora {

enum class LossKind { kMse, kCrossEntropy };

std::string_view loss_kind_name(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

struct AdamWParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct TrainConfig {
  double learning_rate = 2e-4;
  std::size_t batch_size = 16;
  std::size_t epochs = 1;
  AdamWParams adamw;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::kMse;

  /// Throws ConfigError on out-of-range hyperparameters.
  void validate() const;
};

struct LossValue {
  double loss = 0.0;
  Matrix output_grad;  // dL/d(output)
};

/// mse: mean of squared errors over all entries.
/// cross_entropy: softmax over each column, cross-entropy against the
/// target column (one-hot or any distribution), averaged over columns.
LossValue evaluate_loss(LossKind kind, const Matrix& output, const Matrix& target);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<std::optional<AdapterGradients>> grads;  // per layer
};

LossAndGrad loss_and_grad(const ToyModel& model, const Matrix& inputs, const Matrix& targets,
                          LossKind kind);

/// Adam moments, one pair per parameter matrix, plus the step counter.
struct OptimizerState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::size_t step = 0;
};

struct GradientAudit {
  double max_rel_error = 0.0;  // max |analytic - fd| / (1e-8 + |fd|)
  std::size_t entries = 0;
};

/// Central finite differences over every adapter a/b entry.
GradientAudit audit_gradients(const ToyModel& model, const Matrix& inputs, const Matrix& targets,
                              LossKind kind, double h = 1e-5);

/// One AdamW update (decoupled weight decay, bias-corrected moments).
/// State is lazily sized on the first call.
void adamw_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
                OptimizerState& state, double learning_rate, const AdamWParams& hp);

enum class Method { kLoRA, kPiSSA, kSaLoRA, kSaLoRANoTaskInit };

std::string_view method_name(Method m);
/// "lora", "pissa", "salora", "salora_no_init".
Method parse_method(std::string_view name);
AdapterKind method_kind(Method m);

/// Per-layer contexts, indexed by layer (only adapted layers are read).
struct LayerContexts {
  std::vector<SafetyContext> safety;
  std::vector<TaskContext> task;
};

/// X_h / X_t for every layer: the layer inputs produced by the pre-trained
/// model on the protected and task sets, captured in a single pass each.
LayerContexts capture_contexts(const ToyModel& pretrained, const Matrix& protected_inputs,
                               const Matrix& task_inputs, std::size_t r_s, std::size_t r_t);

struct AdapterPlan {
  Method method = Method::kSaLoRA;
  std::size_t rank = 4;
  std::vector<std::size_t> layers;  // empty = every layer
  std::uint64_t init_seed = 0;
};

/// Copy of the pre-trained model with fresh adapter slots. Throws
/// ConfigError when a SaLoRA method has no contexts for an adapted layer.
ToyModel attach_adapters(const ToyModel& pretrained, const AdapterPlan& plan,
                         const LayerContexts* contexts);

struct LossPoint {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
};

struct Dataset {
  Matrix inputs;   // in_dim x n
  Matrix targets;  // out_dim x n
};

/// Called with the step index (0 = before the first update) and a read-only
/// view of the model.
using StepObserver = std::function<void(std::size_t step, const ToyModel& model)>;

struct TrainResult {
  ToyModel model;
  std::vector<LossPoint> curve;  // per optimizer step, minibatch loss
  double initial_loss = 0.0;     // full-dataset loss before training
  double final_loss = 0.0;       // full-dataset loss after training
};

/// Trains the adapter factors a, b of every slot in place of a copy of
/// model. Minibatches come from a seeded permutation per epoch; the last
/// partial batch is kept.
TrainResult train_adapters(ToyModel model, const Dataset& data, const TrainConfig& config,
                           const StepObserver& observer = {});

/// attach_adapters + train_adapters.
TrainResult fine_tune(const ToyModel& pretrained, const Dataset& data, const AdapterPlan& plan,
                      const TrainConfig& config, const LayerContexts* contexts,
                      const StepObserver& observer = {});

/// FNV-1a digest over every frozen matrix (base weights, c, U_C, a0, b0,
/// residual_w).
std::uint64_t frozen_digest(const ToyModel& model);
/// Digest over the trainable factors only.
std::uint64_t trainable_digest(const ToyModel& model);

/// "step,epoch,loss" header plus one row per point, loss with 6
/// significant digits, LF endings.
void write_loss_csv(std::ostream& out, const std::vector<LossPoint>& curve);

}  // namespace salora
