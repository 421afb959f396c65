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
#include <iosfwd>
#include <vector>

#include "salora/matrix.hpp"
#include "salora/model.hpp"

namespace salora {

struct WorldParams {
  std::size_t width = 32;
  std::size_t layers = 3;
  std::size_t planted_rank = 4;
  std::size_t n_benign = 512;
  std::size_t n_protected = 64;
  Activation activation = Activation::kTanh;

  double generic_scale = 1.5;     // stddev of the generic part is this / sqrt(width)
  double coupling = 0.0;          // generic mass leaking into the planted block
  double alpha = 1.0;             // planted strengths are alpha * (1 + 0.2 u)
  double benign_strength = 0.5;   // benign spread along the planted subspace
  double protected_noise = 0.3;   // protected spread along the planted subspace
  double protected_shift = 1.0;   // protected mean offset along the planted subspace
  double teacher_eta = 2.0;       // strength of the rank-one teacher edit
  double teacher_in = 0.8;        // planted share of the edit's input direction
  double teacher_out = 1.0;       // planted share of the edit's output direction
  double teacher_task_scale = 1.0;
  std::size_t teacher_task_rank = 3;

  /// Throws ConfigError on infeasible dimensions.
  void validate() const;
};

/// W = P_c R P_c + V diag(alpha) V^T per layer, with a shared planted basis V.
struct SyntheticWorld {
  WorldParams params;
  std::uint64_t seed = 0;
  ToyModel model;
  Matrix benign_inputs;
  Matrix benign_targets;
  Matrix protected_inputs;
  std::vector<Matrix> planted_subspace;          // per layer, width x planted_rank
  std::vector<std::vector<double>> planted_alpha;  // per layer
  std::vector<double> gamma;  // per layer: min over protected layer inputs of |W_S x|

  /// V diag(alpha) V^T for one layer.
  Matrix planted_weight(std::size_t layer) const;
};

SyntheticWorld build_world(const WorldParams& params, std::uint64_t seed);

/// gamma per layer recomputed from the planted matrices and the pre-trained model.
std::vector<double> planted_gamma(const ToyModel& model, const std::vector<Matrix>& planted_weights,
                                  const Matrix& protected_inputs);

struct ProbeDataset {
  Matrix features;         // d x n
  std::vector<int> labels;  // 1 = protected, 0 = benign
};

struct LinearProbe {
  Matrix weight;  // 1 x d
  double bias = 0.0;
};

struct ProbeOptions {
  std::size_t iters = 500;
  double lr = 0.5;
  double l2 = 1e-4;
};

/// Full-batch gradient descent on the logistic loss, zero init.
/// Throws ValidationError unless both labels are present.
LinearProbe train_probe(const ProbeDataset& data, const ProbeOptions& options = {});

/// Fraction of samples whose prediction (sigmoid >= 0.5, i.e. logit >= 0)
/// matches the label.
double probe_accuracy(const LinearProbe& probe, const ProbeDataset& data);

struct ProbeSetup {
  std::size_t n_benign = 64;  // benign samples taken from the front of the benign set
  std::size_t group = 1;      // consecutive same-class samples averaged per feature column
  ProbeOptions options;
};

/// Per-layer datasets from the layer outputs of model on protected and benign inputs.
std::vector<ProbeDataset> probe_datasets(const SyntheticWorld& world, const ToyModel& model,
                                         const ProbeSetup& setup = {});

struct DriftRow {
  std::size_t layer = 0;
  double acc_before = 0.0;
  double acc_after = 0.0;
  double output_drift = 0.0;
  double subspace_perturbation = 0.0;
};

std::vector<DriftRow> drift_report(const SyntheticWorld& world, const ToyModel& before,
                                   const ToyModel& after, const ProbeSetup& setup = {});

/// Mean of acc_before - acc_after over layers.
double mean_probe_drop(const std::vector<DriftRow>& rows);

/// "layer,acc_before,acc_after,output_drift,subspace_perturbation".
void write_drift_csv(std::ostream& out, const std::vector<DriftRow>& rows);

struct Prop1Instance {
  Matrix w_s;         // planted weight, out x in
  Matrix x;           // layer inputs, in x n
  Matrix output_grad;  // dL/dY, out x n
  double gamma = 0.0;
};

struct Prop1Result {
  double lhs = 0.0;            // |W_S grad_dW^T|_F with grad_dW = G X^T
  double rhs = 0.0;            // gamma * sigma_min(G)
  double sigma_min = 0.0;      // n-th singular value of G; 0 when n > out
  double region_norm = 0.0;    // |W_S X|_F
  bool vacuous = false;        // sigma_min == 0 or |W_S X|_F <= gamma
  bool pass = true;            // lhs >= rhs - 1e-12 (vacuous instances pass trivially)
};

Prop1Result proposition1_instance(const Prop1Instance& inst);

/// Per-layer check for one benign batch; output_grad is dL/d(model output).
std::vector<Prop1Result> proposition1_check(const SyntheticWorld& world, const ToyModel& model,
                                            const Matrix& inputs, const Matrix& output_grad);

/// "instance,lhs,rhs,vacuous,pass".
void write_prop1_csv(std::ostream& out, const std::vector<Prop1Result>& rows);

}  // namespace salora
