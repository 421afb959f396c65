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
#include <optional>
#include <string_view>
#include <vector>

#include "salora/adapter.hpp"
#include "salora/matrix.hpp"

namespace salora {

enum class Activation { kTanh, kRelu, kIdentity };

std::string_view activation_name(Activation act);
Activation parse_activation(std::string_view name);

struct LinearLayer {
  Matrix weight;  // out_dim x in_dim, the pre-trained weight; never trained
  std::optional<AdapterSlot> adapter;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }
  Matrix effective_weight() const;
};

/// Chain of linear layers with an elementwise activation between
/// consecutive layers (not after the last one).
struct ToyModel {
  std::vector<LinearLayer> layers;
  Activation activation = Activation::kTanh;

  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.back().out_dim(); }
  bool has_adapters() const;

  /// Throws ShapeError/ConfigError if layer dimensions do not chain or an
  /// adapter does not fit its host layer.
  void validate() const;
};

/// Per-layer inputs (in_dim x batch) and pre-activation outputs
/// (out_dim x batch).
struct FeatureTrace {
  std::vector<Matrix> inputs;
  std::vector<Matrix> outputs;
};

struct ForwardResult {
  Matrix output;
  std::optional<FeatureTrace> trace;
};

/// x is in_dim x batch. Each column is one sample.
ForwardResult forward(const ToyModel& model, const Matrix& x, bool capture = false);

struct AdapterGradients {
  Matrix a;
  Matrix b;
};

struct BackwardResult {
  /// One entry per layer; empty for layers without an adapter.
  std::vector<std::optional<AdapterGradients>> adapters;
  /// dL/dY for every layer's pre-activation output.
  std::vector<Matrix> output_grads;
  /// Every layer's input, as seen by the forward pass.
  std::vector<Matrix> inputs;
};

/// Gradients of the scalar L implied by upstream_grad = dL/d(output).
/// Only trainable adapter factors get gradients. For SaLoRA
///   dL/db = C^T G (a X)^T,   dL/da = (C b)^T G X^T,
/// with G the layer's output gradient. Throws ConfigError if the model has
/// no adapters.
BackwardResult backward(const ToyModel& model, const Matrix& x, const Matrix& upstream_grad);

/// The output-gradient part of backward() without the adapter requirement.
BackwardResult layer_gradients(const ToyModel& model, const Matrix& x, const Matrix& upstream_grad);

}  // namespace salora
