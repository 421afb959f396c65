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
#include <optional>
#include <string_view>

#include "salora/matrix.hpp"

namespace salora {

enum class AdapterKind { kLoRA, kPiSSA, kSaLoRA };

std::string_view adapter_kind_name(AdapterKind kind);
/// Accepts "lora", "pissa", "salora"; throws ConfigError otherwise.
AdapterKind parse_adapter_kind(std::string_view name);

/// Trainable low-rank pair attached to one linear layer.
///
/// Effective weight of the host layer:
///   LoRA    base + b*a
///   PiSSA   residual_w + b*a
///   SaLoRA  residual_w + c*b*a
/// Only a and b are trainable. c, a0, b0, residual_w and safety_basis are
/// frozen for the lifetime of the slot.
struct AdapterSlot {
  AdapterKind kind = AdapterKind::kLoRA;
  Matrix a;  // r x in_dim
  Matrix b;  // out_dim x r
  std::optional<Matrix> c;             // SaLoRA: out_dim x out_dim projector
  std::optional<Matrix> safety_basis;  // SaLoRA: U_C, out_dim x r_s (r_s may be 0)
  std::optional<Matrix> a0;            // SaLoRA: frozen copy of the initial a
  std::optional<Matrix> b0;            // SaLoRA: frozen copy of the initial b
  std::optional<Matrix> residual_w;    // PiSSA, SaLoRA: replaces the base weight

  std::size_t rank() const noexcept { return a.rows(); }
  std::size_t in_dim() const noexcept { return a.cols(); }
  std::size_t out_dim() const noexcept { return b.rows(); }
  std::size_t safety_rank() const noexcept { return safety_basis ? safety_basis->cols() : 0; }
};

/// b*a, or c*b*a for SaLoRA.
Matrix adapter_delta(const AdapterSlot& slot);
/// The host layer's weight as seen by forward().
Matrix effective_weight(const Matrix& base, const AdapterSlot& slot);

/// Protected-sample features at one layer (input side, in_dim x n_h).
struct SafetyContext {
  Matrix x_h;
  std::size_t r_s = 0;
};

/// Fine-tuning-task features at one layer (input side, in_dim x n_t).
struct TaskContext {
  Matrix x_t;
  std::size_t r_t = 0;
};

struct SafetyProjector {
  Matrix c;      // I - U_C U_C^T
  Matrix basis;  // U_C, out_dim x effective_rank
};

struct LowRankPair {
  Matrix b;  // out_dim x r
  Matrix a;  // r x in_dim
};

/// Vanilla LoRA: b = 0, a ~ N(0, 1/in_dim) from the given seed.
AdapterSlot init_lora(std::size_t out_dim, std::size_t in_dim, std::size_t r, std::uint64_t seed);

/// PiSSA: b = U_r sqrt(S_r), a = sqrt(S_r) V_r^T, residual_w = w - b*a.
AdapterSlot init_pissa(const Matrix& w, std::size_t r);

/// Safety module C = I - U_C U_C^T, with U_C the top r_s left singular
/// vectors of w * x_h. r_s is clamped to the numerical rank of w * x_h
/// (singular values above 1e-10 * s_max); a zero feature matrix gives C = I.
SafetyProjector compute_safety_projector(const Matrix& w, const SafetyContext& ctx);

/// Task-specific initialization. U = top r_t left singular vectors of
/// w * x_t, (Ub, Sb, Vb) = svd(w):
///   b = U U^T Ub[:, :r] sqrt(Sb[:r]),  a = sqrt(Sb[:r]) Vb[:, :r]^T.
/// r_t is clamped to min(out_dim, n_t).
LowRankPair task_specific_init(const Matrix& w, const TaskContext& ctx, std::size_t r);

/// Full SaLoRA slot: projector from the safety context, task-specific a/b,
/// frozen copies, and residual_w = w - c*b*a so that the initial effective
/// weight equals w.
AdapterSlot assemble_salora(const Matrix& w, const SafetyContext& safety, const TaskContext& task,
                            std::size_t r);

/// Ablation variant: same projector, but LoRA-style a/b (b = 0) instead of
/// the task-specific initialization.
AdapterSlot assemble_salora_lora_init(const Matrix& w, const SafetyContext& safety, std::size_t r,
                                      std::uint64_t seed);

/// What goes to disk for one adapted layer. For SaLoRA the projector is
/// folded into the b factors (b = c*b_trained, b0 = c*b0) and neither c
/// nor residual_w is stored.
struct AdapterRecord {
  AdapterKind kind = AdapterKind::kLoRA;
  std::size_t rank = 0;
  std::size_t safety_rank = 0;
  Matrix b;         // b' for SaLoRA
  Matrix a;
  Matrix b0;        // SaLoRA: b0'
  Matrix a0;        // SaLoRA
  Matrix residual;  // PiSSA

  friend bool operator==(const AdapterRecord&, const AdapterRecord&) = default;
};

/// SaLoRA only; throws ConfigError for other kinds.
AdapterRecord merge_for_saving(const AdapterSlot& slot);
/// Any kind. SaLoRA goes through merge_for_saving.
AdapterRecord make_record(const AdapterSlot& slot);

/// Inference weight from the pre-trained weight and a saved record:
///   LoRA    w + b*a
///   PiSSA   residual + b*a
///   SaLoRA  w - b0'*a0 + b'*a
Matrix assemble_for_inference(const Matrix& w_pretrained, const AdapterRecord& record);

}  // namespace salora
