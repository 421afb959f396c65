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

#include "salora/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "salora/error.hpp"
#include "salora/linalg.hpp"
#include "salora/random.hpp"

namespace salora {

namespace {

constexpr double kProjectorRankTol = 1e-10;

void require_rank(std::size_t r, std::size_t out_dim, std::size_t in_dim, const char* op) {
  if (r < 1 || r > std::min(out_dim, in_dim)) {
    throw RankError(std::string(op) + ": rank " + std::to_string(r) + " outside [1, " +
                    std::to_string(std::min(out_dim, in_dim)) + "]");
  }
}

/// Columns of m scaled by sqrt(s[j]).
Matrix scale_columns_sqrt(Matrix m, const std::vector<double>& s) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) *= std::sqrt(s[j]);
  return m;
}

}  // namespace

std::string_view adapter_kind_name(AdapterKind kind) {
  switch (kind) {
    case AdapterKind::kLoRA:
      return "lora";
    case AdapterKind::kPiSSA:
      return "pissa";
    case AdapterKind::kSaLoRA:
      return "salora";
  }
  return "unknown";
}

AdapterKind parse_adapter_kind(std::string_view name) {
  if (name == "lora") return AdapterKind::kLoRA;
  if (name == "pissa") return AdapterKind::kPiSSA;
  if (name == "salora") return AdapterKind::kSaLoRA;
  throw ConfigError("unknown adapter kind '" + std::string(name) + "'");
}

Matrix adapter_delta(const AdapterSlot& slot) {
  Matrix ba = matmul(slot.b, slot.a);
  if (slot.kind == AdapterKind::kSaLoRA) return matmul(*slot.c, ba);
  return ba;
}

Matrix effective_weight(const Matrix& base, const AdapterSlot& slot) {
  if (slot.out_dim() != base.rows() || slot.in_dim() != base.cols()) {
    throw ShapeError("adapter " + slot.b.shape_string() + "*" + slot.a.shape_string() +
                     " does not fit weight " + base.shape_string());
  }
  switch (slot.kind) {
    case AdapterKind::kLoRA:
      return base + adapter_delta(slot);
    case AdapterKind::kPiSSA:
    case AdapterKind::kSaLoRA:
      return *slot.residual_w + adapter_delta(slot);
  }
  return base;
}

AdapterSlot init_lora(std::size_t out_dim, std::size_t in_dim, std::size_t r, std::uint64_t seed) {
  require_rank(r, out_dim, in_dim, "init_lora");
  Rng rng(seed);
  AdapterSlot slot;
  slot.kind = AdapterKind::kLoRA;
  slot.a = rng.gaussian(r, in_dim, 1.0 / std::sqrt(static_cast<double>(in_dim)));
  slot.b = Matrix(out_dim, r);
  return slot;
}

AdapterSlot init_pissa(const Matrix& w, std::size_t r) {
  require_rank(r, w.rows(), w.cols(), "init_pissa");
  const SvdResult f = svd(w);
  std::vector<double> s(f.s.begin(), f.s.begin() + static_cast<std::ptrdiff_t>(r));
  AdapterSlot slot;
  slot.kind = AdapterKind::kPiSSA;
  slot.b = scale_columns_sqrt(column_block(f.u, 0, r), s);
  slot.a = transpose(scale_columns_sqrt(column_block(f.v, 0, r), s));
  slot.residual_w = w - matmul(slot.b, slot.a);
  return slot;
}

SafetyProjector compute_safety_projector(const Matrix& w, const SafetyContext& ctx) {
  if (w.cols() != ctx.x_h.rows()) {
    throw ShapeError("compute_safety_projector: weight " + w.shape_string() +
                     " cannot act on features " + ctx.x_h.shape_string());
  }
  const std::size_t d = w.rows();
  SafetyProjector p{Matrix::identity(d), Matrix(d, 0)};
  if (ctx.r_s == 0 || ctx.x_h.cols() == 0) return p;

  const Matrix features = matmul(w, ctx.x_h);
  const SvdResult f = svd(features);
  const std::size_t rank = std::min(ctx.r_s, numerical_rank(f.s, kProjectorRankTol));
  if (rank == 0) return p;

  p.basis = column_block(f.u, 0, rank);
  p.c = Matrix::identity(d) - matmul(p.basis, transpose(p.basis));
  return p;
}

LowRankPair task_specific_init(const Matrix& w, const TaskContext& ctx, std::size_t r) {
  require_rank(r, w.rows(), w.cols(), "task_specific_init");
  if (w.cols() != ctx.x_t.rows()) {
    throw ShapeError("task_specific_init: weight " + w.shape_string() +
                     " cannot act on features " + ctx.x_t.shape_string());
  }
  const std::size_t r_t = std::min({ctx.r_t, w.rows(), ctx.x_t.cols()});

  // Task region projector U U^T (zero when there is no task subspace).
  Matrix task_proj(w.rows(), w.rows());
  if (r_t > 0) {
    const Matrix u = top_left_singular_vectors(matmul(w, ctx.x_t), r_t);
    task_proj = matmul(u, transpose(u));
  }

  const SvdResult f = svd(w);
  std::vector<double> s(f.s.begin(), f.s.begin() + static_cast<std::ptrdiff_t>(r));
  LowRankPair out;
  out.b = matmul(task_proj, scale_columns_sqrt(column_block(f.u, 0, r), s));
  out.a = transpose(scale_columns_sqrt(column_block(f.v, 0, r), s));
  return out;
}

namespace {

AdapterSlot salora_slot(const Matrix& w, SafetyProjector proj, Matrix b, Matrix a) {
  AdapterSlot slot;
  slot.kind = AdapterKind::kSaLoRA;
  slot.residual_w = w - matmul(proj.c, matmul(b, a));
  slot.c = std::move(proj.c);
  slot.safety_basis = std::move(proj.basis);
  slot.a0 = a;
  slot.b0 = b;
  slot.a = std::move(a);
  slot.b = std::move(b);
  return slot;
}

}  // namespace

AdapterSlot assemble_salora(const Matrix& w, const SafetyContext& safety, const TaskContext& task,
                            std::size_t r) {
  SafetyProjector proj = compute_safety_projector(w, safety);
  LowRankPair init = task_specific_init(w, task, r);
  return salora_slot(w, std::move(proj), std::move(init.b), std::move(init.a));
}

AdapterSlot assemble_salora_lora_init(const Matrix& w, const SafetyContext& safety, std::size_t r,
                                      std::uint64_t seed) {
  SafetyProjector proj = compute_safety_projector(w, safety);
  AdapterSlot lora = init_lora(w.rows(), w.cols(), r, seed);
  return salora_slot(w, std::move(proj), std::move(lora.b), std::move(lora.a));
}

AdapterRecord merge_for_saving(const AdapterSlot& slot) {
  if (slot.kind != AdapterKind::kSaLoRA) {
    throw ConfigError("merge_for_saving: expected a salora slot, got " +
                      std::string(adapter_kind_name(slot.kind)));
  }
  AdapterRecord rec;
  rec.kind = AdapterKind::kSaLoRA;
  rec.rank = slot.rank();
  rec.safety_rank = slot.safety_rank();
  rec.b = matmul(*slot.c, slot.b);
  rec.a = slot.a;
  rec.b0 = matmul(*slot.c, *slot.b0);
  rec.a0 = *slot.a0;
  return rec;
}

AdapterRecord make_record(const AdapterSlot& slot) {
  if (slot.kind == AdapterKind::kSaLoRA) return merge_for_saving(slot);
  AdapterRecord rec;
  rec.kind = slot.kind;
  rec.rank = slot.rank();
  rec.b = slot.b;
  rec.a = slot.a;
  if (slot.kind == AdapterKind::kPiSSA) rec.residual = *slot.residual_w;
  return rec;
}

Matrix assemble_for_inference(const Matrix& w_pretrained, const AdapterRecord& record) {
  if (record.b.rows() != w_pretrained.rows() || record.a.cols() != w_pretrained.cols()) {
    throw ShapeError("adapter record " + record.b.shape_string() + "*" +
                     record.a.shape_string() + " does not fit weight " +
                     w_pretrained.shape_string());
  }
  switch (record.kind) {
    case AdapterKind::kLoRA:
      return w_pretrained + matmul(record.b, record.a);
    case AdapterKind::kPiSSA:
      return record.residual + matmul(record.b, record.a);
    case AdapterKind::kSaLoRA:
      return (w_pretrained - matmul(record.b0, record.a0)) + matmul(record.b, record.a);
  }
  return w_pretrained;
}

}  // namespace salora
