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

#include "salora/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "salora/error.hpp"

namespace salora {

namespace {

constexpr double kRotationTol = 1e-12;
constexpr int kMaxSweeps = 60;

/// Column-major working copy so rotations touch contiguous memory.
struct Columns {
  std::size_t rows = 0;
  std::vector<std::vector<double>> col;
};

Columns to_columns(const Matrix& m) {
  Columns c;
  c.rows = m.rows();
  c.col.assign(m.cols(), std::vector<double>(m.rows()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) c.col[j][i] = m(i, j);
  return c;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void rotate(std::vector<double>& x, std::vector<double>& y, double c, double s) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double yi = y[i];
    x[i] = c * xi - s * yi;
    y[i] = s * xi + c * yi;
  }
}

/// Replace the listed columns of q (unit or zero) with an orthonormal
/// completion of the others, drawing candidates from the standard basis.
void complete_orthonormal(std::vector<std::vector<double>>& q, const std::vector<bool>& valid) {
  const std::size_t m = q.empty() ? 0 : q[0].size();
  std::size_t next_basis = 0;
  for (std::size_t j = 0; j < q.size(); ++j) {
    if (valid[j]) continue;
    bool placed = false;
    while (!placed && next_basis < m) {
      std::vector<double> cand(m, 0.0);
      cand[next_basis++] = 1.0;
      // Two Gram-Schmidt passes against every accepted column.
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < q.size(); ++k) {
          if (k == j) continue;
          const double proj = dot(cand, q[k]);
          for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * q[k][i];
        }
      }
      const double norm = std::sqrt(dot(cand, cand));
      if (norm > 1e-6) {
        for (double& v : cand) v /= norm;
        q[j] = std::move(cand);
        placed = true;
      }
    }
  }
}

void apply_sign_convention(SvdResult& r) {
  for (std::size_t j = 0; j < r.u.cols(); ++j) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < r.u.rows(); ++i)
      if (std::abs(r.u(i, j)) > std::abs(r.u(arg, j))) arg = i;
    if (r.u(arg, j) < 0.0) {
      for (std::size_t i = 0; i < r.u.rows(); ++i) r.u(i, j) = -r.u(i, j);
      for (std::size_t i = 0; i < r.v.rows(); ++i) r.v(i, j) = -r.v(i, j);
    }
  }
}

/// SVD of a tall (rows >= cols) matrix.
SvdResult svd_tall(const Matrix& a) {
  const std::size_t n = a.cols();
  Columns w = to_columns(a);
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) v[j][j] = 1.0;

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = dot(w.col[p], w.col[p]);
        const double beta = dot(w.col[q], w.col[q]);
        const double gamma = dot(w.col[p], w.col[q]);
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= kRotationTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate(w.col[p], w.col[q], c, s);
        rotate(v[p], v[q], c, s);
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = std::sqrt(dot(w.col[j], w.col[j]));
  const double smax = n == 0 ? 0.0 : *std::max_element(sigma.begin(), sigma.end());
  // Columns this small carry no direction information; zero them and let the
  // completion step supply an orthonormal basis vector instead.
  const double zero_tol =
      smax * static_cast<double>(std::max(a.rows(), n)) * std::numeric_limits<double>::epsilon();

  std::vector<bool> valid(n, true);
  std::vector<std::vector<double>> u(n);
  for (std::size_t j = 0; j < n; ++j) {
    if (sigma[j] <= zero_tol || sigma[j] == 0.0) {
      sigma[j] = 0.0;
      valid[j] = false;
      u[j].assign(a.rows(), 0.0);
    } else {
      u[j] = w.col[j];
      for (double& x : u[j]) x /= sigma[j];
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  std::vector<std::vector<double>> u_sorted(n), v_sorted(n);
  std::vector<bool> valid_sorted(n);
  SvdResult r;
  r.s.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    u_sorted[j] = std::move(u[order[j]]);
    v_sorted[j] = v[order[j]];  // v[p] is column p of the accumulated rotation
    valid_sorted[j] = valid[order[j]];
    r.s[j] = sigma[order[j]];
  }
  complete_orthonormal(u_sorted, valid_sorted);

  r.u = Matrix(a.rows(), n);
  r.v = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < a.rows(); ++i) r.u(i, j) = u_sorted[j][i];
    for (std::size_t i = 0; i < n; ++i) r.v(i, j) = v_sorted[j][i];
  }
  apply_sign_convention(r);
  return r;
}

}  // namespace

SvdResult svd(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) {
    throw ShapeError("svd: matrix must be non-empty, got " + m.shape_string());
  }
  if (!all_finite(m)) throw ValidationError("svd: input contains non-finite entries");
  if (m.rows() >= m.cols()) return svd_tall(m);

  // Wide: factor the transpose and swap roles, then re-apply the sign
  // convention to the new u.
  SvdResult t = svd_tall(transpose(m));
  SvdResult r{std::move(t.v), std::move(t.s), std::move(t.u)};
  apply_sign_convention(r);
  return r;
}

Matrix top_left_singular_vectors(const Matrix& m, std::size_t k) {
  const std::size_t kmax = std::min(m.rows(), m.cols());
  if (k < 1 || k > kmax) {
    throw RankError("top_left_singular_vectors: k=" + std::to_string(k) +
                    " outside [1, " + std::to_string(kmax) + "] for " + m.shape_string());
  }
  return column_block(svd(m).u, 0, k);
}

double min_singular_value(const Matrix& m) { return svd(m).s.back(); }

std::size_t numerical_rank(const std::vector<double>& singular_values, double rel_tol) {
  if (singular_values.empty() || singular_values.front() <= 0.0) return 0;
  const double cut = rel_tol * singular_values.front();
  return static_cast<std::size_t>(std::count_if(singular_values.begin(), singular_values.end(),
                                                [cut](double s) { return s > cut; }));
}

Matrix reconstruct(const SvdResult& r, std::size_t k) {
  Matrix us = column_block(r.u, 0, k);
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t j = 0; j < k; ++j) us(i, j) *= r.s[j];
  return matmul(us, transpose(column_block(r.v, 0, k)));
}

}  // namespace salora
