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
#include <vector>

#include "salora/matrix.hpp"

namespace salora {

/// Thin SVD m = u * diag(s) * v^T with k = min(rows, cols).
///
/// Sign convention: in every column of u the entry of largest magnitude is
/// non-negative (ties go to the lowest row index); v is flipped with it.
/// Singular values are sorted descending with a stable sort, so repeated
/// values keep the sweep order and the result is reproducible bit for bit.
struct SvdResult {
  Matrix u;               // m x k, orthonormal columns
  std::vector<double> s;  // k values, non-increasing, >= 0
  Matrix v;               // n x k, orthonormal columns
};

/// One-sided cyclic Jacobi (Hestenes). Throws ValidationError on NaN/Inf
/// and ShapeError on an empty matrix.
SvdResult svd(const Matrix& m);

/// First k columns of svd(m).u. Throws RankError unless 1 <= k <= min dims.
Matrix top_left_singular_vectors(const Matrix& m, std::size_t k);

double min_singular_value(const Matrix& m);

/// Number of singular values above rel_tol * s_max (0 for the zero matrix).
std::size_t numerical_rank(const std::vector<double>& singular_values, double rel_tol);

/// u * diag(s) * v^T using the leading k triplets.
Matrix reconstruct(const SvdResult& r, std::size_t k);

}  // namespace salora
