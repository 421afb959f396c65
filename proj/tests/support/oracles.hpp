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

// Independent reference implementations used as test oracles. Nothing in
// here calls the library's linear algebra.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "salora/matrix.hpp"
#include "salora/model.hpp"

namespace oracle {

using Dense = std::vector<std::vector<double>>;

Dense to_dense(const salora::Matrix& m);
salora::Matrix from_dense(const Dense& d);

salora::Matrix naive_matmul(const salora::Matrix& a, const salora::Matrix& b);

struct Eigen {
  std::vector<double> values;  // descending
  Dense vectors;               // column j is the eigenvector of values[j]
};

/// Two-sided cyclic Jacobi on a symmetric matrix.
Eigen jacobi_eigen(const Dense& sym);

/// Singular values from the eigenvalues of M^T M, descending.
std::vector<double> gram_singular_values(const salora::Matrix& m);

struct Svd {
  salora::Matrix u;  // m x k
  std::vector<double> s;
  salora::Matrix v;  // n x k
};
/// Thin SVD via the Gram eigenproblem (requires full column rank for the
/// U columns to be meaningful).
Svd gram_svd(const salora::Matrix& m);

/// Top-k left singular subspace by power iteration on M M^T with deflation.
salora::Matrix power_subspace(const salora::Matrix& m, std::size_t k, std::size_t iters = 2000);

/// Largest principal angle (radians) between the column spans of two
/// orthonormal-column matrices of equal width.
double max_principal_angle(const salora::Matrix& a, const salora::Matrix& b);

/// Modified Gram-Schmidt; columns of the result are orthonormal.
salora::Matrix gram_schmidt(const salora::Matrix& m);

/// Random d x k orthonormal columns from a std engine.
salora::Matrix random_orthonormal(std::size_t d, std::size_t k, std::mt19937_64& gen);
salora::Matrix random_gaussian(std::size_t r, std::size_t c, std::mt19937_64& gen,
                               double stddev = 1.0);

double frob(const salora::Matrix& m);

/// Effective weight recomputed from slot fields without the library's helpers.
salora::Matrix effective_weight(const salora::LinearLayer& layer);

/// Scalar-by-scalar forward pass.
salora::Matrix reference_forward(const salora::ToyModel& model, const salora::Matrix& x);

double reference_mse(const salora::ToyModel& model, const salora::Matrix& x,
                     const salora::Matrix& y);

/// Central finite-difference gradient of reference_mse with respect to one
/// adapter factor (which = 0 for a, 1 for b).
salora::Matrix fd_gradient(const salora::ToyModel& model, std::size_t layer, int which,
                           const salora::Matrix& x, const salora::Matrix& y, double h = 1e-5);

/// |W_S (G X^T)^T|_F accumulated entry by entry.
double prop1_lhs(const salora::Matrix& w_s, const salora::Matrix& x, const salora::Matrix& g);

}  // namespace oracle
