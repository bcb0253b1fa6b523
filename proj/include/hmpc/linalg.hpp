#pragma once

#include "hmpc/common.hpp"

#include <vector>

namespace hmpc {

/// Largest eigenvalue modulus of a square matrix.
double spectral_radius(const Matrix& m);

/// Smallest / largest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Matrix& sym);
double max_eigenvalue(const Matrix& sym);

/// Largest singular value (induced 2-norm). Zero for empty matrices.
double max_singular_value(const Matrix& m);

bool is_symmetric(const Matrix& m, double tol = 1e-12);

/// Symmetric and smallest eigenvalue strictly positive.
bool is_positive_definite(const Matrix& m);

/// Stacks square blocks on the diagonal.
Matrix block_diagonal(const std::vector<Matrix>& blocks);

}  // namespace hmpc
