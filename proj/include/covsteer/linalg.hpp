#pragma once

#include "covsteer/types.hpp"

namespace covsteer::linalg {

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Largest absolute entry of m - m^T relative to max(1, |m|_max).
double asymmetry(const Matrix& m);

bool is_symmetric(const Matrix& m, double rel_tol = 1e-10);

double min_eigenvalue(const Matrix& symmetric);
double max_eigenvalue(const Matrix& symmetric);

/// PSD check with slack -tol * max(1, |m|).
bool is_psd(const Matrix& symmetric, double tol = 1e-10);

/// Symmetric square root; negative eigenvalues are clamped to zero.
Matrix psd_sqrt(const Matrix& symmetric);

/// Tall factor F (n x r) with F F^T = m, keeping eigenvalues above rel_tol * max(1, lambda_max).
Matrix psd_factor(const Matrix& symmetric, double rel_tol = 1e-12);

/// Row factor W (r x n) with W^T W = m for PSD m; r = numerical rank.
Matrix weight_factor(const Matrix& symmetric, double rel_tol = 1e-12);

/// Smallest over largest singular value (0 for the zero matrix).
double inverse_condition(const Matrix& m);

}  // namespace covsteer::linalg
