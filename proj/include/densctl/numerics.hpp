#pragma once

#include <Eigen/Dense>

#include "densctl/errors.hpp"

namespace densctl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Thin SVD, M = U diag(s) V^T with orthonormal U, V columns and
/// non-increasing singular values.
struct SvdResult {
  Matrix u;
  Vector singular_values;
  Matrix v;
};

struct PcaResult {
  Matrix components;                     // right singular vectors, one per column
  Vector singular_values;                // non-increasing
  Vector explained_variance_fractions;   // sigma_i^2 / sum sigma^2
  Vector mean_row;                       // column means of the input data
  bool centered = true;
};

/// Rank-revealing thin SVD. Throws NumericalError on non-finite input or
/// solver non-convergence.
SvdResult thin_svd(const Matrix& m);

/// Moore-Penrose pseudoinverse via SVD. Singular values <= tol are treated
/// as zero; tol < 0 selects max(rows,cols) * sigma_1 * machine epsilon.
Matrix pseudoinverse(const Matrix& m, double tol = -1.0);

/// PCA of a data matrix with one observation per row. Requires >= 2 rows.
/// Centering (on by default) subtracts column means before the SVD; the
/// mean row is returned either way so callers can report distances from it.
PcaResult pca(const Matrix& data, bool center = true);

}  // namespace densctl
