#include "densctl/numerics.hpp"

#include <Eigen/SVD>
#include <limits>

namespace densctl {

SvdResult thin_svd(const Matrix& m) {
  if (m.rows() < 1 || m.cols() < 1) {
    throw NumericalError("thin_svd: empty matrix");
  }
  if (!m.allFinite()) {
    throw NumericalError("thin_svd: matrix has non-finite entries");
  }
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) {
    throw NumericalError("thin_svd: SVD did not converge");
  }
  return SvdResult{svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

Matrix pseudoinverse(const Matrix& m, double tol) {
  const SvdResult svd = thin_svd(m);
  if (tol < 0.0) {
    tol = static_cast<double>(std::max(m.rows(), m.cols())) *
          svd.singular_values(0) * std::numeric_limits<double>::epsilon();
  }
  Vector inv = Vector::Zero(svd.singular_values.size());
  for (Eigen::Index i = 0; i < inv.size(); ++i) {
    if (svd.singular_values(i) > tol) inv(i) = 1.0 / svd.singular_values(i);
  }
  return svd.v * inv.asDiagonal() * svd.u.transpose();
}

PcaResult pca(const Matrix& data, bool center) {
  if (data.rows() < 2) {
    throw DataError("pca: need at least 2 observations");
  }
  PcaResult r;
  r.centered = center;
  r.mean_row = data.colwise().mean();
  Matrix work = data;
  if (center) work.rowwise() -= r.mean_row.transpose();
  const SvdResult svd = thin_svd(work);
  r.components = svd.v;
  r.singular_values = svd.singular_values;
  const double total = svd.singular_values.squaredNorm();
  r.explained_variance_fractions = Vector::Zero(svd.singular_values.size());
  if (total > 0.0) {
    r.explained_variance_fractions =
        svd.singular_values.array().square() / total;
  }
  return r;
}

}  // namespace densctl
