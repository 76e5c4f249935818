#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "xai/error.hpp"

namespace xai {

template <typename Scalar>
struct SymmetricEigen {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> values;                // descending
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> vectors;  // columns, orthonormal
  int sweeps = 0;
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Iterates until the
/// off-diagonal Frobenius norm falls to `tol` times max(1, ||A||_F). Eigenpairs
/// are sorted by descending eigenvalue and each eigenvector is signed so its
/// largest-magnitude entry is positive (first such entry on ties).
template <typename Derived>
SymmetricEigen<typename Derived::Scalar> jacobi_eigen(const Eigen::MatrixBase<Derived>& input,
                                                      typename Derived::Scalar tol = 1e-12, int max_sweeps = 100) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (input.rows() != input.cols()) throw Error(ErrorKind::ShapeMismatch, "jacobi_eigen: matrix not square");
  const Eigen::Index n = input.rows();
  Mat a = input;
  Mat v = Mat::Identity(n, n);

  auto off_norm = [&] {
    Scalar s = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };
  const Scalar threshold = tol * std::max<Scalar>(Scalar(1), a.norm());

  int sweep = 0;
  while (off_norm() > threshold) {
    if (sweep++ >= max_sweeps) throw Error(ErrorKind::EigenFailure, "Jacobi did not converge");
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const Scalar apq = a(p, q);
        if (apq == Scalar(0)) continue;
        const Scalar theta = (a(q, q) - a(p, p)) / (Scalar(2) * apq);
        const Scalar t = (theta >= 0 ? Scalar(1) : Scalar(-1)) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const Scalar c = Scalar(1) / std::sqrt(t * t + 1);
        const Scalar s = t * c;
        // A <- J^T A J with J the (p,q) rotation.
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });

  SymmetricEigen<Scalar> out;
  out.sweeps = sweep;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index src = order[static_cast<std::size_t>(k)];
    out.values(k) = a(src, src);
    auto col = v.col(src);
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < n; ++i)
      if (std::abs(col(i)) > std::abs(col(arg))) arg = i;
    out.vectors.col(k) = col(arg) < 0 ? (-col).eval() : col.eval();
  }
  return out;
}

/// Column means of a row-sample matrix.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> column_means(const Eigen::MatrixBase<Derived>& x) {
  return x.colwise().mean().transpose();
}

/// Sample covariance (denominator N - 1) of a row-sample matrix.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> covariance(const Eigen::MatrixBase<Derived>& x) {
  using Mat = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (x.rows() < 2) throw Error(ErrorKind::InvalidArgument, "covariance needs at least two rows");
  Mat centered = x.rowwise() - x.colwise().mean();
  return (centered.transpose() * centered) / typename Derived::Scalar(x.rows() - 1);
}

}  // namespace xai
