#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sara/error.hpp"
#include "sara/rng.hpp"

namespace sara {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = Mat<double>;
using Vector = Vec<double>;
using Index = Eigen::Index;

template <typename Scalar>
struct SvdFactors {
  Mat<Scalar> U;   // m x k
  Vec<Scalar> S;   // k, descending
  Mat<Scalar> Vt;  // k x n
};

/// Forces single-threaded, fixed-order reductions. The library never parallelizes
/// inside a kernel unless Eigen itself was built with OpenMP.
void set_deterministic(bool on);
bool deterministic();

inline std::string shape_str(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename A>
std::string shape_str(const Eigen::EigenBase<A>& a) {
  return shape_str(a.rows(), a.cols());
}

template <typename A, typename B>
void require_same_shape(const Eigen::EigenBase<A>& a, const Eigen::EigenBase<B>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

template <typename D>
void require_finite(const Eigen::MatrixBase<D>& a, const char* op) {
  if (!a.allFinite()) {
    throw InvalidArgument(std::string(op) + ": non-finite entry in " + shape_str(a) + " input");
  }
}

template <typename A, typename B>
auto matmul(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shape mismatch " + shape_str(a) + " * " + shape_str(b));
  }
  using Scalar = typename A::Scalar;
  Mat<Scalar> out = a * b;
  return out;
}

template <typename A>
auto transpose(const Eigen::MatrixBase<A>& a) {
  Mat<typename A::Scalar> out = a.transpose();
  return out;
}

/// a + c * b
template <typename A, typename B>
auto add_scaled(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b, typename A::Scalar c) {
  require_same_shape(a, b, "add_scaled");
  Mat<typename A::Scalar> out = a + c * b;
  return out;
}

template <typename A, typename B>
auto hadamard(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  require_same_shape(a, b, "hadamard");
  Mat<typename A::Scalar> out = a.cwiseProduct(b);
  return out;
}

template <typename A>
typename A::Scalar frobenius_norm(const Eigen::MatrixBase<A>& a) {
  // Plain sum of squares in storage order; no blocking, no rescaling.
  typename A::Scalar acc(0);
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i) acc += a(i, j) * a(i, j);
  return std::sqrt(acc);
}

template <typename A>
typename A::Scalar spectral_norm(const Eigen::MatrixBase<A>& a) {
  if (a.size() == 0) return typename A::Scalar(0);
  Eigen::JacobiSVD<Mat<typename A::Scalar>> svd(a.eval());
  return svd.singularValues()(0);
}

/// Thin SVD with descending singular values and sign-canonical left vectors
/// (first nonzero entry of each column of U is positive; Vt rows flipped to match).
template <typename Scalar>
SvdFactors<Scalar> svd(const Mat<Scalar>& a) {
  if (a.rows() < 1 || a.cols() < 1) {
    throw ShapeError("svd: empty input " + shape_str(a));
  }
  require_finite(a, "svd");
  Eigen::JacobiSVD<Mat<Scalar>> solver(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (solver.info() != Eigen::Success || !solver.singularValues().allFinite() ||
      !solver.matrixU().allFinite() || !solver.matrixV().allFinite()) {
    throw SvdError(a.rows(), a.cols());
  }
  SvdFactors<Scalar> f{solver.matrixU(), solver.singularValues(), solver.matrixV().transpose()};
  for (Index k = 0; k < f.U.cols(); ++k) {
    const Scalar scale = f.U.col(k).cwiseAbs().maxCoeff();
    const Scalar tol = scale * Scalar(64) * Eigen::NumTraits<Scalar>::epsilon();
    for (Index i = 0; i < f.U.rows(); ++i) {
      const Scalar u = f.U(i, k);
      if (std::abs(u) > tol) {
        if (u < 0) {
          f.U.col(k) *= Scalar(-1);
          f.Vt.row(k) *= Scalar(-1);
        }
        break;
      }
    }
  }
  return f;
}

inline SvdFactors<double> svd(const Matrix& a) { return svd<double>(a); }

/// Orthonormal basis of the column span of `a` (m >= r), via Householder QR with the
/// triangular factor's diagonal made positive.
template <typename Scalar>
Mat<Scalar> qr_orthonormal(const Mat<Scalar>& a) {
  const Index m = a.rows();
  const Index r = a.cols();
  if (r < 1 || m < r) {
    throw ShapeError("qr_orthonormal: need m >= r >= 1, got " + shape_str(a));
  }
  require_finite(a, "qr_orthonormal");
  Eigen::HouseholderQR<Mat<Scalar>> qr(a);
  const Mat<Scalar> R = qr.matrixQR().topRows(r).template triangularView<Eigen::Upper>();
  const Scalar ref = std::max(a.norm(), std::numeric_limits<Scalar>::min());
  const Scalar tol = ref * Scalar(m) * Scalar(16) * Eigen::NumTraits<Scalar>::epsilon();
  for (Index j = 0; j < r; ++j) {
    if (std::abs(R(j, j)) <= tol) throw RankDeficientError(j);
  }
  Mat<Scalar> q = qr.householderQ() * Mat<Scalar>::Identity(m, r);
  for (Index j = 0; j < r; ++j) {
    if (R(j, j) < 0) q.col(j) *= Scalar(-1);
  }
  return q;
}

inline Matrix qr_orthonormal(const Matrix& a) { return qr_orthonormal<double>(a); }

/// I.i.d. standard normal entries, filled row-major from the stream.
Matrix gaussian_matrix(RngStream& rng, Index m, Index n);

/// max_ij |A^T A - I|_ij
template <typename A>
typename A::Scalar orthonormality_error(const Eigen::MatrixBase<A>& a) {
  using Scalar = typename A::Scalar;
  const Mat<Scalar> g = a.transpose() * a;
  return (g - Mat<Scalar>::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}

}  // namespace sara
