#pragma once

// Dense symmetric / SPD kernels. Every O(n^3) operation in the library goes
// through a function in this header and is recorded by KernelCounters.

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <sstream>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "vtf/errors.hpp"
#include "vtf/kernel_counters.hpp"

namespace vtf {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Pivot threshold of the near-singular guard, relative to the largest diagonal entry.
inline constexpr double kPivotGuard = 1e-13;
/// Inputs with larger relative asymmetry are rejected rather than symmetrized.
inline constexpr double kSymmetryTolerance = 1e-8;

template <typename Derived>
Mat<typename Derived::Scalar> symmetrize(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  return (a + a.transpose()) * Scalar(0.5);
}

/// max |a_ij - a_ji| / (1 + max |a_ij|)
template <typename Derived>
typename Derived::Scalar relative_asymmetry(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  if (a.size() == 0) return Scalar(0);
  return (a - a.transpose()).cwiseAbs().maxCoeff() / (Scalar(1) + a.cwiseAbs().maxCoeff());
}

template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& a, double rel_tol = 1e-12) {
  return a.rows() == a.cols() && relative_asymmetry(a) <= rel_tol;
}

/// Dense product, counted as one cubic kernel call.
template <typename A, typename B>
Mat<typename A::Scalar> mul(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.cols() != b.rows()) throw DimensionMismatch("mul: inner dimensions differ");
  detail::count_cubic();
  Mat<typename A::Scalar> out = a * b;
  return out;
}

/// A * B * A^T, symmetrized. Two cubic calls.
template <typename A, typename B>
Mat<typename A::Scalar> congruence(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  return symmetrize(mul(mul(a, b), a.transpose()));
}

template <typename Scalar>
struct SymEig {
  Vec<Scalar> values;   // ascending
  Mat<Scalar> vectors;  // orthonormal columns
};

/// Eigendecomposition of a symmetric matrix (tridiagonal QL with implicit shifts).
template <typename Derived>
SymEig<typename Derived::Scalar> sym_eig(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() != m.cols()) throw DimensionMismatch("sym_eig: matrix is not square");
  detail::count_cubic();
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> solver(m.derived(), Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) {
    throw ConvergenceFailure("sym_eig: eigensolver did not converge");
  }
  return {solver.eigenvalues(), solver.eigenvectors()};
}

/// V * diag(f(lambda)) * V^T for a decomposition and elementwise function.
template <typename Scalar, typename F>
Mat<Scalar> eig_apply(const SymEig<Scalar>& e, F&& f) {
  Vec<Scalar> fl = e.values.unaryExpr(std::forward<F>(f));
  return symmetrize(mul(e.vectors * fl.asDiagonal(), e.vectors.transpose()));
}

/// SPD matrix with memoized factorizations.
///
/// Construction symmetrizes the input and runs Cholesky; a failed Cholesky
/// (or a pivot below kPivotGuard times the largest diagonal entry) raises
/// NotPositiveDefinite. Copies share one cache, so the eigendecomposition and
/// the square roots are computed at most once per matrix. Cache population is
/// guarded by std::call_once and is safe across threads.
template <typename Scalar>
class SpdPoint {
 public:
  explicit SpdPoint(const Mat<Scalar>& mat) : cache_(std::make_shared<Cache>()) {
    if (mat.rows() != mat.cols() || mat.rows() == 0) {
      throw DimensionMismatch("SpdPoint: matrix must be square and non-empty");
    }
    if (!mat.allFinite()) throw NotPositiveDefinite("SpdPoint: non-finite entries");
    if (relative_asymmetry(mat) > Scalar(kSymmetryTolerance)) {
      throw NotSymmetric("SpdPoint: input is not symmetric");
    }
    cache_->mat = symmetrize(mat);
    cache_->chol = factor(cache_->mat);
  }

  Eigen::Index dim() const { return cache_->mat.rows(); }
  const Mat<Scalar>& mat() const { return cache_->mat; }
  /// Lower-triangular L with L L^T = mat().
  const Mat<Scalar>& chol() const { return cache_->chol; }

  const SymEig<Scalar>& eig() const {
    std::call_once(cache_->eig_once, [this] { cache_->eig = sym_eig(cache_->mat); });
    return cache_->eig;
  }
  const Mat<Scalar>& sqrt() const {
    std::call_once(cache_->sqrt_once, [this] {
      cache_->sqrt = eig_apply(eig(), [](Scalar l) { return std::sqrt(l); });
    });
    return cache_->sqrt;
  }
  const Mat<Scalar>& invsqrt() const {
    std::call_once(cache_->invsqrt_once, [this] {
      cache_->invsqrt = eig_apply(eig(), [](Scalar l) { return Scalar(1) / std::sqrt(l); });
    });
    return cache_->invsqrt;
  }

  /// True when both handles refer to the same cached point.
  bool same_as(const SpdPoint& other) const { return cache_ == other.cache_; }

 private:
  struct Cache {
    Mat<Scalar> mat;
    Mat<Scalar> chol;
    SymEig<Scalar> eig;
    Mat<Scalar> sqrt;
    Mat<Scalar> invsqrt;
    std::once_flag eig_once, sqrt_once, invsqrt_once;
  };

  static Mat<Scalar> factor(const Mat<Scalar>& m) {
    detail::count_cubic();
    Eigen::LLT<Mat<Scalar>, Eigen::Lower> llt(m);
    if (llt.info() != Eigen::Success) {
      throw NotPositiveDefinite("cholesky: non-positive pivot");
    }
    Mat<Scalar> l = llt.matrixL();
    const Scalar min_pivot = l.diagonal().array().square().minCoeff();
    const Scalar max_diag = m.diagonal().cwiseAbs().maxCoeff();
    if (!(min_pivot >= Scalar(kPivotGuard) * max_diag)) {
      std::ostringstream msg;
      msg << "cholesky: pivot " << min_pivot << " below near-singular guard";
      throw NotPositiveDefinite(msg.str());
    }
    return l;
  }

  std::shared_ptr<Cache> cache_;
};

template <typename Scalar>
const Mat<Scalar>& cholesky_factor(const SpdPoint<Scalar>& s) {
  return s.chol();
}

template <typename Scalar>
const Mat<Scalar>& spd_sqrt(const SpdPoint<Scalar>& s) {
  return s.sqrt();
}

template <typename Scalar>
const Mat<Scalar>& spd_invsqrt(const SpdPoint<Scalar>& s) {
  return s.invsqrt();
}

/// Matrix exponential of a symmetric matrix via its eigendecomposition.
template <typename Derived>
Mat<typename Derived::Scalar> sym_expm(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  return eig_apply(sym_eig(symmetrize(m)), [](Scalar l) { return std::exp(l); });
}

/// tr(a b) for symmetric a, b; O(n^2).
template <typename A, typename B>
typename A::Scalar frob_inner(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionMismatch("frob_inner: shapes differ");
  }
  detail::count_quadratic();
  return a.cwiseProduct(b).sum();
}

/// Sigma^{-1} * rhs through two triangular solves with the cached factor.
/// The result is not symmetric in general.
template <typename Scalar, typename Derived>
Mat<Scalar> spd_solve(const SpdPoint<Scalar>& s, const Eigen::MatrixBase<Derived>& rhs) {
  if (rhs.rows() != s.dim()) throw DimensionMismatch("spd_solve: row count differs");
  detail::count_cubic();
  const auto& l = s.chol();
  Mat<Scalar> x = l.template triangularView<Eigen::Lower>().solve(rhs);
  l.transpose().template triangularView<Eigen::Upper>().solveInPlace(x);
  return x;
}

/// L^{-1} * rhs (lower solve with the Cholesky factor). One cubic call.
template <typename Scalar, typename Derived>
Mat<Scalar> chol_lower_solve(const SpdPoint<Scalar>& s, const Eigen::MatrixBase<Derived>& rhs) {
  if (rhs.rows() != s.dim()) throw DimensionMismatch("chol_lower_solve: row count differs");
  detail::count_cubic();
  return s.chol().template triangularView<Eigen::Lower>().solve(rhs);
}

}  // namespace vtf
