#pragma once

// Operators of the affine-invariant SPD manifold in three tangent
// representations:
//
//   Classical    xi                               metric tr(S^-1 xi S^-1 eta)
//   InverseSqrt  xi' = S^{-1/2} xi S^{-1/2}       metric tr(xi' eta')
//   Cholesky     xi' = L^{-1} xi L^{-T}           metric tr(xi' eta')
//
// In the two mapped representations vector transport and its adjoint are
// the identity on the stored value; they only rebase the vector.

#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>

#include "vtf/symkernel.hpp"

namespace vtf {

enum class MappingMode { Classical, InverseSqrt, Cholesky };

/// Which of the two classical transports to use (mapped modes ignore this).
///   EigenRoot:      E = S2^{1/2} S1^{-1/2}  (what InverseSqrt reduces)
///   CholeskyFactor: E = L2 L1^{-1}          (what Cholesky reduces)
enum class ClassicalTransport { EigenRoot, CholeskyFactor };

enum class StepRule { ExpMap, TaylorRetraction };

inline std::string_view to_string(MappingMode mode) {
  switch (mode) {
    case MappingMode::Classical: return "classical";
    case MappingMode::InverseSqrt: return "isr";
    case MappingMode::Cholesky: return "cholesky";
  }
  return "?";
}

inline std::string_view to_string(StepRule rule) {
  return rule == StepRule::ExpMap ? "exp" : "taylor";
}

inline std::optional<MappingMode> parse_mode(std::string_view s) {
  if (s == "classical" || s == "rlbfgs") return MappingMode::Classical;
  if (s == "isr" || s == "inverse_sqrt") return MappingMode::InverseSqrt;
  if (s == "cholesky" || s == "chol") return MappingMode::Cholesky;
  return std::nullopt;
}

inline std::optional<StepRule> parse_step_rule(std::string_view s) {
  if (s == "exp" || s == "expm" || s == "exp_map") return StepRule::ExpMap;
  if (s == "taylor" || s == "retraction") return StepRule::TaylorRetraction;
  return std::nullopt;
}

inline constexpr MappingMode kAllModes[] = {MappingMode::InverseSqrt, MappingMode::Cholesky,
                                            MappingMode::Classical};

/// A symmetric matrix in one representation at one base point.
///
/// Arithmetic between vectors requires the same mode and the same base
/// (checked by identity of the shared SpdPoint cache). Moving a vector to a
/// different base is only possible through transport() or rebased().
template <typename Scalar>
class TangentVec {
 public:
  TangentVec(SpdPoint<Scalar> base, const Mat<Scalar>& value, MappingMode mode)
      : base_(std::move(base)), mode_(mode) {
    if (value.rows() != base_.dim() || value.cols() != base_.dim()) {
      throw DimensionMismatch("TangentVec: value and base dimensions differ");
    }
    if (relative_asymmetry(value) > Scalar(kSymmetryTolerance)) {
      throw NotSymmetric("TangentVec: value is not symmetric");
    }
    value_ = symmetrize(value);
  }

  static TangentVec zero(const SpdPoint<Scalar>& base, MappingMode mode) {
    return TangentVec(base, Mat<Scalar>::Zero(base.dim(), base.dim()), mode, Trusted{});
  }

  const Mat<Scalar>& value() const { return value_; }
  MappingMode mode() const { return mode_; }
  const SpdPoint<Scalar>& base() const { return base_; }
  Eigen::Index dim() const { return value_.rows(); }

  /// Same value, new base. Only meaningful where transport is the identity.
  TangentVec rebased(const SpdPoint<Scalar>& base) const {
    if (base.dim() != dim()) throw DimensionMismatch("rebased: dimension differs");
    return TangentVec(base, value_, mode_, Trusted{});
  }

  /// Same base and mode, new value (caller guarantees symmetry).
  TangentVec with_value(Mat<Scalar> value) const {
    return TangentVec(base_, std::move(value), mode_, Trusted{});
  }

  TangentVec& operator+=(const TangentVec& o) {
    check_compatible(*this, o);
    value_ += o.value_;
    return *this;
  }
  TangentVec& operator-=(const TangentVec& o) {
    check_compatible(*this, o);
    value_ -= o.value_;
    return *this;
  }
  TangentVec& operator*=(Scalar a) {
    value_ *= a;
    return *this;
  }
  /// this += a * x
  TangentVec& axpy(Scalar a, const TangentVec& x) {
    check_compatible(*this, x);
    value_ += a * x.value_;
    return *this;
  }

  friend TangentVec operator+(TangentVec a, const TangentVec& b) { return a += b; }
  friend TangentVec operator-(TangentVec a, const TangentVec& b) { return a -= b; }
  friend TangentVec operator*(Scalar s, TangentVec a) { return a *= s; }
  friend TangentVec operator-(TangentVec a) { return a *= Scalar(-1); }

  static void check_compatible(const TangentVec& a, const TangentVec& b) {
    if (a.mode_ != b.mode_) throw ModeMismatch("tangent vectors in different representations");
    if (!a.base_.same_as(b.base_)) throw BaseMismatch("tangent vectors at different base points");
  }

 private:
  struct Trusted {};
  TangentVec(SpdPoint<Scalar> base, Mat<Scalar> value, MappingMode mode, Trusted)
      : base_(std::move(base)), value_(std::move(value)), mode_(mode) {}

  SpdPoint<Scalar> base_;
  Mat<Scalar> value_;
  MappingMode mode_;
};

/// Riemannian metric in the vectors' own representation.
template <typename Scalar>
Scalar metric(const TangentVec<Scalar>& xi, const TangentVec<Scalar>& eta) {
  TangentVec<Scalar>::check_compatible(xi, eta);
  if (xi.mode() == MappingMode::Classical) {
    const Mat<Scalar> a = spd_solve(xi.base(), xi.value());
    const Mat<Scalar> b = spd_solve(xi.base(), eta.value());
    // tr(A B) without forming the product.
    detail::count_quadratic();
    return a.cwiseProduct(b.transpose()).sum();
  }
  return frob_inner(xi.value(), eta.value());
}

template <typename Scalar>
Scalar norm(const TangentVec<Scalar>& xi) {
  return std::sqrt(metric(xi, xi));
}

namespace detail {
// L^{-1} X L^{-T} for symmetric X.
template <typename Scalar>
Mat<Scalar> chol_whiten(const SpdPoint<Scalar>& s, const Mat<Scalar>& x) {
  const Mat<Scalar> y = chol_lower_solve(s, x);
  return symmetrize(chol_lower_solve(s, y.transpose()));
}
}  // namespace detail

/// Represent the classical tangent vector `xi` at `s` in `mode`.
template <typename Scalar>
TangentVec<Scalar> map_tangent(const SpdPoint<Scalar>& s, const std::type_identity_t<Mat<Scalar>>& xi, MappingMode mode) {
  if (xi.rows() != s.dim() || xi.cols() != s.dim()) {
    throw DimensionMismatch("map_tangent: dimension differs");
  }
  switch (mode) {
    case MappingMode::Classical: return TangentVec<Scalar>(s, xi, mode);
    case MappingMode::InverseSqrt: return TangentVec<Scalar>(s, congruence(s.invsqrt(), xi), mode);
    case MappingMode::Cholesky: return TangentVec<Scalar>(s, detail::chol_whiten(s, xi), mode);
  }
  throw ModeMismatch("map_tangent: unknown mode");
}

/// Classical value of a tangent vector in any representation.
template <typename Scalar>
Mat<Scalar> unmap_tangent(const TangentVec<Scalar>& xi) {
  const auto& s = xi.base();
  switch (xi.mode()) {
    case MappingMode::Classical: return xi.value();
    case MappingMode::InverseSqrt: return congruence(s.sqrt(), xi.value());
    case MappingMode::Cholesky: return congruence(s.chol(), xi.value());
  }
  throw ModeMismatch("unmap_tangent: unknown mode");
}

/// Riemannian gradient from the Euclidean gradient G:  1/2 A (G + G^T) A^T with
/// A = S (classical), S^{1/2} (inverse sqrt) or L^T (Cholesky).
template <typename Scalar, typename Derived>
TangentVec<Scalar> egrad_to_rgrad(const SpdPoint<Scalar>& s, const Eigen::MatrixBase<Derived>& egrad,
                                  MappingMode mode) {
  if (egrad.rows() != s.dim() || egrad.cols() != s.dim()) {
    throw DimensionMismatch("egrad_to_rgrad: dimension differs");
  }
  const Mat<Scalar> g = symmetrize(egrad);
  switch (mode) {
    case MappingMode::Classical: return TangentVec<Scalar>(s, congruence(s.mat(), g), mode);
    case MappingMode::InverseSqrt: return TangentVec<Scalar>(s, congruence(s.sqrt(), g), mode);
    case MappingMode::Cholesky:
      return TangentVec<Scalar>(s, congruence(s.chol().transpose(), g), mode);
  }
  throw ModeMismatch("egrad_to_rgrad: unknown mode");
}

/// Geodesic endpoint Exp_S(xi).
template <typename Scalar>
SpdPoint<Scalar> exp_map(const TangentVec<Scalar>& xi) {
  const auto& s = xi.base();
  switch (xi.mode()) {
    case MappingMode::Classical: {
      const Mat<Scalar> whitened = congruence(s.invsqrt(), xi.value());
      return SpdPoint<Scalar>(congruence(s.sqrt(), sym_expm(whitened)));
    }
    case MappingMode::InverseSqrt:
      return SpdPoint<Scalar>(congruence(s.sqrt(), sym_expm(xi.value())));
    case MappingMode::Cholesky:
      // S exp(L^{-T} xi' L^T) = L L^T L^{-T} exp(xi') L^T = L exp(xi') L^T
      return SpdPoint<Scalar>(congruence(s.chol(), sym_expm(xi.value())));
  }
  throw ModeMismatch("exp_map: unknown mode");
}

/// Second-order Taylor approximation of the exponential map:
/// S + xi + 1/2 xi S^{-1} xi, which stays positive definite.
template <typename Scalar>
SpdPoint<Scalar> retract(const TangentVec<Scalar>& xi) {
  const auto& s = xi.base();
  const Eigen::Index n = s.dim();
  switch (xi.mode()) {
    case MappingMode::Classical: {
      const Mat<Scalar> quad = mul(xi.value(), spd_solve(s, xi.value()));
      return SpdPoint<Scalar>(symmetrize(s.mat() + xi.value() + Scalar(0.5) * quad));
    }
    case MappingMode::InverseSqrt: {
      Mat<Scalar> inner = Mat<Scalar>::Identity(n, n) + xi.value();
      inner += Scalar(0.5) * mul(xi.value(), xi.value());
      return SpdPoint<Scalar>(congruence(s.sqrt(), inner));
    }
    case MappingMode::Cholesky: {
      // 0.5 S + 0.5 Psi Psi^T with Psi = L (I + xi')
      const Mat<Scalar> psi = mul(s.chol(), Mat<Scalar>::Identity(n, n) + xi.value());
      return SpdPoint<Scalar>(
          symmetrize(Scalar(0.5) * s.mat() + Scalar(0.5) * mul(psi, psi.transpose())));
    }
  }
  throw ModeMismatch("retract: unknown mode");
}

template <typename Scalar>
SpdPoint<Scalar> step(const TangentVec<Scalar>& xi, StepRule rule) {
  return rule == StepRule::ExpMap ? exp_map(xi) : retract(xi);
}

/// Vector transport of `xi` (based at S1) to `to` (S2).
template <typename Scalar>
TangentVec<Scalar> transport(const SpdPoint<Scalar>& to, const TangentVec<Scalar>& xi,
                             ClassicalTransport variant = ClassicalTransport::EigenRoot) {
  if (to.dim() != xi.dim()) throw DimensionMismatch("transport: dimension differs");
  if (xi.mode() != MappingMode::Classical) return xi.rebased(to);
  const auto& from = xi.base();
  if (from.same_as(to)) return xi;
  if (variant == ClassicalTransport::EigenRoot) {
    const Mat<Scalar> e = mul(to.sqrt(), from.invsqrt());
    return TangentVec<Scalar>(to, congruence(e, xi.value()), xi.mode());
  }
  return TangentVec<Scalar>(to, congruence(to.chol(), detail::chol_whiten(from, xi.value())),
                            xi.mode());
}

/// Adjoint of transport(S1 -> S2), applied to `eta` based at S2; returns a
/// vector at `to` (S1) satisfying g_S1(xi, T* eta) = g_S2(T xi, eta).
///
/// For either classical variant the transport E xi E^T is an isometry, so the
/// adjoint is its inverse E^{-1} eta E^{-T}:
///   EigenRoot:      E^{-1} = S1^{1/2} S2^{-1/2}
///   CholeskyFactor: E^{-1} = L1 L2^{-1}
template <typename Scalar>
TangentVec<Scalar> adjoint_transport(const SpdPoint<Scalar>& to, const TangentVec<Scalar>& eta,
                                     ClassicalTransport variant = ClassicalTransport::EigenRoot) {
  if (to.dim() != eta.dim()) throw DimensionMismatch("adjoint_transport: dimension differs");
  if (eta.mode() != MappingMode::Classical) return eta.rebased(to);
  const auto& from = eta.base();
  if (from.same_as(to)) return eta;
  if (variant == ClassicalTransport::EigenRoot) {
    const Mat<Scalar> e_inv = mul(to.sqrt(), from.invsqrt());
    return TangentVec<Scalar>(to, congruence(e_inv, eta.value()), eta.mode());
  }
  return TangentVec<Scalar>(to, congruence(to.chol(), detail::chol_whiten(from, eta.value())),
                            eta.mode());
}

}  // namespace vtf
