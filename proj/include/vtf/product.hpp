#pragma once

// Product of K SPD manifolds with a Euclidean vector. The Euclidean part uses
// the standard inner product, identity transport and vector addition as its
// step; every SPD block follows manifold.hpp blockwise.

#include <type_traits>
#include <vector>

#include "vtf/manifold.hpp"

namespace vtf {

template <typename Scalar>
struct ProductPoint {
  std::vector<SpdPoint<Scalar>> blocks;
  Vec<Scalar> weights;

  std::size_t num_blocks() const { return blocks.size(); }
};

template <typename Scalar>
struct ProductTangent {
  std::vector<TangentVec<Scalar>> blocks;
  Vec<Scalar> weights;

  ProductTangent& operator+=(const ProductTangent& o) { return axpy(Scalar(1), o); }
  ProductTangent& operator-=(const ProductTangent& o) { return axpy(Scalar(-1), o); }
  ProductTangent& operator*=(Scalar a) {
    for (auto& b : blocks) b *= a;
    weights *= a;
    return *this;
  }
  ProductTangent& axpy(Scalar a, const ProductTangent& x) {
    check_shape(*this, x);
    for (std::size_t j = 0; j < blocks.size(); ++j) blocks[j].axpy(a, x.blocks[j]);
    weights += a * x.weights;
    return *this;
  }

  friend ProductTangent operator+(ProductTangent a, const ProductTangent& b) { return a += b; }
  friend ProductTangent operator-(ProductTangent a, const ProductTangent& b) { return a -= b; }
  friend ProductTangent operator*(Scalar s, ProductTangent a) { return a *= s; }
  friend ProductTangent operator-(ProductTangent a) { return a *= Scalar(-1); }

  static void check_shape(const ProductTangent& a, const ProductTangent& b) {
    if (a.blocks.size() != b.blocks.size() || a.weights.size() != b.weights.size()) {
      throw DimensionMismatch("product tangents have different shapes");
    }
  }
};

/// Euclidean gradient of a function on the product: one matrix per block.
template <typename Scalar>
struct ProductEuclidGrad {
  std::vector<Mat<Scalar>> blocks;
  Vec<Scalar> weights;
};

namespace detail {
template <typename Scalar>
void check_shape(const ProductPoint<Scalar>& p, std::size_t blocks, Eigen::Index weights) {
  if (p.blocks.size() != blocks || p.weights.size() != weights) {
    throw DimensionMismatch("product point and tangent have different shapes");
  }
}
}  // namespace detail

template <typename Scalar>
ProductTangent<Scalar> product_zero(const ProductPoint<Scalar>& p, MappingMode mode) {
  ProductTangent<Scalar> out;
  out.blocks.reserve(p.blocks.size());
  for (const auto& b : p.blocks) out.blocks.push_back(TangentVec<Scalar>::zero(b, mode));
  out.weights = Vec<Scalar>::Zero(p.weights.size());
  return out;
}

template <typename Scalar>
Scalar product_metric(const ProductTangent<Scalar>& a, const ProductTangent<Scalar>& b) {
  ProductTangent<Scalar>::check_shape(a, b);
  Scalar sum = a.weights.dot(b.weights);
  for (std::size_t j = 0; j < a.blocks.size(); ++j) sum += metric(a.blocks[j], b.blocks[j]);
  return sum;
}

template <typename Scalar>
Scalar product_norm(const ProductTangent<Scalar>& a) {
  return std::sqrt(product_metric(a, a));
}

template <typename Scalar>
ProductTangent<Scalar> product_egrad_to_rgrad(const ProductPoint<Scalar>& p,
                                              const ProductEuclidGrad<Scalar>& g, MappingMode mode) {
  detail::check_shape(p, g.blocks.size(), g.weights.size());
  ProductTangent<Scalar> out;
  out.blocks.reserve(p.blocks.size());
  for (std::size_t j = 0; j < p.blocks.size(); ++j) {
    out.blocks.push_back(egrad_to_rgrad(p.blocks[j], g.blocks[j], mode));
  }
  out.weights = g.weights;
  return out;
}

/// Apply the configured step rule blockwise; weights move by vector addition.
template <typename Scalar>
ProductPoint<Scalar> product_step(const ProductTangent<Scalar>& xi, const ProductPoint<Scalar>& p,
                                  StepRule rule) {
  detail::check_shape(p, xi.blocks.size(), xi.weights.size());
  ProductPoint<Scalar> out;
  out.blocks.reserve(p.blocks.size());
  for (std::size_t j = 0; j < p.blocks.size(); ++j) {
    if (!xi.blocks[j].base().same_as(p.blocks[j])) {
      throw BaseMismatch("product_step: tangent is not based at the point");
    }
    out.blocks.push_back(step(xi.blocks[j], rule));
  }
  out.weights = p.weights + xi.weights;
  return out;
}

template <typename Scalar>
ProductTangent<Scalar> product_transport(const ProductPoint<Scalar>& to, const ProductTangent<Scalar>& xi,
                                         ClassicalTransport variant = ClassicalTransport::EigenRoot) {
  detail::check_shape(to, xi.blocks.size(), xi.weights.size());
  ProductTangent<Scalar> out;
  out.blocks.reserve(xi.blocks.size());
  for (std::size_t j = 0; j < xi.blocks.size(); ++j) {
    out.blocks.push_back(transport(to.blocks[j], xi.blocks[j], variant));
  }
  out.weights = xi.weights;
  return out;
}

template <typename Scalar>
ProductTangent<Scalar> product_adjoint_transport(const ProductPoint<Scalar>& to,
                                                 const ProductTangent<Scalar>& eta,
                                                 ClassicalTransport variant = ClassicalTransport::EigenRoot) {
  detail::check_shape(to, eta.blocks.size(), eta.weights.size());
  ProductTangent<Scalar> out;
  out.blocks.reserve(eta.blocks.size());
  for (std::size_t j = 0; j < eta.blocks.size(); ++j) {
    out.blocks.push_back(adjoint_transport(to.blocks[j], eta.blocks[j], variant));
  }
  out.weights = eta.weights;
  return out;
}

/// Represent classical block directions (plus Euclidean weights) in `mode`.
template <typename Scalar>
ProductTangent<Scalar> product_map(const ProductPoint<Scalar>& p, const std::vector<Mat<Scalar>>& blocks,
                                   const std::type_identity_t<Vec<Scalar>>& weights, MappingMode mode) {
  detail::check_shape(p, blocks.size(), weights.size());
  ProductTangent<Scalar> out;
  out.blocks.reserve(blocks.size());
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    out.blocks.push_back(map_tangent(p.blocks[j], blocks[j], mode));
  }
  out.weights = weights;
  return out;
}

template <typename Scalar>
std::vector<Mat<Scalar>> product_unmap(const ProductTangent<Scalar>& xi) {
  std::vector<Mat<Scalar>> out;
  out.reserve(xi.blocks.size());
  for (const auto& b : xi.blocks) out.push_back(unmap_tangent(b));
  return out;
}

/// True when every block of `xi` is based at the matching block of `p`.
template <typename Scalar>
bool based_at(const ProductTangent<Scalar>& xi, const ProductPoint<Scalar>& p) {
  if (xi.blocks.size() != p.blocks.size()) return false;
  for (std::size_t j = 0; j < p.blocks.size(); ++j) {
    if (!xi.blocks[j].base().same_as(p.blocks[j])) return false;
  }
  return true;
}

}  // namespace vtf
