#pragma once

// Independent reference computations for the tests. None of these call the
// library's kernels: they use plain Eigen products and inverses only.

#include <cmath>
#include <random>

#include <Eigen/Dense>

namespace oracle {

using M = Eigen::MatrixXd;
using V = Eigen::VectorXd;

inline M random_sym(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> g;
  M a(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) a(i, j) = g(rng);
  return scale * (a + a.transpose()) / 2.0;
}

/// Random SPD matrix with eigenvalues roughly in [0.5, 0.5 + n].
inline M random_spd(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> g;
  M a(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) a(i, j) = g(rng);
  M s = a * a.transpose() / double(n) + 0.5 * M::Identity(n, n);
  return (s + s.transpose()) / 2.0;
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
/// Works for general (non-symmetric) square matrices.
inline M taylor_expm(const M& a) {
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = int(std::ceil(std::log2(norm / 0.5)));
  const M scaled = a / std::ldexp(1.0, squarings);
  M term = M::Identity(a.rows(), a.cols());
  M sum = term;
  for (int k = 1; k <= 30; ++k) {
    term = term * scaled / double(k);
    sum += term;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

/// Principal square root of an SPD matrix by Denman-Beavers iteration.
inline M db_sqrtm(const M& a) {
  M y = a, z = M::Identity(a.rows(), a.cols());
  for (int i = 0; i < 100; ++i) {
    const M y_next = 0.5 * (y + z.inverse());
    const M z_next = 0.5 * (z + y.inverse());
    const double change = (y_next - y).norm();
    y = y_next;
    z = z_next;
    if (change <= 1e-15 * y.norm()) break;
  }
  return (y + y.transpose()) / 2.0;
}

/// tr(A B) through an explicit dense product.
inline double trace_product(const M& a, const M& b) { return (a * b).trace(); }

/// Column-stacked vec(X).
inline V vec(const M& x) { return Eigen::Map<const V>(x.data(), x.size()); }

inline M unvec(const V& v, Eigen::Index n) { return Eigen::Map<const M>(v.data(), n, n); }

/// One BFGS inverse-Hessian update H1 = V^T H0 V + rho s s^T with
/// V = I - rho y s^T and rho = 1 / (y^T s), as a dense matrix.
inline M dense_bfgs_inverse(const M& h0, const V& s, const V& y) {
  const double rho = 1.0 / y.dot(s);
  const M v = M::Identity(s.size(), s.size()) - rho * y * s.transpose();
  return v.transpose() * h0 * v + rho * s * s.transpose();
}

/// Central difference of f at t = 0.
template <typename F>
double central_difference(F&& f, double h) {
  return (f(h) - f(-h)) / (2.0 * h);
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

inline double rel_err(const M& a, const M& b) {
  const double nb = b.norm();
  return nb == 0.0 ? a.norm() : (a - b).norm() / nb;
}

}  // namespace oracle
