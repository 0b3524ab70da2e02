#pragma once

// Gaussian mixture fitting on a product of SPD manifolds.
//
// Each component (mu, Sigma) is lifted to an (n+1)x(n+1) SPD matrix
//   S = [[Sigma + mu mu^T, mu], [mu^T, 1]]
// acting on augmented data y = [x; 1], with surrogate density
//   q(y; S) = sqrt(2 pi) e^{1/2} N_{n+1}(y; 0, S),
// which equals N(x; mu, Sigma) whenever S has the block form above. Mixing
// weights are a softmax over K logits with the last one pinned to zero, so
// the optimisation variable is K SPD blocks plus K-1 free logits.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "vtf/product.hpp"

namespace vtf::gmm {

template <typename Scalar>
struct Dataset {
  Mat<Scalar> points;     // N x n
  Mat<Scalar> augmented;  // N x (n+1), last column identically 1

  static Dataset from_points(Mat<Scalar> x) {
    Dataset d;
    d.augmented.resize(x.rows(), x.cols() + 1);
    d.augmented.leftCols(x.cols()) = x;
    d.augmented.col(x.cols()).setOnes();
    d.points = std::move(x);
    return d;
  }

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }
};

template <typename Scalar>
struct GmmParams {
  Vec<Scalar> weights;
  std::vector<Vec<Scalar>> means;
  std::vector<Mat<Scalar>> covs;

  std::size_t num_components() const { return means.size(); }

  void validate() const {
    const auto k = static_cast<Eigen::Index>(means.size());
    if (k == 0 || weights.size() != k || covs.size() != means.size()) {
      throw DimensionMismatch("GmmParams: component counts differ");
    }
    if ((weights.array() < Scalar(0)).any() || std::abs(weights.sum() - Scalar(1)) > Scalar(1e-12)) {
      throw DimensionMismatch("GmmParams: weights must be a probability vector");
    }
    for (const auto& c : covs) SpdPoint<Scalar> check(c);
  }
};

enum class SeparationLevel { Low, Mid, High };

inline double separation_coefficient(SeparationLevel level) {
  switch (level) {
    case SeparationLevel::Low: return 0.2;
    case SeparationLevel::Mid: return 1.0;
    case SeparationLevel::High: return 5.0;
  }
  return 1.0;
}

inline std::string_view to_string(SeparationLevel level) {
  switch (level) {
    case SeparationLevel::Low: return "low";
    case SeparationLevel::Mid: return "mid";
    case SeparationLevel::High: return "high";
  }
  return "?";
}

inline std::optional<SeparationLevel> parse_separation(std::string_view s) {
  if (s == "low") return SeparationLevel::Low;
  if (s == "mid") return SeparationLevel::Mid;
  if (s == "high") return SeparationLevel::High;
  return std::nullopt;
}

namespace detail {

template <typename Scalar>
Scalar log_sum_exp(const Eigen::Ref<const Vec<Scalar>>& v) {
  const Scalar m = v.maxCoeff();
  if (!std::isfinite(static_cast<double>(m))) return m;
  return m + std::log((v.array() - m).exp().sum());
}

// log of the mixing weights from K-1 free logits (last logit is 0).
template <typename Scalar>
Vec<Scalar> log_weights(const Vec<Scalar>& logits, std::size_t k) {
  Vec<Scalar> full = Vec<Scalar>::Zero(static_cast<Eigen::Index>(k));
  full.head(logits.size()) = logits;
  return full.array() - log_sum_exp<Scalar>(full);
}

template <typename Scalar>
void check_point(const ProductPoint<Scalar>& p, const Dataset<Scalar>& d) {
  if (p.blocks.empty() || p.weights.size() + 1 != static_cast<Eigen::Index>(p.blocks.size())) {
    throw DimensionMismatch("gmm: need K blocks and K-1 logits");
  }
  for (const auto& b : p.blocks) {
    if (b.dim() != d.dim() + 1) throw DimensionMismatch("gmm: block dimension must be n+1");
  }
}

// N x K matrix of log(omega_j) + log q(y_i; S_j).
template <typename Scalar>
Mat<Scalar> joint_log_density(const ProductPoint<Scalar>& p, const Dataset<Scalar>& d) {
  check_point(p, d);
  const auto k = p.blocks.size();
  const Scalar n = Scalar(d.dim());
  const Scalar constant = -Scalar(0.5) * n * std::log(Scalar(2) * std::numbers::pi_v<Scalar>) + Scalar(0.5);
  const Vec<Scalar> lw = log_weights(p.weights, k);

  Mat<Scalar> out(d.size(), static_cast<Eigen::Index>(k));
  for (std::size_t j = 0; j < k; ++j) {
    const auto& s = p.blocks[j];
    const Mat<Scalar> z = chol_lower_solve(s, d.augmented.transpose());  // L^{-1} y_i per column
    const Scalar log_det = Scalar(2) * s.chol().diagonal().array().log().sum();
    out.col(static_cast<Eigen::Index>(j)) =
        (constant - Scalar(0.5) * log_det + lw(static_cast<Eigen::Index>(j))) -
        Scalar(0.5) * z.colwise().squaredNorm().transpose().array();
  }
  return out;
}

}  // namespace detail

/// Negative log-likelihood of the lifted mixture, with log-sum-exp per point.
template <typename Scalar>
Scalar nll_cost(const ProductPoint<Scalar>& p, const Dataset<Scalar>& d) {
  const Mat<Scalar> joint = detail::joint_log_density(p, d);
  Scalar total = Scalar(0);
  for (Eigen::Index i = 0; i < joint.rows(); ++i) {
    total -= detail::log_sum_exp<Scalar>(joint.row(i).transpose());
  }
  return total;
}

/// N x K posterior responsibilities r_ij.
template <typename Scalar>
Mat<Scalar> responsibilities(const ProductPoint<Scalar>& p, const Dataset<Scalar>& d) {
  Mat<Scalar> joint = detail::joint_log_density(p, d);
  for (Eigen::Index i = 0; i < joint.rows(); ++i) {
    const Scalar lse = detail::log_sum_exp<Scalar>(joint.row(i).transpose());
    joint.row(i) = (joint.row(i).array() - lse).exp();
  }
  return joint;
}

/// Euclidean gradient of nll_cost:
///   dS_j      = -1/2 sum_i r_ij (S_j^-1 y_i y_i^T S_j^-1 - S_j^-1)
///   dlogit_j  = -sum_i (r_ij - omega_j),   j < K
template <typename Scalar>
ProductEuclidGrad<Scalar> euclid_grad(const ProductPoint<Scalar>& p, const Dataset<Scalar>& d) {
  const Mat<Scalar> r = responsibilities(p, d);
  const auto k = p.blocks.size();
  const Eigen::Index dim = d.dim() + 1;

  ProductEuclidGrad<Scalar> g;
  g.blocks.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    const auto& s = p.blocks[j];
    const auto col = r.col(static_cast<Eigen::Index>(j));
    // W = sum_i r_ij y_i y_i^T
    const Mat<Scalar> weighted = d.augmented.transpose() * col.asDiagonal() * d.augmented;
    vtf::detail::count_cubic();
    const Mat<Scalar> a = spd_solve(s, weighted);                   // S^-1 W
    const Mat<Scalar> sws = spd_solve(s, a.transpose());            // S^-1 W S^-1
    const Mat<Scalar> s_inv = spd_solve(s, Mat<Scalar>::Identity(dim, dim));
    g.blocks.push_back(symmetrize(Scalar(-0.5) * (sws - col.sum() * s_inv)));
  }

  const Vec<Scalar> omega = detail::log_weights(p.weights, k).array().exp();
  g.weights.resize(p.weights.size());
  for (Eigen::Index j = 0; j < p.weights.size(); ++j) {
    g.weights(j) = -(r.col(j).sum() - Scalar(d.size()) * omega(j));
  }
  return g;
}

/// Cost oracle for the solver.
template <typename Scalar>
class GmmProblem {
 public:
  explicit GmmProblem(Dataset<Scalar> data) : data_(std::move(data)) {}

  Scalar cost(const ProductPoint<Scalar>& p) const { return nll_cost(p, data_); }
  ProductEuclidGrad<Scalar> euclid_grad(const ProductPoint<Scalar>& p) const {
    return gmm::euclid_grad(p, data_);
  }
  const Dataset<Scalar>& data() const { return data_; }

 private:
  Dataset<Scalar> data_;
};

/// Inverse of the lift. With beta = S[n,n]: mu = S[0:n, n] / beta and
/// Sigma = S[0:n, 0:n] - beta mu mu^T.
template <typename Scalar>
GmmParams<Scalar> recover_params(const ProductPoint<Scalar>& p) {
  if (p.blocks.empty() || p.weights.size() + 1 != static_cast<Eigen::Index>(p.blocks.size())) {
    throw DimensionMismatch("recover_params: need K blocks and K-1 logits");
  }
  GmmParams<Scalar> out;
  out.weights = detail::log_weights(p.weights, p.blocks.size()).array().exp();
  for (const auto& b : p.blocks) {
    const Eigen::Index n = b.dim() - 1;
    const auto& s = b.mat();
    const Scalar beta = s(n, n);
    Vec<Scalar> mu = s.col(n).head(n) / beta;
    Mat<Scalar> cov = s.topLeftCorner(n, n) - beta * mu * mu.transpose();
    cov = symmetrize(cov);
    SpdPoint<Scalar> check(cov);  // raises NotPositiveDefinite
    out.means.push_back(std::move(mu));
    out.covs.push_back(std::move(cov));
  }
  return out;
}

/// Forward lift: S_j = [[Sigma_j + mu_j mu_j^T, mu_j], [mu_j^T, 1]],
/// logits_j = log(alpha_j / alpha_K).
template <typename Scalar>
ProductPoint<Scalar> init_point(const GmmParams<Scalar>& params) {
  params.validate();
  const auto k = params.num_components();
  ProductPoint<Scalar> p;
  p.blocks.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    const auto& mu = params.means[j];
    const Eigen::Index n = mu.size();
    Mat<Scalar> s(n + 1, n + 1);
    s.topLeftCorner(n, n) = params.covs[j] + mu * mu.transpose();
    s.col(n).head(n) = mu;
    s.row(n).head(n) = mu.transpose();
    s(n, n) = Scalar(1);
    p.blocks.emplace_back(s);
  }
  const Scalar last = params.weights(static_cast<Eigen::Index>(k) - 1);
  p.weights = (params.weights.head(static_cast<Eigen::Index>(k) - 1).array() / last).log();
  return p;
}

/// Direct mixture negative log-likelihood -sum_i log sum_j alpha_j N(x_i; mu_j, Sigma_j).
template <typename Scalar>
Scalar direct_nll(const GmmParams<Scalar>& params, const Dataset<Scalar>& d) {
  const auto k = params.num_components();
  const Scalar n = Scalar(d.dim());
  Mat<Scalar> joint(d.size(), static_cast<Eigen::Index>(k));
  for (std::size_t j = 0; j < k; ++j) {
    SpdPoint<Scalar> cov(params.covs[j]);
    const Mat<Scalar> centered =
        (d.points.rowwise() - params.means[j].transpose()).transpose();
    const Mat<Scalar> z = chol_lower_solve(cov, centered);
    const Scalar log_det = Scalar(2) * cov.chol().diagonal().array().log().sum();
    joint.col(static_cast<Eigen::Index>(j)) =
        (std::log(params.weights(static_cast<Eigen::Index>(j))) -
         Scalar(0.5) * (n * std::log(Scalar(2) * std::numbers::pi_v<Scalar>) + log_det)) -
        Scalar(0.5) * z.colwise().squaredNorm().transpose().array();
  }
  Scalar total = Scalar(0);
  for (Eigen::Index i = 0; i < joint.rows(); ++i) {
    total -= detail::log_sum_exp<Scalar>(joint.row(i).transpose());
  }
  return total;
}

// ---------------------------------------------------------------------------
// K-means++ initialisation

struct KMeansOptions {
  int lloyd_iterations = 0;  // extra Lloyd rounds after the first hard assignment
};

/// Probability of choosing each point as the next K-means++ center given the
/// already chosen `centers` (squared distance to nearest center, normalised).
template <typename Scalar>
Vec<Scalar> kmeanspp_seed_probabilities(const Dataset<Scalar>& d, const std::vector<Vec<Scalar>>& centers) {
  Vec<Scalar> d2(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    Scalar best = std::numeric_limits<Scalar>::infinity();
    for (const auto& c : centers) best = std::min(best, (d.points.row(i).transpose() - c).squaredNorm());
    d2(i) = best;
  }
  const Scalar total = d2.sum();
  if (!(total > Scalar(0))) return Vec<Scalar>::Constant(d.size(), Scalar(1) / Scalar(d.size()));
  return d2 / total;
}

/// Ridge added to cluster covariances: 1e-6 times the average per-coordinate
/// variance of the data (1e-6 when the data has no spread at all).
template <typename Scalar>
Scalar covariance_ridge(const Dataset<Scalar>& d) {
  const Vec<Scalar> mean = d.points.colwise().mean().transpose();
  const Scalar avg_var =
      (d.points.rowwise() - mean.transpose()).array().square().colwise().mean().mean();
  return avg_var > Scalar(0) ? Scalar(1e-6) * avg_var : Scalar(1e-6);
}

/// K-means++ seeding, one hard assignment pass (plus optional Lloyd rounds),
/// then per-cluster mean, covariance (1/N_j normalisation) + ridge, and
/// weights equal to cluster fractions. Empty clusters are re-seeded at the
/// point farthest from its assigned center.
template <typename Scalar, typename Rng>
GmmParams<Scalar> kmeanspp_init(const Dataset<Scalar>& d, std::size_t k, Rng& rng,
                                const KMeansOptions& options = {}) {
  const auto n_points = static_cast<std::size_t>(d.size());
  if (k == 0 || n_points < k) throw DimensionMismatch("kmeanspp_init: need 1 <= K <= N");

  std::vector<Vec<Scalar>> centers;
  centers.reserve(k);
  std::uniform_int_distribution<std::size_t> first(0, n_points - 1);
  centers.push_back(d.points.row(static_cast<Eigen::Index>(first(rng))).transpose());
  while (centers.size() < k) {
    const Vec<Scalar> prob = kmeanspp_seed_probabilities(d, centers);
    std::discrete_distribution<std::size_t> pick(prob.data(), prob.data() + prob.size());
    centers.push_back(d.points.row(static_cast<Eigen::Index>(pick(rng))).transpose());
  }

  std::vector<std::size_t> label(n_points);
  std::vector<std::size_t> counts(k);
  auto assign = [&] {
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n_points; ++i) {
      Scalar best = std::numeric_limits<Scalar>::infinity();
      for (std::size_t j = 0; j < k; ++j) {
        const Scalar dist = (d.points.row(static_cast<Eigen::Index>(i)).transpose() - centers[j]).squaredNorm();
        if (dist < best) {
          best = dist;
          label[i] = j;
        }
      }
      ++counts[label[i]];
    }
  };
  // An empty cluster takes over the point farthest from its own center,
  // among clusters holding more than one point.
  auto reseed_empty = [&] {
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] != 0) continue;
      std::size_t far = n_points;
      Scalar far_dist = Scalar(-1);
      for (std::size_t i = 0; i < n_points; ++i) {
        if (counts[label[i]] <= 1) continue;
        const Scalar dist =
            (d.points.row(static_cast<Eigen::Index>(i)).transpose() - centers[label[i]]).squaredNorm();
        if (dist > far_dist) {
          far_dist = dist;
          far = i;
        }
      }
      if (far == n_points) break;  // unreachable while N >= K
      --counts[label[far]];
      label[far] = j;
      counts[j] = 1;
      centers[j] = d.points.row(static_cast<Eigen::Index>(far)).transpose();
    }
  };

  assign();
  reseed_empty();
  for (int it = 0; it < options.lloyd_iterations; ++it) {
    for (std::size_t j = 0; j < k; ++j) centers[j].setZero();
    for (std::size_t i = 0; i < n_points; ++i) {
      centers[label[i]] += d.points.row(static_cast<Eigen::Index>(i)).transpose();
    }
    for (std::size_t j = 0; j < k; ++j) centers[j] /= Scalar(counts[j]);
    assign();
    reseed_empty();
  }

  const Eigen::Index dim = d.dim();
  const Scalar ridge = covariance_ridge(d);
  GmmParams<Scalar> params;
  params.weights.resize(static_cast<Eigen::Index>(k));
  for (std::size_t j = 0; j < k; ++j) {
    Vec<Scalar> mean = Vec<Scalar>::Zero(dim);
    for (std::size_t i = 0; i < n_points; ++i) {
      if (label[i] == j) mean += d.points.row(static_cast<Eigen::Index>(i)).transpose();
    }
    mean /= Scalar(counts[j]);
    Mat<Scalar> cov = Mat<Scalar>::Zero(dim, dim);
    for (std::size_t i = 0; i < n_points; ++i) {
      if (label[i] != j) continue;
      const Vec<Scalar> c = d.points.row(static_cast<Eigen::Index>(i)).transpose() - mean;
      cov += c * c.transpose();
    }
    cov /= Scalar(counts[j]);
    cov += ridge * Mat<Scalar>::Identity(dim, dim);
    params.means.push_back(std::move(mean));
    params.covs.push_back(symmetrize(cov));
    params.weights(static_cast<Eigen::Index>(j)) = Scalar(counts[j]) / Scalar(n_points);
  }
  return params;
}

// ---------------------------------------------------------------------------
// Synthetic data

struct SampleOptions {
  double log_eig_halfwidth = 1.0;  // eigenvalues log-uniform in [e^-w, e^w]
  double box_scale = 1.0;          // multiplies the default mean-sampling box
  std::size_t max_trials = 100000;
};

/// Half-width of the box means are drawn from: box_scale * c * sqrt(n e^w) * K^(1/n).
inline double mean_box_halfwidth(std::size_t k, std::size_t n, SeparationLevel sep,
                                 const SampleOptions& opt) {
  const double c = separation_coefficient(sep);
  return opt.box_scale * c * std::sqrt(double(n) * std::exp(opt.log_eig_halfwidth)) *
         std::pow(double(k), 1.0 / double(n));
}

/// True if every pair of means satisfies
/// |mu_i - mu_j| >= c sqrt(n max(lambda_max(Sigma_i), lambda_max(Sigma_j))).
template <typename Scalar>
bool satisfies_separation(const GmmParams<Scalar>& params, SeparationLevel sep) {
  const Scalar c = Scalar(separation_coefficient(sep));
  const auto k = params.num_components();
  std::vector<Scalar> lmax(k);
  for (std::size_t j = 0; j < k; ++j) lmax[j] = sym_eig(params.covs[j]).values.maxCoeff();
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      const Scalar n = Scalar(params.means[a].size());
      const Scalar need = c * std::sqrt(n * std::max(lmax[a], lmax[b]));
      if ((params.means[a] - params.means[b]).norm() < need) return false;
    }
  }
  return true;
}

template <typename Scalar>
struct Sample {
  Dataset<Scalar> data;
  GmmParams<Scalar> truth;
};

/// Draw a K-component mixture in n dimensions and N points from it.
///
/// Covariances: random orthogonal basis (QR of a Gaussian matrix) with
/// log-uniform eigenvalues. Means: sequential rejection sampling in a box
/// until the pairwise separation inequality holds. Components are picked
/// uniformly per point.
template <typename Scalar, typename Rng>
Sample<Scalar> sample_gmm(std::size_t k, std::size_t n, std::size_t n_points, SeparationLevel sep,
                          Rng& rng, const SampleOptions& opt = {}) {
  if (k == 0 || n == 0 || n_points == 0) throw DimensionMismatch("sample_gmm: K, n, N must be positive");
  const auto dim = static_cast<Eigen::Index>(n);
  std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));
  std::uniform_real_distribution<Scalar> log_eig(Scalar(-opt.log_eig_halfwidth),
                                                 Scalar(opt.log_eig_halfwidth));

  GmmParams<Scalar> truth;
  std::vector<Scalar> lmax;
  for (std::size_t j = 0; j < k; ++j) {
    Mat<Scalar> g(dim, dim);
    for (Eigen::Index c = 0; c < dim; ++c)
      for (Eigen::Index r = 0; r < dim; ++r) g(r, c) = normal(rng);
    const Mat<Scalar> q = Eigen::HouseholderQR<Mat<Scalar>>(g).householderQ();
    Vec<Scalar> lambda(dim);
    for (Eigen::Index i = 0; i < dim; ++i) lambda(i) = std::exp(log_eig(rng));
    truth.covs.push_back(symmetrize(q * lambda.asDiagonal() * q.transpose()));
    lmax.push_back(lambda.maxCoeff());
  }

  const Scalar c = Scalar(separation_coefficient(sep));
  const Scalar half = Scalar(mean_box_halfwidth(k, n, sep, opt));
  std::uniform_real_distribution<Scalar> box(-half, half);
  std::size_t trials = 0;
  for (std::size_t j = 0; j < k; ++j) {
    while (true) {
      if (++trials > opt.max_trials) {
        throw SeparationUnsatisfiable("sample_gmm: rejection budget exhausted; enlarge box_scale");
      }
      Vec<Scalar> mu(dim);
      for (Eigen::Index i = 0; i < dim; ++i) mu(i) = box(rng);
      bool ok = true;
      for (std::size_t prev = 0; prev < j && ok; ++prev) {
        const Scalar need = c * std::sqrt(Scalar(n) * std::max(lmax[prev], lmax[j]));
        ok = (mu - truth.means[prev]).norm() >= need;
      }
      if (ok) {
        truth.means.push_back(std::move(mu));
        break;
      }
    }
  }
  truth.weights = Vec<Scalar>::Constant(static_cast<Eigen::Index>(k), Scalar(1) / Scalar(k));

  std::vector<Mat<Scalar>> factors;
  for (const auto& cov : truth.covs) factors.push_back(SpdPoint<Scalar>(cov).chol());
  std::uniform_int_distribution<std::size_t> component(0, k - 1);
  Mat<Scalar> x(static_cast<Eigen::Index>(n_points), dim);
  Vec<Scalar> z(dim);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const std::size_t j = component(rng);
    for (Eigen::Index t = 0; t < dim; ++t) z(t) = normal(rng);
    x.row(i) = (truth.means[j] + factors[j] * z).transpose();
  }
  return {Dataset<Scalar>::from_points(std::move(x)), std::move(truth)};
}

// ---------------------------------------------------------------------------
// CSV: one point per row, no header.

template <typename Scalar>
void write_csv(std::ostream& os, const Dataset<Scalar>& d) {
  os.precision(std::numeric_limits<Scalar>::max_digits10);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    for (Eigen::Index j = 0; j < d.dim(); ++j) {
      if (j > 0) os << ',';
      os << d.points(i, j);
    }
    os << '\n';
  }
}

template <typename Scalar>
Dataset<Scalar> read_csv(std::istream& is) {
  std::vector<std::vector<Scalar>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<Scalar> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(static_cast<Scalar>(std::stod(cell)));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw DimensionMismatch("read_csv: ragged rows");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DimensionMismatch("read_csv: no data");
  Mat<Scalar> x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return Dataset<Scalar>::from_points(std::move(x));
}

}  // namespace vtf::gmm
