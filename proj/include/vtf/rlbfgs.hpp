#pragma once

// Riemannian LBFGS on a product of SPD manifolds. With a mapped tangent
// representation (InverseSqrt or Cholesky) every transport in the loop is the
// identity and every metric is a Frobenius inner product, so the direction
// recursion performs no cubic kernel calls at all.

#include <chrono>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "vtf/product.hpp"

namespace vtf {

enum class Termination { Converged, MaxIters, LineSearchFailed };

inline std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::Converged: return "Converged";
    case Termination::MaxIters: return "MaxIters";
    case Termination::LineSearchFailed: return "LineSearchFailed";
  }
  return "?";
}

struct SolverConfig {
  std::size_t memory_window = 30;
  std::size_t max_iters = 1500;
  double grad_tol = 1e-5;  // on the norm in the mode's own metric
  double c1 = 0.1;
  double c2 = 0.9;
  std::size_t max_linesearch_evals = 50;
  double min_step = 1e-16;
  MappingMode mode = MappingMode::InverseSqrt;
  StepRule step_rule = StepRule::ExpMap;
  double curvature_guard = 1e-12;
  bool strong_wolfe = false;
  ClassicalTransport classical_transport = ClassicalTransport::EigenRoot;
  // Armijo tolerance for cost rounding: f_new <= f0 + c1 alpha g0 + armijo_slack * max(1, |f0|).
  double armijo_slack = 1e-14;

  void validate() const {
    if (!(0.0 < c1 && c1 < c2 && c2 < 1.0)) throw ConfigError("need 0 < c1 < c2 < 1");
    if (memory_window == 0) throw ConfigError("memory_window must be positive");
    if (max_linesearch_evals == 0) throw ConfigError("max_linesearch_evals must be positive");
    if (!(armijo_slack >= 0.0)) throw ConfigError("armijo_slack must be non-negative");
    if (!(grad_tol >= 0.0)) throw ConfigError("grad_tol must be non-negative");
    if (!(min_step > 0.0)) throw ConfigError("min_step must be positive");
    if (!(curvature_guard >= 0.0)) throw ConfigError("curvature_guard must be non-negative");
  }
};

/// One stored (s, y) pair with its cached metrics. Both vectors share a base.
template <typename Scalar>
struct MemoryPair {
  ProductTangent<Scalar> s;
  ProductTangent<Scalar> y;
  Scalar g_sy;
  Scalar g_ss;

  static MemoryPair make(ProductTangent<Scalar> s, ProductTangent<Scalar> y) {
    const Scalar sy = product_metric(s, y);
    const Scalar ss = product_metric(s, s);
    return {std::move(s), std::move(y), sy, ss};
  }
};

template <typename Scalar>
struct H0Scale {
  Scalar value;

  explicit H0Scale(Scalar v) : value(v) {
    if (!(v > Scalar(0)) || !std::isfinite(static_cast<double>(v))) {
      throw ConfigError("H0 scale must be positive and finite");
    }
  }
};

template <typename Scalar>
struct SolverStats {
  std::size_t iterations = 0;
  double wall_time = 0.0;
  double per_iter_time = 0.0;
  Scalar final_cost = Scalar(0);
  Scalar final_grad_norm = Scalar(0);
  std::vector<Scalar> cost_trace;
  std::uint64_t cubic_calls_in_recursion = 0;
  KernelCounters total_counters;
  std::size_t linesearch_evals = 0;
  std::size_t memory_resets = 0;
  Termination termination = Termination::MaxIters;
};

struct IterationInfo {
  std::size_t iteration;
  double cost;
  double grad_norm;
  double elapsed_s;
};

using ProgressCallback = std::function<void(const IterationInfo&)>;

/// Anything exposing a cost and a Euclidean gradient on the product manifold.
template <typename P, typename Scalar>
concept ProductCostFunction = requires(const P& problem, const ProductPoint<Scalar>& x) {
  { problem.cost(x) } -> std::convertible_to<Scalar>;
  { problem.euclid_grad(x) } -> std::same_as<ProductEuclidGrad<Scalar>>;
};

namespace detail {

template <typename Scalar>
ProductPoint<Scalar> base_of(const ProductTangent<Scalar>& v) {
  ProductPoint<Scalar> p;
  p.blocks.reserve(v.blocks.size());
  for (const auto& b : v.blocks) p.blocks.push_back(b.base());
  p.weights = Vec<Scalar>::Zero(v.weights.size());
  return p;
}

template <typename Scalar>
bool same_base(const ProductTangent<Scalar>& a, const ProductTangent<Scalar>& b) {
  if (a.blocks.size() != b.blocks.size()) return false;
  for (std::size_t j = 0; j < a.blocks.size(); ++j) {
    if (!a.blocks[j].base().same_as(b.blocks[j].base())) return false;
  }
  return true;
}

// H_level p, where H_0 = h0 * I and H_level uses memory[0 .. level).
template <typename Scalar>
ProductTangent<Scalar> apply_inverse_hessian(const ProductTangent<Scalar>& p,
                                             std::span<const MemoryPair<Scalar>> memory,
                                             std::size_t level, Scalar h0, Scalar curvature_guard,
                                             ClassicalTransport variant) {
  if (level == 0) return h0 * p;
  const MemoryPair<Scalar>& pair = memory[level - 1];

  if (!same_base(p, pair.s)) {
    // Pull p back into the pair's tangent space, apply, push forward again.
    const ProductTangent<Scalar> pulled =
        product_adjoint_transport(base_of(pair.s), p, variant);
    const ProductTangent<Scalar> r =
        apply_inverse_hessian(pulled, memory, level, h0, curvature_guard, variant);
    return product_transport(base_of(p), r, variant);
  }

  if (!(pair.g_sy > curvature_guard * pair.g_ss)) {
    throw CurvatureBreakdown("stored pair violates g(s,y) > guard * g(s,s)");
  }
  const Scalar rho = Scalar(1) / pair.g_sy;
  const Scalar sp = product_metric(pair.s, p);

  ProductTangent<Scalar> p_tilde = p;
  p_tilde.axpy(-rho * sp, pair.y);

  ProductTangent<Scalar> p_hat =
      apply_inverse_hessian(p_tilde, memory, level - 1, h0, curvature_guard, variant);

  const Scalar yp = product_metric(pair.y, p_hat);
  p_hat.axpy(rho * (sp - yp), pair.s);
  return p_hat;
}

}  // namespace detail

/// Apply the limited-memory inverse Hessian approximation to `p`.
///
/// `memory` is ordered oldest to newest; the newest `depth` pairs are used.
/// At each level (pair s, y with rho = 1 / g(y, s)):
///   p~ = p - rho g(s, p) y
///   p^ = T( H_{level-1} T*(p~) )
///   return p^ - rho g(y, p^) s + rho g(s, p) s
/// and the innermost level returns h0 * p. Transports are inserted whenever
/// the vector and the pair live at different base points; in mapped modes
/// they are identities.
template <typename Scalar>
ProductTangent<Scalar> get_direction(const ProductTangent<Scalar>& p,
                                     std::span<const MemoryPair<Scalar>> memory, std::size_t depth,
                                     H0Scale<Scalar> h0, Scalar curvature_guard = Scalar(1e-12),
                                     ClassicalTransport variant = ClassicalTransport::EigenRoot) {
  if (depth > memory.size()) throw DimensionMismatch("get_direction: depth exceeds memory");
  return detail::apply_inverse_hessian(p, memory.subspan(memory.size() - depth), depth, h0.value,
                                       curvature_guard, variant);
}

enum class LineSearchStatus { Ok, NonDescentDirection, Failed };

template <typename Scalar>
struct LineSearchResult {
  LineSearchStatus status = LineSearchStatus::Failed;
  Scalar alpha = Scalar(0);
  std::optional<ProductPoint<Scalar>> point;
  Scalar cost = std::numeric_limits<Scalar>::quiet_NaN();
  std::optional<ProductTangent<Scalar>> grad;  // Riemannian gradient at `point`
  std::size_t evals = 0;
};

/// Bracket-and-bisect line search for the (weak, or optionally strong) Wolfe
/// conditions along the step rule's curve R(alpha * xi):
///   f(R(alpha xi)) <= f0 + c1 alpha g0
///   g(grad f(R(alpha xi)), T xi) >= c2 g0
/// Starts at alpha = 1 and doubles until the upper bracket is found.
template <typename Scalar, ProductCostFunction<Scalar> Problem>
LineSearchResult<Scalar> wolfe_linesearch(const Problem& problem, const ProductPoint<Scalar>& x,
                                          const ProductTangent<Scalar>& xi, Scalar f0, Scalar g0,
                                          const SolverConfig& cfg) {
  LineSearchResult<Scalar> out;
  if (!(g0 < Scalar(0))) {
    out.status = LineSearchStatus::NonDescentDirection;
    return out;
  }
  const Scalar c1 = Scalar(cfg.c1);
  const Scalar c2 = Scalar(cfg.c2);
  Scalar lo = Scalar(0);
  Scalar hi = std::numeric_limits<Scalar>::infinity();
  Scalar alpha = Scalar(1);
  const Scalar slack = Scalar(cfg.armijo_slack) * std::max(Scalar(1), std::abs(f0));

  auto shrink = [&] {
    hi = alpha;
    alpha = (lo + hi) / Scalar(2);
  };

  while (out.evals < cfg.max_linesearch_evals) {
    if (alpha < Scalar(cfg.min_step)) break;
    ++out.evals;

    std::optional<ProductPoint<Scalar>> trial;
    Scalar f = std::numeric_limits<Scalar>::infinity();
    try {
      trial = product_step(alpha * xi, x, cfg.step_rule);
      f = problem.cost(*trial);
    } catch (const Error&) {
      // An infeasible trial point counts as an Armijo failure.
      f = std::numeric_limits<Scalar>::infinity();
    }
    if (!std::isfinite(static_cast<double>(f)) || f > f0 + c1 * alpha * g0 + slack) {
      shrink();
      continue;
    }

    std::optional<ProductTangent<Scalar>> grad;
    try {
      grad = product_egrad_to_rgrad(*trial, problem.euclid_grad(*trial), cfg.mode);
    } catch (const Error&) {
      shrink();
      continue;
    }
    const Scalar slope =
        product_metric(*grad, product_transport(*trial, xi, cfg.classical_transport));

    if (slope < c2 * g0) {
      lo = alpha;
      alpha = std::isinf(static_cast<double>(hi)) ? alpha * Scalar(2) : (lo + hi) / Scalar(2);
      continue;
    }
    if (cfg.strong_wolfe && slope > -c2 * g0) {
      shrink();
      continue;
    }
    out.status = LineSearchStatus::Ok;
    out.alpha = alpha;
    out.point = std::move(trial);
    out.cost = f;
    out.grad = std::move(grad);
    return out;
  }
  out.status = LineSearchStatus::Failed;
  return out;
}

/// Solver state after k accepted iterations.
template <typename Scalar>
struct SolverState {
  ProductPoint<Scalar> point;
  Scalar cost;
  ProductTangent<Scalar> grad;
  Scalar grad_norm;
  std::vector<MemoryPair<Scalar>> memory;  // oldest first
  Scalar h;  // base-case scale of the recursion
  std::size_t iteration = 0;
  std::optional<Termination> termination;
  SolverStats<Scalar> stats;
};

template <typename Scalar, ProductCostFunction<Scalar> Problem>
class Rlbfgs {
 public:
  Rlbfgs(const Problem& problem, SolverConfig config) : problem_(problem), cfg_(config) {
    cfg_.validate();
  }

  const SolverConfig& config() const { return cfg_; }

  /// Evaluate the start point. Raises InfeasibleStart if the cost or gradient
  /// cannot be evaluated there.
  SolverState<Scalar> init(const ProductPoint<Scalar>& x0) const {
    Scalar f0;
    std::optional<ProductTangent<Scalar>> g0;
    try {
      f0 = problem_.cost(x0);
      g0 = product_egrad_to_rgrad(x0, problem_.euclid_grad(x0), cfg_.mode);
    } catch (const Error& e) {
      throw InfeasibleStart(std::string("start point rejected: ") + e.what());
    }
    if (!std::isfinite(static_cast<double>(f0))) throw InfeasibleStart("non-finite cost at start");
    const Scalar gn = product_norm(*g0);
    SolverState<Scalar> state{x0, f0, std::move(*g0), gn, {}, steepest_scale(gn)};
    state.stats.cost_trace.push_back(f0);
    return state;
  }

  /// One iteration: direction, line search, memory update. Sets
  /// state.termination instead of stepping when a stopping rule fires.
  void step(SolverState<Scalar>& st) const {
    if (st.termination) return;
    if (st.grad_norm < Scalar(cfg_.grad_tol)) {
      st.termination = Termination::Converged;
      return;
    }
    if (st.iteration >= cfg_.max_iters) {
      st.termination = Termination::MaxIters;
      return;
    }

    ProductTangent<Scalar> dir = direction(st);
    Scalar g0 = product_metric(st.grad, dir);
    auto ls = wolfe_linesearch(problem_, st.point, dir, st.cost, g0, cfg_);
    st.stats.linesearch_evals += ls.evals;

    if (ls.status != LineSearchStatus::Ok) {
      // Forget the curvature history and retry once along steepest descent.
      st.memory.clear();
      ++st.stats.memory_resets;
      st.h = steepest_scale(st.grad_norm);
      dir = st.h * (-st.grad);
      g0 = product_metric(st.grad, dir);
      ls = wolfe_linesearch(problem_, st.point, dir, st.cost, g0, cfg_);
      st.stats.linesearch_evals += ls.evals;
      if (ls.status != LineSearchStatus::Ok) {
        st.termination = Termination::LineSearchFailed;
        return;
      }
    }

    const ProductPoint<Scalar>& next = *ls.point;
    ProductTangent<Scalar> s = product_transport(next, ls.alpha * dir, cfg_.classical_transport);
    ProductTangent<Scalar> y =
        *ls.grad - product_transport(next, st.grad, cfg_.classical_transport);
    auto pair = MemoryPair<Scalar>::make(std::move(s), std::move(y));
    const Scalar g_yy = product_metric(pair.y, pair.y);
    if (pair.g_sy > Scalar(cfg_.curvature_guard) * pair.g_ss && g_yy > Scalar(0)) {
      st.h = pair.g_sy / g_yy;
      st.memory.push_back(std::move(pair));
      if (st.memory.size() > cfg_.memory_window) {
        st.memory.erase(st.memory.begin(), st.memory.end() - cfg_.memory_window);
      }
    }

    st.point = std::move(*ls.point);
    st.cost = ls.cost;
    st.grad = std::move(*ls.grad);
    st.grad_norm = product_norm(st.grad);
    ++st.iteration;
    st.stats.cost_trace.push_back(st.cost);
  }

  /// Iterate from x0 until convergence, the iteration cap, or line-search failure.
  std::pair<ProductPoint<Scalar>, SolverStats<Scalar>> solve(const ProductPoint<Scalar>& x0,
                                                            const ProgressCallback& progress = {}) const {
    using Clock = std::chrono::steady_clock;
    KernelCounters total;
    const auto start = Clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };

    std::optional<SolverState<Scalar>> st;
    {
      CountingScope scope(total);
      st.emplace(init(x0));
      if (progress) progress({0, double(st->cost), double(st->grad_norm), elapsed()});
      while (!st->termination) {
        step(*st);
        if (progress && !st->termination) {
          progress({st->iteration, double(st->cost), double(st->grad_norm), elapsed()});
        }
      }
    }

    SolverStats<Scalar> stats = std::move(st->stats);
    stats.iterations = st->iteration;
    stats.wall_time = elapsed();
    stats.per_iter_time = stats.iterations > 0 ? stats.wall_time / double(stats.iterations) : 0.0;
    stats.final_cost = st->cost;
    stats.final_grad_norm = st->grad_norm;
    stats.total_counters = total;
    stats.termination = *st->termination;
    return {std::move(st->point), std::move(stats)};
  }

 private:
  static Scalar steepest_scale(Scalar grad_norm) {
    return grad_norm > Scalar(0) ? Scalar(1) / grad_norm : Scalar(1);
  }

  ProductTangent<Scalar> direction(SolverState<Scalar>& st) const {
    KernelCounters recursion;
    ProductTangent<Scalar> dir = [&] {
      CountingScope scope(recursion);
      return get_direction(-st.grad, std::span<const MemoryPair<Scalar>>(st.memory), st.memory.size(),
                           H0Scale<Scalar>(st.h), Scalar(cfg_.curvature_guard),
                           cfg_.classical_transport);
    }();
    st.stats.cubic_calls_in_recursion += recursion.cubic_calls;
    return dir;
  }

  const Problem& problem_;
  SolverConfig cfg_;
};

/// Convenience wrapper: construct a solver and run it.
template <typename Scalar, ProductCostFunction<Scalar> Problem>
std::pair<ProductPoint<Scalar>, SolverStats<Scalar>> solve(const Problem& problem,
                                                          const ProductPoint<Scalar>& x0,
                                                          const SolverConfig& config,
                                                          const ProgressCallback& progress = {}) {
  return Rlbfgs<Scalar, Problem>(problem, config).solve(x0, progress);
}

}  // namespace vtf
