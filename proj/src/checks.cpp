#include "vtf/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>

#include "vtf/gmm.hpp"
#include "vtf/rlbfgs.hpp"

namespace vtf::checks {
namespace {

using M = Mat<double>;
using Rng = std::mt19937_64;

M random_sym(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> g;
  M a(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) a(i, j) = g(rng);
  return symmetrize(a);
}

SpdPoint<double> random_spd(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> g;
  M a(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) a(i, j) = g(rng);
  return SpdPoint<double>(a * a.transpose() / double(n) + 0.5 * M::Identity(n, n));
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

double rel(const M& a, const M& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

struct Tracker {
  double worst = 0.0;
  void see(double e) { worst = std::max(worst, std::isnan(e) ? INFINITY : e); }
};

CheckResult bounded(std::string name, const Tracker& t, double tol) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "worst %.3g (tol %.1g)", t.worst, tol);
  return {std::move(name), t.worst <= tol, buf};
}

CheckResult guarded(std::string name, const std::function<CheckResult()>& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    return {std::move(name), false, std::string("exception: ") + e.what()};
  }
}

const MappingMode kMapped[] = {MappingMode::InverseSqrt, MappingMode::Cholesky};

}  // namespace

std::vector<CheckResult> run_checks(const CheckOptions& opt) {
  std::vector<CheckResult> out;
  Rng rng(opt.seed);
  const Eigen::Index dims[] = {2, 3, 5, 10};

  out.push_back(guarded("spd factor round trips", [&] {
    Tracker t;
    for (auto n : dims)
      for (int k = 0; k < opt.trials; ++k) {
        const auto s = random_spd(rng, n);
        t.see(rel(s.chol() * s.chol().transpose(), s.mat()));
        t.see(rel(s.sqrt() * s.sqrt(), s.mat()));
        t.see(rel(s.invsqrt() * s.sqrt(), M::Identity(n, n)));
        t.see(rel(s.sqrt() * s.mat(), s.mat() * s.sqrt()));
      }
    return bounded("spd factor round trips", t, 1e-10);
  }));

  out.push_back(guarded("metric reduces to frobenius", [&] {
    Tracker t;
    for (auto n : dims)
      for (int k = 0; k < opt.trials; ++k) {
        const auto s = random_spd(rng, n);
        const M a = random_sym(rng, n), b = random_sym(rng, n);
        const double classical = metric(map_tangent(s, a, MappingMode::Classical), map_tangent(s, b, MappingMode::Classical));
        for (auto mode : kMapped) t.see(rel(metric(map_tangent(s, a, mode), map_tangent(s, b, mode)), classical));
      }
    return bounded("metric reduces to frobenius", t, 1e-10);
  }));

  out.push_back(guarded("mapped transport is identity", [&] {
    bool ok = true;
    for (auto n : dims)
      for (int k = 0; k < opt.trials; ++k) {
        const auto s1 = random_spd(rng, n), s2 = random_spd(rng, n);
        for (auto mode : kMapped) {
          const auto xi = map_tangent(s1, random_sym(rng, n), mode);
          ok = ok && transport(s2, xi).value() == xi.value() && adjoint_transport(s2, xi).value() == xi.value();
        }
      }
    return CheckResult{"mapped transport is identity", ok, ok ? "bit-identical" : "value changed"};
  }));

  out.push_back(guarded("classical transport adjointness", [&] {
    Tracker t;
    for (auto variant : {ClassicalTransport::EigenRoot, ClassicalTransport::CholeskyFactor})
      for (auto n : dims)
        for (int k = 0; k < opt.trials; ++k) {
          const auto s1 = random_spd(rng, n), s2 = random_spd(rng, n);
          const auto xi = map_tangent(s1, random_sym(rng, n), MappingMode::Classical);
          const auto eta = map_tangent(s2, random_sym(rng, n), MappingMode::Classical);
          const double lhs = metric(xi, adjoint_transport(s1, eta, variant));
          const double rhs = metric(transport(s2, xi, variant), eta);
          t.see(std::abs(lhs - rhs) / (1.0 + std::abs(rhs)));
        }
    return bounded("classical transport adjointness", t, 1e-9);
  }));

  out.push_back(guarded("exp map agrees across modes", [&] {
    Tracker t;
    for (auto n : dims)
      for (int k = 0; k < opt.trials; ++k) {
        const auto s = random_spd(rng, n);
        const M xi = 0.5 * random_sym(rng, n);
        const M ref = exp_map(map_tangent(s, xi, MappingMode::Classical)).mat();
        for (auto mode : kMapped) t.see(rel(exp_map(map_tangent(s, xi, mode)).mat(), ref));
      }
    return bounded("exp map agrees across modes", t, 1e-9);
  }));

  out.push_back(guarded("retraction is positive definite", [&] {
    int bad = 0;
    for (auto n : dims)
      for (int k = 0; k < opt.trials; ++k) {
        const auto s = random_spd(rng, n);
        const M xi = 3.0 * random_sym(rng, n);
        for (auto mode : kAllModes) {
          try {
            retract(map_tangent(s, xi, mode));
          } catch (const NotPositiveDefinite&) {
            ++bad;
          }
        }
      }
    return CheckResult{"retraction is positive definite", bad == 0, std::to_string(bad) + " failures"};
  }));

  out.push_back(guarded("responsibilities form a partition", [&] {
    Tracker t;
    for (int k = 0; k < opt.trials; ++k) {
      auto sample = gmm::sample_gmm<double>(3, 2, 30, gmm::SeparationLevel::Mid, rng);
      const auto x = gmm::init_point(gmm::kmeanspp_init(sample.data, 3, rng));
      const M r = gmm::responsibilities(x, sample.data);
      t.see((r.rowwise().sum().array() - 1.0).abs().maxCoeff());
      if ((r.array() < 0.0).any() || (r.array() > 1.0).any()) t.see(INFINITY);
    }
    return bounded("responsibilities form a partition", t, 1e-12);
  }));

  out.push_back(guarded("gmm cost matches direct likelihood", [&] {
    Tracker t;
    for (int k = 0; k < opt.trials; ++k) {
      auto sample = gmm::sample_gmm<double>(2, 3, 40, gmm::SeparationLevel::Mid, rng);
      const auto params = gmm::kmeanspp_init(sample.data, 2, rng);
      t.see(rel(gmm::nll_cost(gmm::init_point(params), sample.data), gmm::direct_nll(params, sample.data)));
    }
    return bounded("gmm cost matches direct likelihood", t, 1e-10);
  }));

  out.push_back(guarded("gmm gradient matches finite differences", [&] {
    Tracker t;
    for (int k = 0; k < std::max(1, opt.trials / 5); ++k) {
      auto sample = gmm::sample_gmm<double>(2, 2, 40, gmm::SeparationLevel::Mid, rng);
      const auto x = gmm::init_point(gmm::kmeanspp_init(sample.data, 2, rng));
      for (auto mode : kAllModes) {
        const auto grad = product_egrad_to_rgrad(x, gmm::euclid_grad(x, sample.data), mode);
        std::vector<M> blocks{random_sym(rng, 3), random_sym(rng, 3)};
        Vec<double> w = Vec<double>::Random(1);
        const auto xi = product_map(x, blocks, w, mode);
        const double h = 1e-6;
        const double fd = (gmm::nll_cost(product_step(h * xi, x, StepRule::ExpMap), sample.data) -
                           gmm::nll_cost(product_step(-h * xi, x, StepRule::ExpMap), sample.data)) /
                          (2 * h);
        t.see(std::abs(fd - product_metric(grad, xi)) / std::max(1.0, std::abs(fd)));
      }
    }
    return bounded("gmm gradient matches finite differences", t, 1e-5);
  }));

  out.push_back(guarded("recursion is cubic-free in mapped modes", [&] {
    auto sample = gmm::sample_gmm<double>(2, 2, 40, gmm::SeparationLevel::Low, rng);
    const auto x0 = gmm::init_point(gmm::kmeanspp_init(sample.data, 2, rng));
    gmm::GmmProblem<double> problem(sample.data);
    bool ok = true;
    std::string detail;
    for (auto mode : kAllModes) {
      SolverConfig cfg;
      cfg.mode = mode;
      cfg.max_iters = 10;
      const auto stats = solve<double>(problem, x0, cfg).second;
      const bool want_zero = mode != MappingMode::Classical;
      ok = ok && (want_zero ? stats.cubic_calls_in_recursion == 0 : stats.cubic_calls_in_recursion > 0);
      detail += std::string(to_string(mode)) + "=" + std::to_string(stats.cubic_calls_in_recursion) + " ";
    }
    return CheckResult{"recursion is cubic-free in mapped modes", ok, detail};
  }));

  out.push_back(guarded("solver descends monotonically", [&] {
    auto sample = gmm::sample_gmm<double>(2, 2, 40, gmm::SeparationLevel::Mid, rng);
    const auto x0 = gmm::init_point(gmm::kmeanspp_init(sample.data, 2, rng));
    gmm::GmmProblem<double> problem(sample.data);
    bool ok = true;
    for (auto mode : kAllModes) {
      SolverConfig cfg;
      cfg.mode = mode;
      const auto stats = solve<double>(problem, x0, cfg).second;
      ok = ok && stats.cost_trace.size() == stats.iterations + 1;
      for (std::size_t i = 1; i < stats.cost_trace.size(); ++i) {
        const double slack = cfg.armijo_slack * std::max(1.0, std::abs(stats.cost_trace[i - 1]));
        ok = ok && stats.cost_trace[i] <= stats.cost_trace[i - 1] + slack;
      }
    }
    return CheckResult{"solver descends monotonically", ok, ok ? "all traces non-increasing" : "trace increased"};
  }));

  return out;
}

}  // namespace vtf::checks
