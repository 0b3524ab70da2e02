#include <doctest.h>

#include <thread>

#include "oracles.hpp"
#include "vtf/symkernel.hpp"

using namespace vtf;
using oracle::M;

namespace {
M mat2(double a, double b, double c, double d) {
  M m(2, 2);
  m << a, b, c, d;
  return m;
}
}  // namespace

TEST_CASE("cholesky_factor examples") {
  CHECK(cholesky_factor(SpdPoint<double>(M::Identity(2, 2))).isApprox(M::Identity(2, 2)));

  const M l = cholesky_factor(SpdPoint<double>(mat2(4, 2, 2, 3)));
  CHECK(oracle::rel_err(l, mat2(2, 0, 1, std::sqrt(2.0))) < 1e-14);

  CHECK_THROWS_AS(SpdPoint<double>(mat2(1, 2, 2, 1)), NotPositiveDefinite);
}

TEST_CASE("cholesky reconstruction and near-singular guard") {
  std::mt19937_64 rng(11);
  for (int n : {2, 3, 5, 10}) {
    const SpdPoint<double> s(oracle::random_spd(rng, n));
    CHECK(oracle::rel_err(M(s.chol() * s.chol().transpose()), s.mat()) <= 1e-10);
  }
  CHECK_THROWS_AS(SpdPoint<double>(mat2(1, 0, 0, 1e-14)), NotPositiveDefinite);
  CHECK_NOTHROW(SpdPoint<double>(mat2(1, 0, 0, 1e-12)));
}

TEST_CASE("SpdPoint input validation") {
  CHECK_THROWS_AS(SpdPoint<double>(mat2(2, 1, 0, 2)), NotSymmetric);
  CHECK_THROWS_AS(SpdPoint<double>(M(2, 3)), DimensionMismatch);
  CHECK_THROWS_AS(SpdPoint<double>(mat2(1, 0, 0, NAN)), NotPositiveDefinite);
  // Tiny asymmetry is symmetrized away.
  const SpdPoint<double> s(mat2(2, 1 + 1e-13, 1, 2));
  CHECK(s.mat()(0, 1) == s.mat()(1, 0));
}

TEST_CASE("sym_eig examples") {
  auto e = sym_eig(mat2(3, 0, 0, 1));
  CHECK(e.values(0) == doctest::Approx(1.0));
  CHECK(e.values(1) == doctest::Approx(3.0));
  CHECK(oracle::rel_err(M(e.vectors.cwiseAbs()), mat2(0, 1, 1, 0)) < 1e-14);

  e = sym_eig(mat2(0, 1, 1, 0));
  CHECK(e.values(0) == doctest::Approx(-1.0));
  CHECK(e.values(1) == doctest::Approx(1.0));
  const double r = 1.0 / std::sqrt(2.0);
  CHECK(std::abs(e.vectors(0, 0)) == doctest::Approx(r));
  CHECK(e.vectors(0, 0) * e.vectors(1, 0) == doctest::Approx(-0.5));
  CHECK(e.vectors(0, 1) * e.vectors(1, 1) == doctest::Approx(0.5));

  e = sym_eig(M::Identity(3, 3));
  CHECK((e.values.array() - 1.0).abs().maxCoeff() < 1e-15);
  CHECK(oracle::rel_err(M(e.vectors * e.values.asDiagonal() * e.vectors.transpose()), M::Identity(3, 3)) < 1e-14);
}

TEST_CASE("sym_eig reconstruction and orthogonality") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const M a = oracle::random_sym(rng, 6);
    const auto e = sym_eig(a);
    CHECK(oracle::rel_err(M(e.vectors * e.values.asDiagonal() * e.vectors.transpose()), a) <= 1e-10);
    CHECK((e.vectors.transpose() * e.vectors - M::Identity(6, 6)).norm() <= 1e-12);
    for (int i = 1; i < 6; ++i) CHECK(e.values(i - 1) <= e.values(i));
  }
}

TEST_CASE("spd_sqrt and spd_invsqrt") {
  const SpdPoint<double> d(mat2(4, 0, 0, 9));
  CHECK(oracle::rel_err(spd_sqrt(d), mat2(2, 0, 0, 3)) < 1e-14);
  CHECK(oracle::rel_err(spd_invsqrt(SpdPoint<double>(M::Identity(3, 3))), M::Identity(3, 3)) < 1e-14);

  const SpdPoint<double> s(mat2(2, 1, 1, 2));
  CHECK(oracle::rel_err(M(spd_sqrt(s) * spd_sqrt(s)), s.mat()) <= 1e-10);
  CHECK(oracle::rel_err(spd_sqrt(s), oracle::db_sqrtm(s.mat())) <= 1e-10);

  std::mt19937_64 rng(13);
  for (int n : {2, 3, 5, 10}) {
    for (int trial = 0; trial < 20; ++trial) {
      const SpdPoint<double> p(oracle::random_spd(rng, n));
      const M& r = p.sqrt();
      const M& ri = p.invsqrt();
      CHECK(oracle::rel_err(M(r * r), p.mat()) <= 1e-10);
      CHECK(oracle::rel_err(M(ri * ri), M(p.mat().inverse())) <= 1e-10);
      CHECK(oracle::rel_err(ri, M(r.inverse())) <= 1e-10);
      CHECK((r * p.mat() - p.mat() * r).norm() <= 1e-10 * std::pow(p.mat().norm(), 1.5));
      CHECK(is_symmetric(r));
      CHECK(is_symmetric(ri));
    }
  }
}

TEST_CASE("sym_expm examples and Taylor oracle") {
  CHECK(sym_expm(M::Zero(3, 3)) == M::Identity(3, 3));
  CHECK(oracle::rel_err(sym_expm(mat2(1, 0, 0, -1)), mat2(std::exp(1.0), 0, 0, std::exp(-1.0))) < 1e-15);

  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 50; ++trial) {
    const M a = oracle::random_sym(rng, 3);
    CHECK(oracle::rel_err(sym_expm(a), oracle::taylor_expm(a)) <= 1e-8);
  }
  // Commuting diagonals multiply entrywise.
  const M d1 = Eigen::Vector3d(0.3, -1.0, 2.0).asDiagonal();
  const M d2 = Eigen::Vector3d(-0.7, 0.5, 0.1).asDiagonal();
  CHECK(oracle::rel_err(sym_expm(M(d1 + d2)), M(sym_expm(d1) * sym_expm(d2))) < 1e-14);
}

TEST_CASE("frob_inner examples, dense oracle and counting") {
  CHECK(frob_inner(M::Identity(2, 2), M::Identity(2, 2)) == 2.0);
  CHECK(frob_inner(mat2(1, 0, 0, 2), mat2(3, 0, 0, 4)) == 11.0);
  CHECK_THROWS_AS(frob_inner(M::Identity(2, 2), M::Identity(3, 3)), DimensionMismatch);

  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 50; ++trial) {
    const M a = oracle::random_sym(rng, 7), b = oracle::random_sym(rng, 7);
    KernelCounters c;
    double v;
    {
      CountingScope scope(c);
      v = frob_inner(a, b);
    }
    CHECK(std::abs(v - oracle::trace_product(a, b)) <= 1e-12 * (1 + std::abs(v)));
    CHECK(c.cubic_calls == 0);
    CHECK(c.quadratic_calls == 1);
  }
}

TEST_CASE("spd_solve examples and residual") {
  std::mt19937_64 rng(16);
  const M x = oracle::random_sym(rng, 3);
  CHECK(spd_solve(SpdPoint<double>(M::Identity(3, 3)), x).isApprox(x));
  CHECK(oracle::rel_err(spd_solve(SpdPoint<double>(mat2(2, 0, 0, 4)), M::Identity(2, 2)), mat2(0.5, 0, 0, 0.25)) < 1e-15);
  for (int trial = 0; trial < 50; ++trial) {
    const SpdPoint<double> s(oracle::random_spd(rng, 4));
    const M rhs = oracle::random_sym(rng, 4);
    const M r = spd_solve(s, rhs);
    CHECK((s.mat() * r - rhs).norm() <= 1e-10 * rhs.norm());
  }
  CHECK_THROWS_AS(spd_solve(SpdPoint<double>(M::Identity(3, 3)), M::Identity(2, 2)), DimensionMismatch);
}

TEST_CASE("kernel counters: cubic kernels count, scopes nest") {
  std::mt19937_64 rng(17);
  const M a = oracle::random_spd(rng, 4);
  KernelCounters outer, inner;
  {
    CountingScope o(outer);
    SpdPoint<double> s(a);  // cholesky
    {
      CountingScope i(inner);
      (void)s.sqrt();  // eig + product
      (void)s.sqrt();  // cached
    }
    (void)mul(a, a);
  }
  CHECK(inner.cubic_calls == 2);
  CHECK(outer.cubic_calls == 4);
  KernelCounters after;
  {
    CountingScope scope(after);
  }
  CHECK(after.cubic_calls == 0);
}

TEST_CASE("lazy caches are shared by copies and safe across threads") {
  std::mt19937_64 rng(18);
  const SpdPoint<double> s(oracle::random_spd(rng, 8));
  const SpdPoint<double> copy = s;
  CHECK(copy.same_as(s));
  CHECK_FALSE(SpdPoint<double>(s.mat()).same_as(s));

  std::vector<const M*> seen(8);
  {
    std::vector<std::jthread> pool;
    for (int t = 0; t < 8; ++t) {
      pool.emplace_back([&, t] { seen[t] = &(t % 2 ? s.sqrt() : copy.invsqrt()); });
    }
  }
  for (int t = 0; t < 8; ++t) CHECK(seen[t] == (t % 2 ? &s.sqrt() : &s.invsqrt()));
}

TEST_CASE("single precision instantiation") {
  Eigen::MatrixXf a(2, 2);
  a << 4, 2, 2, 3;
  const SpdPoint<float> s(a);
  CHECK(std::abs(s.chol()(1, 1) - std::sqrt(2.0f)) < 1e-6f);
  CHECK((s.sqrt() * s.sqrt() - a).norm() < 1e-5f);
}
