#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "otpoisson/transport.hpp"

using namespace otp;
using Cost = CostModel<double>;
using M = DiscreteMeasure<double>;

namespace {

PointSet<double> pts(std::initializer_list<std::array<double, 2>> list) {
  PointSet<double> p(static_cast<Eigen::Index>(list.size()), 2);
  Eigen::Index i = 0;
  for (const auto& a : list) p.row(i++) << a[0], a[1];
  return p;
}

VectorX<double> vec(Eigen::Index n, double v) { return VectorX<double>::Constant(n, v); }

CostMatrix<double> random_costs(std::mt19937_64& rng, Eigen::Index m, Eigen::Index n) {
  CostMatrix<double> C;
  C.sources = oracle::random_points(rng, m);
  C.targets = oracle::random_points(rng, n);
  C.values = DenseMatrix<double>::NullaryExpr(m, n, [&] { return std::uniform_real_distribution<double>(0, 1)(rng); });
  return C;
}

}  // namespace

TEST_CASE("cost models") {
  const Point2<double> o(0, 0);
  CHECK(Cost::quadratic()(o, {1, 1}) == doctest::Approx(1.0));
  CHECK(Cost::power(1.5)(o, {1, 0}) == doctest::Approx(1 / 1.5));
  CHECK(Cost::metric()(o, {3, 4}) == 5);
  CHECK(Cost::power(2)(o, {1, 1}) == doctest::Approx(1.0));
  CHECK_THROWS_WITH_AS(Cost::power(2.5), "gamma must be in (1,2]", InvalidParameter);
  CHECK_THROWS_AS(Cost::power(1.0), InvalidParameter);
  CHECK_THROWS_AS(Cost::radial([](double r) { return 1 + r; }, "shifted"), InvalidParameter);
  CHECK_THROWS_AS(Cost::radial([](double r) { return -r; }, "decreasing"), InvalidParameter);
  const auto huber = Cost::radial([](double r) { return r < 1 ? r * r / 2 : r - 0.5; }, "huber");
  CHECK(huber(o, {2, 0}) == doctest::Approx(1.5));
  CHECK(huber.lipschitz(3) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(Cost::quadratic().strong_convexity(2) == 1);
  CHECK(Cost::power(1.5).strong_convexity(4) == doctest::Approx(0.25));
  CHECK_THROWS_AS(Cost::metric().strong_convexity(1), WrongModel);

  std::mt19937_64 rng(1);
  const auto X = oracle::random_points(rng, 6);
  const auto C = cost_matrix(Cost::metric(), X, X);
  CHECK(C.values.diagonal().cwiseAbs().maxCoeff() == 0);
  CHECK(C.values.minCoeff() >= 0);
  CHECK_THROWS_AS(cost_matrix(Cost::metric(), X, PointSet<double>(0, 2)), EmptySet);
}

TEST_CASE("exact solver small examples") {
  SUBCASE("single pair") {
    const auto C = cost_matrix(Cost::metric(), pts({{0, 0}}), pts({{0.3, 0.4}}));
    const auto s = solve_kantorovich_exact(vec(1, 1.0), vec(1, 1.0), C);
    CHECK(s.value == doctest::Approx(0.5));
    CHECK(s.plan.support_size() == 1);
  }
  SUBCASE("identical marginals under metric cost") {
    std::mt19937_64 rng(2);
    const auto X = oracle::random_points(rng, 7);
    const auto w = oracle::random_weights(rng, 7);
    const auto s = solve_kantorovich_exact(w, w, cost_matrix(Cost::metric(), X, X));
    CHECK(std::abs(s.value) < 1e-14);
    const DenseMatrix<double> P(s.plan.weights);
    CHECK((P - DenseMatrix<double>(w.asDiagonal())).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("mass mismatch") {
    const auto C = cost_matrix(Cost::metric(), pts({{0, 0}}), pts({{1, 0}}));
    CHECK_THROWS_AS(solve_kantorovich_exact(vec(1, 1.0), vec(1, 2.0), C),
                    Infeasible);
    CHECK_THROWS_AS(solve_kantorovich_exact(vec(2, 1.0), vec(1, 1.0), C), ShapeError);
  }
}

TEST_CASE("exact solver against basis enumeration") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 60; ++trial) {
    const Eigen::Index m = 1 + trial % 4, n = 1 + (trial / 4) % 4;
    const auto C = random_costs(rng, m, n);
    VectorX<double> mu = oracle::random_weights(rng, m), nu = oracle::random_weights(rng, n);
    if (trial % 5 == 0) mu(0) = 0;  // degenerate marginals
    nu *= mu.sum() / nu.sum();
    const auto s = solve_kantorovich_exact(mu, nu, C);
    const double ref = oracle::brute_force_ot(mu, nu, C.values);
    CHECK(std::abs(s.value - ref) <= 1e-9 * std::max(1.0, std::abs(ref)));
    CHECK((s.plan.row_sums() - mu).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((s.plan.column_sums() - nu).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(s.plan.support_size() <= m + n - 1);
    const auto gap = duality_gap(s.plan, s.duals, C);
    CHECK(gap.feasible);
    CHECK(std::abs(gap.gap) <= 1e-9 * (1 + std::abs(s.value)));
  }
}

TEST_CASE("exact value is below any feasible plan") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto C = cost_matrix(Cost::quadratic(), oracle::random_points(rng, 8), oracle::random_points(rng, 5));
    const VectorX<double> mu = oracle::random_weights(rng, 8);
    const auto plan = oracle::random_plan(rng, mu, 5);
    const auto s = solve_kantorovich_exact(mu, plan.column_sums(), C);
    CHECK(s.value <= plan.cost(C) + 1e-12);
    // every source with mass is served
    const auto rows = s.plan.row_sums();
    for (Eigen::Index i = 0; i < mu.size(); ++i) CHECK(rows(i) > 0);
  }
}

TEST_CASE("larger exact problems keep strong duality") {
  std::mt19937_64 rng(4);
  const auto X = oracle::random_points(rng, 60), Y = oracle::random_points(rng, 45);
  const auto C = cost_matrix(Cost::metric(), X, Y);
  const VectorX<double> mu = oracle::random_weights(rng, 60);
  VectorX<double> nu = oracle::random_weights(rng, 45);
  nu *= mu.sum() / nu.sum();
  const auto s = solve_kantorovich_exact(mu, nu, C);
  const auto gap = duality_gap(s.plan, s.duals, C);
  CHECK(gap.feasibility_residual <= 1e-12);
  CHECK(std::abs(gap.gap) <= 1e-9 * (1 + s.value));
}

TEST_CASE("Sinkhorn") {
  SUBCASE("single source and target") {
    const auto C = cost_matrix(Cost::metric(), pts({{0, 0}}), pts({{1, 0}}));
    const auto r = solve_sinkhorn(vec(1, 2.0), vec(1, 2.0), C, 0.5, 1e-12);
    CHECK(r.value == doctest::Approx(2.0));
  }
  SUBCASE("close to the exact value") {
    std::mt19937_64 rng(8);
    const auto C = cost_matrix(Cost::metric(), oracle::random_points(rng, 5), oracle::random_points(rng, 5));
    const VectorX<double> mu = oracle::random_weights(rng, 5);
    VectorX<double> nu = oracle::random_weights(rng, 5);
    nu *= mu.sum() / nu.sum();
    const auto r = solve_sinkhorn(mu, nu, C, 1e-3, 1e-9);
    const auto s = solve_kantorovich_exact(mu, nu, C);
    CHECK(std::abs(r.value - s.value) <= 1e-2 * s.value);
    CHECK((r.plan.row_sums() - mu).cwiseAbs().sum() < 1e-12);
    CHECK((r.plan.column_sums() - nu).cwiseAbs().sum() <= 1e-9);
  }
  SUBCASE("identical marginals") {
    std::mt19937_64 rng(9);
    const auto X = oracle::random_points(rng, 6);
    const auto w = oracle::random_weights(rng, 6);
    const double eps = 0.01;
    const auto r = solve_sinkhorn(w, w, cost_matrix(Cost::metric(), X, X), eps, 1e-5);
    CHECK(r.value <= eps * w.sum() * std::log(6.0));
  }
  SUBCASE("bad temperature") {
    const auto C = cost_matrix(Cost::metric(), pts({{0, 0}}), pts({{1, 0}}));
    CHECK_THROWS_AS(solve_sinkhorn(vec(1, 1.0), vec(1, 1.0), C, 0.0, 1e-6), InvalidParameter);
  }
}

TEST_CASE("duality gap arithmetic") {
  std::mt19937_64 rng(12);
  const auto C = cost_matrix(Cost::metric(), oracle::random_points(rng, 4), oracle::random_points(rng, 3));
  const VectorX<double> mu = oracle::random_weights(rng, 4);
  const auto plan = oracle::random_plan(rng, mu, 3);
  DualPotentials<double> zero{VectorX<double>::Zero(4), VectorX<double>::Zero(3)};
  const auto g0 = duality_gap(plan, zero, C);
  CHECK(g0.feasible);
  CHECK(g0.gap == doctest::Approx(plan.cost(C)));

  const auto s = solve_kantorovich_exact(mu, plan.column_sums(), C);
  DualPotentials<double> bumped = s.duals;
  const double delta = 0.01;
  bumped.psi(1) += delta;
  const auto g1 = duality_gap(s.plan, bumped, C);
  CHECK(g1.gap == doctest::Approx(duality_gap(s.plan, s.duals, C).gap - delta * plan.column_sums()(1)));
  CHECK(g1.feasibility_residual >= 0);
  // compensating shift keeps the gap
  DualPotentials<double> shifted{s.duals.phi.array() + 0.3, s.duals.psi.array() - 0.3};
  CHECK(duality_gap(s.plan, shifted, C).gap == doctest::Approx(duality_gap(s.plan, s.duals, C).gap).scale(1));
}

TEST_CASE("transport distance") {
  std::mt19937_64 rng(13);
  const auto X = oracle::random_points(rng, 5);
  const M u0(X, oracle::random_weights(rng, 5));
  for (const auto& c : {Cost::metric(), Cost::quadratic(), Cost::power(1.5)}) {
    CHECK(eval_transport_distance(c, u0, u0) == doctest::Approx(0.0).scale(1));
  }
  CHECK(std::isinf(eval_transport_distance(Cost::metric(), u0, X, vec(5, 1.0))));
  VectorX<double> neg = u0.weights();
  neg(0) += neg(1) + 0.5;
  neg(1) = -0.5;
  CHECK(std::isinf(eval_transport_distance(Cost::metric(), u0, X, neg)));
  const Point2<double> a(0.1, 0.2), b(0.5, -0.1);
  CHECK(eval_transport_distance(Cost::quadratic(), M::dirac(a), M::dirac(b)) == doctest::Approx(0.5 * (a - b).squaredNorm()));
}

TEST_CASE("Fenchel functional") {
  std::mt19937_64 rng(14);
  const auto Xi = oracle::random_points(rng, 9);
  const M a = M::dirac(Xi.row(3).transpose());
  CHECK(eval_F(vec(9, 0.0), Cost::metric(), a, Xi) == 0);

  const M u0(oracle::random_points(rng, 6), oracle::random_weights(rng, 6));
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 20; ++trial) {
    VectorX<double> p1(9), p2(9);
    for (int j = 0; j < 9; ++j) {
      p1(j) = n01(rng);
      p2(j) = n01(rng);
    }
    const double t = n01(rng);
    const double F1 = eval_F(p1, Cost::quadratic(), u0, Xi);
    CHECK(eval_F<double>(p1.array() + t, Cost::quadratic(), u0, Xi) == doctest::Approx(F1 + t * u0.total_mass()));
    const double mid = eval_F<double>(0.5 * (p1 + p2), Cost::quadratic(), u0, Xi);
    CHECK(mid <= 0.5 * F1 + 0.5 * eval_F(p2, Cost::quadratic(), u0, Xi) + 1e-12);
  }
}

TEST_CASE("c-bar transform") {
  std::mt19937_64 rng(15);
  const auto X = oracle::random_points(rng, 10), Xi = oracle::random_points(rng, 12);
  const auto C = cost_matrix(Cost::metric(), X, Xi);
  SUBCASE("zero potential gives the nearest distance") {
    const auto t = c_bar_transform(vec(12, 0.0), C);
    for (Eigen::Index i = 0; i < 10; ++i) {
      CHECK(t.values(i) == C.values.row(i).minCoeff());
      CHECK(C(i, t.argmin[static_cast<std::size_t>(i)]) == t.values(i));
    }
  }
  SUBCASE("ties go to the lowest index") {
    const auto Cq = cost_matrix(Cost::metric(), pts({{0.5, 0.5}}), pts({{0.6, 0.5}, {0.4, 0.5}, {0.5, 0.6}}));
    CHECK(c_bar_transform(vec(3, 0.0), Cq).argmin[0] == 0);
  }
  SUBCASE("non-expansive and order reversing") {
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 50; ++trial) {
      VectorX<double> a(12), b(12);
      for (int j = 0; j < 12; ++j) {
        a(j) = n01(rng);
        b(j) = n01(rng);
      }
      const auto ta = c_bar_transform(a, C).values, tb = c_bar_transform(b, C).values;
      CHECK((ta - tb).cwiseAbs().maxCoeff() <= (a - b).cwiseAbs().maxCoeff());
      const VectorX<double> hi = a.cwiseMax(b);
      const auto thi = c_bar_transform(hi, C).values;
      CHECK((thi.array() <= ta.array()).all());
      CHECK((thi.array() <= tb.array()).all());
    }
  }
  SUBCASE("metric involution for 1-Lipschitz potentials") {
    const auto CC = cost_matrix(Cost::metric(), Xi, Xi);
    VectorX<double> psi(12);
    for (Eigen::Index j = 0; j < 12; ++j) psi(j) = 0.7 * (Xi.row(j).norm() - 1);
    const auto t = c_bar_transform(psi, CC);
    CHECK((t.values + psi).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("shape errors") {
    CHECK_THROWS_AS(c_bar_transform(vec(3, 0.0), C), ShapeError);
  }
}
