#include <doctest.h>

#include <numbers>
#include <random>

#include "otpoisson/pde.hpp"

using namespace otp;
using D = Domain<double>;
using B = PoissonBackend<double>;
using M = DiscreteMeasure<double>;

namespace {

constexpr double pi = std::numbers::pi;

M random_measure(std::mt19937_64& rng, const D& dom, int n) {
  std::uniform_real_distribution<double> u(-1, 1);
  PointSet<double> p(n, 2);
  VectorX<double> w(n);
  for (int i = 0; i < n;) {
    Point2<double> x(u(rng), u(rng));
    if (dom.kind == DomainKind::unit_square) x = (x.array() + 1) / 2;
    if (!dom.contains(x)) continue;
    p.row(i) = x.transpose();
    w(i++) = (u(rng) + 1) / 2;
  }
  return M(p, w);
}

double max_abs(const VectorX<double>& v) { return v.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("zero data gives zero solutions") {
  for (auto make : {+[](std::shared_ptr<const Grid<double>> g) { return B::fd_grid(g); },
                    +[](std::shared_ptr<const Grid<double>> g) { return B::green_disk(g); }}) {
    const auto g = build_grid(D::unit_disk(), 0.1);
    const B b = make(g);
    CHECK(max_abs(b.solve_state(M{}).values) == 0);
    CHECK(max_abs(b.solve_adjoint(ScalarField<double>::zeros(g)).values) == 0);
    CHECK(green_potential(M{}, {0.2, 0.1}, b) == 0);
  }
}

TEST_CASE("comparison principle") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto dom = trial % 2 ? D::unit_disk() : D::unit_square();
    const auto g = build_grid(dom, 0.05);
    const auto mu = random_measure(rng, dom, 1 + trial * 3);
    std::vector<B> backends{B::fd_grid(g)};
    if (dom.kind == DomainKind::unit_disk) backends.push_back(B::green_disk(g));
    for (const auto& b : backends) {
      const auto y = b.solve_state(mu).values;
      CHECK(y.minCoeff() >= -1e-10 * max_abs(y));
    }
  }
}

TEST_CASE("linearity of the state map") {
  std::mt19937_64 rng(6);
  const auto g = build_grid(D::unit_disk(), 0.05);
  for (const B& b : {B::fd_grid(g), B::green_disk(g)}) {
    PointSet<double> pts(6, 2);
    pts << 0.1, 0.2, -0.5, 0.3, 0.0, 0.0, 0.7, -0.1, -0.2, -0.6, 0.99, 0.0;
    std::normal_distribution<double> n01;
    VectorX<double> w1(6), w2(6);
    for (int i = 0; i < 6; ++i) {
      w1(i) = n01(rng);
      w2(i) = n01(rng);
    }
    const auto op = b.bind(pts);
    const VectorX<double> lhs = op.apply(2.5 * w1 - 0.75 * w2).values;
    const VectorX<double> rhs = 2.5 * op.apply(w1).values - 0.75 * op.apply(w2).values;
    CHECK((lhs - rhs).norm() <= 1e-10 * rhs.norm());
  }
}

TEST_CASE("boundary atoms have no effect") {
  const auto g = build_grid(D::unit_square(), 0.1);
  PointSet<double> pts(2, 2);
  pts << 0.0, 0.35, 1.0, 1.0;
  CHECK(max_abs(B::fd_grid(g).solve_state(pts, VectorX<double>::Ones(2)).values) == 0);
}

TEST_CASE("discrete adjoint identity and self-adjointness") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01;
  for (auto dom : {D::unit_square(), D::unit_disk()}) {
    const auto g = build_grid(dom, 0.08);
    std::vector<B> backends{B::fd_grid(g)};
    if (dom.kind == DomainKind::unit_disk) backends.push_back(B::green_disk(g));
    for (const auto& b : backends) {
      const auto mu = random_measure(rng, dom, 12);
      VectorX<double> w(mu.size());
      for (auto& v : w) v = n01(rng);
      ScalarField<double> f = ScalarField<double>::zeros(g, false), h = f;
      for (Eigen::Index k = 0; k < g->size(); ++k) {
        f.values(k) = n01(rng);
        h.values(k) = n01(rng);
      }
      const auto op = b.bind(mu.points());
      const double lhs = g->inner(op.apply(w).values, f.values);
      const double rhs = op.adjoint(f.values).dot(w);
      CHECK(std::abs(lhs - rhs) <= 1e-9 * (1 + std::abs(lhs)));

      const double a1 = g->inner(b.solve_adjoint(f).values, h.values);
      const double a2 = g->inner(f.values, b.solve_adjoint(h).values);
      CHECK(std::abs(a1 - a2) <= 1e-9 * (1 + std::abs(a1)));
    }
  }
}

TEST_CASE("adjoint recovers a quadratic at second order") {
  // -Laplace(|x|^2 - 1) = -4 on the disk with zero boundary values
  auto error = [](double h) {
    const auto g = build_grid(D::unit_disk(), h);
    const auto rhs = ScalarField<double>::sample(g, [](const Point2<double>&) { return -4.0; });
    const auto p = B::fd_grid(g).solve_adjoint(rhs);
    double err = 0;
    for (Eigen::Index k = 0; k < g->size(); ++k) {
      if (g->interior(k)) err = std::max(err, std::abs(p.values(k) - (g->node(k).squaredNorm() - 1)));
    }
    return err;
  };
  const double e1 = error(0.1), e2 = error(0.05);
  CHECK(e1 < 0.1 * 0.1);
  CHECK(e2 < e1 / 3);
}

TEST_CASE("disk Green function") {
  CHECK(green_disk<double>({0.5, 0.0}, {0.0, 0.0}) == doctest::Approx(-std::log(0.5) / (2 * pi)).epsilon(1e-14));
  CHECK(green_disk<double>({0.5, 0.0}, {0.0, 0.0}) == doctest::Approx(0.11032).epsilon(1e-4));
  // closed form with the reflected point
  const Point2<double> x(0.3, -0.4), xi(-0.2, 0.5);
  const Point2<double> star = xi / xi.squaredNorm();
  const double ref = std::log((x - star).norm() * xi.norm() / (x - xi).norm()) / (2 * pi);
  CHECK(green_disk(x, xi) == doctest::Approx(ref).epsilon(1e-13));
  CHECK(green_disk(x, xi) == doctest::Approx(green_disk(xi, x)).epsilon(1e-13));
  CHECK(green_disk<double>({1.0, 0.0}, xi) == doctest::Approx(0.0).scale(1));
  CHECK(std::abs(green_disk<double>({0.6, 0.8}, xi)) < 1e-14);

  SUBCASE("clamp is continuous and nonnegative") {
    const double a = 0.02;
    const Point2<double> c(0.5, 0.1);
    const Point2<double> at(c.x() + a, c.y());
    CHECK(green_disk_clamped(at, c, a) == doctest::Approx(green_disk(at, c)).epsilon(1e-13));
    CHECK(std::isfinite(green_disk_clamped(c, c, a)));
    CHECK(green_disk_clamped<double>({0.999, 0.0}, {1.0, 0.0}, a) >= 0);
  }
}

TEST_CASE("green potential") {
  const auto g = build_grid(D::unit_disk(), 0.02);
  const auto mu = M::dirac({0, 0});
  const double exact = -std::log(0.5) / (2 * pi);
  CHECK(green_potential(mu, {0.5, 0.0}, B::green_disk(g)) == doctest::Approx(exact).epsilon(1e-13));
  CHECK(green_potential(mu, {0.5, 0.0}, B::fd_grid(g)) == doctest::Approx(exact).epsilon(0.01));
  CHECK(std::isinf(green_potential(mu, {0.0, 0.0}, B::green_disk(g))));
  CHECK(std::isinf(green_potential(mu, {0.0, 0.0}, B::fd_grid(g))));
  CHECK_THROWS_AS(green_potential(mu, {1.0, 0.0}, B::fd_grid(g)), DomainError);
  CHECK_THROWS_AS(green_potential(mu, {2.0, 0.0}, B::green_disk(g)), DomainError);
}

TEST_CASE("Dirac at the origin is a weak solution") {
  // phi = (1 - 4|x|^2)^2 on |x| < 1/2 has -Laplace phi = 32 - 256|x|^2 and phi(0) = 1
  auto residual = [](double h) {
    const auto g = build_grid(D::unit_disk(), h);
    const auto y = B::green_disk(g).solve_state(M::dirac({0, 0}));
    const auto lap = ScalarField<double>::sample(g, [](const Point2<double>& x) {
      const double r2 = x.squaredNorm();
      return r2 < 0.25 ? 32 - 256 * r2 : 0.0;
    });
    return std::abs(g->inner(y.values, lap.values) - 1);
  };
  const double r1 = residual(0.05), r2 = residual(0.025);
  CHECK(r1 < 0.05);
  CHECK(r2 < r1);
}

TEST_CASE("backends agree for a smooth density") {
  auto gap = [](double h) {
    const auto g = build_grid(D::unit_disk(), h);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index k = 0; k < g->size(); ++k) {
      if (g->interior(k)) keep.push_back(k);
    }
    PointSet<double> pts(static_cast<Eigen::Index>(keep.size()), 2);
    VectorX<double> w(pts.rows());
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      const auto k = keep[static_cast<std::size_t>(i)];
      pts.row(i) = g->nodes.row(k);
      w(i) = g->weights(k) * (1 + g->node(k).x());
    }
    const M u(pts, w);
    const auto a = B::fd_grid(g).solve_state(u).values;
    const auto b = B::green_disk(g).solve_state(u).values;
    return std::sqrt(g->inner(a - b, a - b) / g->inner(a, a));
  };
  const double e1 = gap(0.1), e2 = gap(0.05);
  CHECK(e1 < 0.1);
  CHECK(e2 < e1);
}

TEST_CASE("gradient field") {
  const auto g = build_grid(D::unit_disk(), 0.05);
  SUBCASE("constant") {
    const auto f = ScalarField<double>::sample(g, [](const Point2<double>&) { return 3.0; });
    CHECK(max_abs(gradient_field(f).values.reshaped()) == 0);
  }
  SUBCASE("quadratic is exact under central differences") {
    const auto f = ScalarField<double>::sample(g, [](const Point2<double>& x) { return x.squaredNorm() - 1; });
    const auto grad = gradient_field(f);
    for (Eigen::Index k = 0; k < g->size(); ++k) {
      if (!g->interior(k)) continue;
      const auto ix = g->ix(k), iy = g->iy(k);
      bool inner = true;
      for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
        inner = inner && g->domain.contains(g->node(g->index(ix + dx, iy + dy)));
      }
      if (!inner) continue;
      CHECK((grad.values.row(k).transpose() - 2 * g->node(k)).norm() < 1e-12);
    }
    const Point2<double> q(0.13, -0.27);
    CHECK((grad(q) - 2 * q).norm() < 1e-12);
  }
  SUBCASE("fundamental solution gradient") {
    const auto y = B::fd_grid(g).solve_state(M::dirac({0, 0}));
    const auto grad = gradient_field(y);
    for (double r : {0.2, 0.3, 0.5}) {
      const double got = grad(Point2<double>(r, 0)).norm();
      CHECK(got == doctest::Approx(1 / (2 * pi * r)).epsilon(0.05));
    }
  }
}

TEST_CASE("errors") {
  const auto sq = build_grid(D::unit_square(), 0.1);
  const auto disk = build_grid(D::unit_disk(), 0.1);
  CHECK_THROWS_AS(B::green_disk(sq), InvalidParameter);
  CHECK_THROWS_AS(B::fd_grid(sq).solve_adjoint(ScalarField<double>::zeros(disk)), ShapeError);
  PointSet<double> out(1, 2);
  out << 1.5, 0.5;
  CHECK_THROWS_AS(B::fd_grid(sq).bind(out), DomainError);
  CHECK_THROWS_AS(B::green_disk(disk).bind(out), DomainError);
  CHECK_THROWS_AS(B::fd_grid(sq).bind(out.topRows(0)).apply(VectorX<double>::Ones(2)), ShapeError);
}
