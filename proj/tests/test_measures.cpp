#include <doctest.h>

#include <random>

#include "otpoisson/measures.hpp"

using namespace otp;
using M = DiscreteMeasure<double>;

namespace {

M make(std::initializer_list<std::array<double, 3>> atoms) {
  PointSet<double> p(static_cast<Eigen::Index>(atoms.size()), 2);
  VectorX<double> w(static_cast<Eigen::Index>(atoms.size()));
  Eigen::Index i = 0;
  for (const auto& a : atoms) {
    p.row(i) << a[0], a[1];
    w(i++) = a[2];
  }
  return M(p, w);
}

M random_measure(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0, 1);
  PointSet<double> p(n, 2);
  VectorX<double> w(n);
  for (int i = 0; i < n; ++i) {
    p.row(i) << u(rng), u(rng);
    w(i) = u(rng);
  }
  return M(p, w);
}

}  // namespace

TEST_CASE("construction validates and merges") {
  CHECK_THROWS_AS(make({{0, 0, -1}}), InvalidParameter);
  CHECK_THROWS_AS(make({{0, 0, std::nan("")}}), InvalidParameter);
  const auto mu = make({{0.5, 0.5, 1}, {0.1, 0.2, 2}, {0.5, 0.5 + 1e-14, 3}});
  REQUIRE(mu.size() == 2);
  CHECK(mu.point(0).isApprox(Point2<double>(0.5, 0.5)));
  CHECK(mu.weights()(0) == 4);
  CHECK(mu.weights()(1) == 2);
  CHECK(mu.total_mass() == 6);
}

TEST_CASE("pushforward") {
  std::mt19937_64 rng(3);
  const auto mu = random_measure(rng, 20);
  SUBCASE("identity") {
    const auto nu = pushforward([](const Point2<double>& x) { return x; }, mu);
    CHECK(nu.points() == mu.points());
    CHECK(nu.weights() == mu.weights());
  }
  SUBCASE("constant map collects the mass") {
    const Point2<double> a(0.3, 0.7);
    const auto nu = pushforward([&](const Point2<double>&) { return a; }, mu);
    REQUIRE(nu.size() == 1);
    CHECK(nu.point(0) == a);
    CHECK(std::abs(nu.total_mass() - mu.total_mass()) <= 1e-12 * mu.total_mass());
  }
  SUBCASE("scaling") {
    const auto nu = pushforward([](const Point2<double>& x) { return Point2<double>(2 * x); }, make({{0, 0, 1}, {1, 0, 2}}));
    REQUIRE(nu.size() == 2);
    CHECK(nu.point(1) == Point2<double>(2, 0));
    CHECK(nu.weights()(1) == 2);
  }
  SUBCASE("support of the image is the image of the support") {
    auto T = [](const Point2<double>& x) { return Point2<double>(x.y() + 1, 2 * x.x()); };  // injective
    const auto img = support(pushforward(T, mu), 1e-3);
    const auto src = support(mu, 1e-3);
    REQUIRE(img.rows() == src.rows());
    for (Eigen::Index i = 0; i < src.rows(); ++i) {
      const Point2<double> t = T(src.row(i).transpose());
      CHECK((img.rowwise() - t.transpose()).rowwise().norm().minCoeff() == 0);
    }
  }
}

TEST_CASE("support thresholds relative to mass") {
  CHECK(support(M::dirac({0.2, 0.4}), 0.0).rows() == 1);
  const auto mu = make({{0, 0, 1}, {1, 1, 1e-15}});
  const auto s = support(mu, 1e-10);
  REQUIRE(s.rows() == 1);
  CHECK(s.row(0).norm() == 0);
  CHECK_THROWS_AS(support(mu, -1.0), InvalidParameter);
}

TEST_CASE("atom detection") {
  std::vector<double> hs{0.1, 0.05, 0.025};
  SUBCASE("a Dirac stays atomic") {
    std::vector<M> levels(3, M::dirac({0.5, 0.5}));
    const auto rep = detect_atoms(levels, hs);
    CHECK(rep.atomic);
    CHECK(rep.max_ball_mass[2] == 1);
  }
  SUBCASE("uniform lattice measure is not atomic") {
    std::vector<M> levels;
    for (double h : hs) {
      const auto g = build_grid(Domain<double>::unit_square(), h);
      levels.emplace_back(g->nodes, g->weights);
    }
    const auto rep = detect_atoms(levels, hs);
    CHECK_FALSE(rep.atomic);
    CHECK(rep.ratios[0] < 0.5);
  }
  SUBCASE("a ring measure is not atomic") {
    std::vector<M> levels;
    for (double h : hs) {
      const int n = static_cast<int>(std::ceil(std::numbers::pi / h));
      PointSet<double> p(n, 2);
      for (int i = 0; i < n; ++i) p.row(i) << 0.5 * std::cos(2 * std::numbers::pi * i / n), 0.5 * std::sin(2 * std::numbers::pi * i / n);
      levels.emplace_back(p, VectorX<double>::Constant(n, 1.0 / n));
    }
    const auto rep = detect_atoms(levels, hs);
    CHECK_FALSE(rep.atomic);
    // ball of radius 2h around a point of the ring carries about 4h / pi of the mass
    CHECK(rep.max_ball_mass[1] == doctest::Approx(4 * 0.05 / std::numbers::pi).epsilon(0.35));
  }
  SUBCASE("one level is not enough") {
    CHECK_THROWS_AS(detect_atoms(std::vector<M>{M::dirac({0, 0})}, std::vector<double>{0.1}), InsufficientData);
  }
}

TEST_CASE("density estimate") {
  const auto g = build_grid(Domain<double>::unit_square(), 0.1);
  SUBCASE("Dirac") {
    const auto d = estimate_density(M::dirac({0.52, 0.49}, 2.0), g);
    const auto k = g->nearest({0.5, 0.5});
    CHECK(d.values(k) == doctest::Approx(2.0 / (0.1 * 0.1)));
    CHECK(d.integral() == doctest::Approx(2.0));
  }
  SUBCASE("uniform measure") {
    const auto d = estimate_density(M(g->nodes, g->weights), g);
    for (Eigen::Index k = 0; k < g->size(); ++k) {
      if (g->interior(k)) CHECK(d.values(k) == doctest::Approx(1.0));
    }
    CHECK(std::abs(d.integral() - 1.0) < 1e-12);
  }
  SUBCASE("integral reproduces the mass") {
    std::mt19937_64 rng(11);
    const auto mu = random_measure(rng, 200);
    CHECK(std::abs(estimate_density(mu, g).integral() - mu.total_mass()) <= 1e-12 * mu.total_mass());
  }
}
