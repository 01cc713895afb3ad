#include <doctest.h>

#include <cmath>
#include <numbers>

#include "otpoisson/geometry.hpp"

using namespace otp;
using D = Domain<double>;

TEST_CASE("coarse square lattice") {
  const auto g = build_grid(D::unit_square(), 0.5);
  CHECK(g->nx == 3);
  CHECK(g->ny == 3);
  CHECK(g->interior.count() == 1);
  const auto k = g->index(1, 1);
  CHECK(g->interior(k));
  CHECK(g->node(k).isApprox(Point2<double>(0.5, 0.5)));
  // clipped weights: centre h^2, edges h^2/2, corners h^2/4
  CHECK(g->weights(k) == doctest::Approx(0.25));
  CHECK(g->weights(g->index(0, 1)) == doctest::Approx(0.125));
  CHECK(g->weights(g->index(0, 0)) == doctest::Approx(0.0625));
}

TEST_CASE("square quadrature is exact") {
  for (double h : {0.25, 0.1, 0.05}) {
    const auto g = build_grid(D::unit_square(), h);
    CHECK(std::abs(g->weights.sum() - 1.0) < 1e-12);
  }
}

TEST_CASE("disk quadrature is first-order accurate") {
  const double pi = std::numbers::pi;
  for (double h : {0.1, 0.05, 0.025}) {
    const auto g = build_grid(D::unit_disk(), h);
    CHECK(std::abs(g->weights.sum() - pi) <= 2 * h * 2 * pi);
    CHECK((g->weights.array() >= 0).all());
  }
}

TEST_CASE("interior nodes have in-range neighbours") {
  for (auto dom : {D::unit_square(), D::unit_disk()}) {
    const auto g = build_grid(dom, 0.07);
    for (Eigen::Index k = 0; k < g->size(); ++k) {
      if (!g->interior(k)) continue;
      CHECK(g->ix(k) > 0);
      CHECK(g->iy(k) > 0);
      CHECK(g->ix(k) < g->nx - 1);
      CHECK(g->iy(k) < g->ny - 1);
      CHECK(dom.contains_open(g->node(k)));
    }
  }
}

TEST_CASE("spacing is never larger than requested") {
  const auto g = build_grid(D::unit_square(), 0.3);
  CHECK(g->h <= 0.3);
  CHECK(g->nodes(g->size() - 1, 0) == doctest::Approx(1.0));
}

TEST_CASE("grid spacing out of range") {
  CHECK_THROWS_AS(build_grid(D::unit_square(), 0.0), InvalidParameter);
  CHECK_THROWS_AS(build_grid(D::unit_square(), -0.1), InvalidParameter);
  CHECK_THROWS_AS(build_grid(D::unit_square(), 0.75), InvalidParameter);
}

TEST_CASE("candidate points") {
  SUBCASE("full square at h = 1/2") {
    CHECK(candidate_points(D::unit_square(), Region<double>::full(), 0.5).rows() == 9);
  }
  SUBCASE("annulus membership") {
    const auto pts = candidate_points(D::unit_disk(), Region<double>::annulus(0.4, 0.6), 0.05);
    CHECK(pts.rows() > 0);
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      const double r = pts.row(i).norm();
      CHECK(r >= 0.4 - 1e-12);
      CHECK(r <= 0.6 + 1e-12);
    }
  }
  SUBCASE("disk count against area") {
    const double h = 0.1;
    const auto pts = candidate_points(D::unit_disk(), Region<double>::full(), h);
    const double expected = std::numbers::pi / (h * h);
    CHECK(std::abs(double(pts.rows()) - expected) <= 2 * std::numbers::pi / h);
  }
  SUBCASE("sorted and unique") {
    const auto pts = candidate_points(D::unit_disk(), Region<double>::box({-0.3, -0.2}, {0.4, 0.5}), 0.05);
    for (Eigen::Index i = 1; i < pts.rows(); ++i) {
      const bool less = pts(i - 1, 0) < pts(i, 0) || (pts(i - 1, 0) == pts(i, 0) && pts(i - 1, 1) < pts(i, 1));
      CHECK(less);
    }
  }
  SUBCASE("empty region") {
    CHECK_THROWS_AS(candidate_points(D::unit_square(), Region<double>::box({2, 2}, {3, 3}), 0.1), EmptySet);
  }
}

TEST_CASE("boundary crossing") {
  const auto sq = D::unit_square();
  CHECK(sq.boundary_crossing({0.9, 0.5}, {1.1, 0.5}) == doctest::Approx(0.5));
  const auto disk = D::unit_disk();
  const double t = disk.boundary_crossing({0.95, 0.0}, {1.05, 0.0});
  CHECK(t == doctest::Approx(0.5));
}

TEST_CASE("float scalar instantiation") {
  const auto g = build_grid(Domain<float>::unit_square(), 0.25f);
  CHECK(std::abs(g->weights.sum() - 1.0f) < 1e-6f);
}
