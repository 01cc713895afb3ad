#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "otpoisson/errors.hpp"

namespace otp {

template <typename Scalar>
using Point2 = Eigen::Matrix<Scalar, 2, 1>;

// One point per row.
template <typename Scalar>
using PointSet = Eigen::Matrix<Scalar, Eigen::Dynamic, 2>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

enum class DomainKind { unit_square, unit_disk };

inline std::string to_string(DomainKind kind) {
  return kind == DomainKind::unit_square ? "unit_square" : "unit_disk";
}

/// Computational domain: the unit square [0,1]^2 or the open unit disk B_1(0).
template <typename Scalar>
struct Domain {
  DomainKind kind = DomainKind::unit_square;
  Point2<Scalar> lo = Point2<Scalar>::Zero();
  Point2<Scalar> hi = Point2<Scalar>::Ones();

  static Domain unit_square() {
    return {DomainKind::unit_square, Point2<Scalar>(0, 0), Point2<Scalar>(1, 1)};
  }
  static Domain unit_disk() {
    return {DomainKind::unit_disk, Point2<Scalar>(-1, -1), Point2<Scalar>(1, 1)};
  }

  /// Membership in the closed domain, with an absolute slack `tol`.
  bool contains(const Point2<Scalar>& p, Scalar tol = Scalar(1e-12)) const {
    if (kind == DomainKind::unit_square) {
      return p.x() >= -tol && p.x() <= 1 + tol && p.y() >= -tol && p.y() <= 1 + tol;
    }
    return p.norm() <= 1 + tol;
  }

  /// Strict interior; points within `margin` of the boundary are excluded.
  bool contains_open(const Point2<Scalar>& p, Scalar margin = Scalar(1e-10)) const {
    if (kind == DomainKind::unit_square) {
      return p.x() > margin && p.x() < 1 - margin && p.y() > margin && p.y() < 1 - margin;
    }
    return p.norm() < 1 - margin;
  }

  Scalar area() const {
    return kind == DomainKind::unit_square ? Scalar(1) : std::numbers::pi_v<Scalar>;
  }
  Scalar perimeter() const {
    return kind == DomainKind::unit_square ? Scalar(4) : 2 * std::numbers::pi_v<Scalar>;
  }
  Scalar diameter() const {
    return kind == DomainKind::unit_square ? std::sqrt(Scalar(2)) : Scalar(2);
  }

  /// Distance to the boundary for a point of the closed domain.
  Scalar distance_to_boundary(const Point2<Scalar>& p) const {
    if (kind == DomainKind::unit_square) {
      return std::min({p.x(), 1 - p.x(), p.y(), 1 - p.y()});
    }
    return 1 - p.norm();
  }

  /// For `a` inside and `b` outside, the fraction t in (0,1] with a + t(b-a) on the boundary.
  Scalar boundary_crossing(const Point2<Scalar>& a, const Point2<Scalar>& b) const {
    const Point2<Scalar> d = b - a;
    if (kind == DomainKind::unit_square) {
      Scalar t = 1;
      for (int c = 0; c < 2; ++c) {
        if (d(c) > 0) t = std::min(t, (1 - a(c)) / d(c));
        if (d(c) < 0) t = std::min(t, -a(c) / d(c));
      }
      return std::clamp(t, Scalar(0), Scalar(1));
    }
    // |a + t d|^2 = 1
    const Scalar qa = d.squaredNorm();
    const Scalar qb = 2 * a.dot(d);
    const Scalar qc = a.squaredNorm() - 1;
    const Scalar disc = std::max(Scalar(0), qb * qb - 4 * qa * qc);
    const Scalar t = (-qb + std::sqrt(disc)) / (2 * qa);
    return std::clamp(t, Scalar(0), Scalar(1));
  }

  /// Fraction of the axis-aligned square cell [c - h/2, c + h/2]^2 inside the domain.
  /// Exact on the square; 4x4 midpoint subsampling on cut cells of the disk.
  Scalar cell_fraction(const Point2<Scalar>& c, Scalar h) const {
    if (kind == DomainKind::unit_square) {
      auto overlap = [h](Scalar x) {
        return std::clamp(std::min(x + h / 2, Scalar(1)) - std::max(x - h / 2, Scalar(0)),
                          Scalar(0), h) / h;
      };
      return overlap(c.x()) * overlap(c.y());
    }
    const Scalar half = h / 2;
    const Scalar far = Point2<Scalar>(std::abs(c.x()) + half, std::abs(c.y()) + half).norm();
    if (far <= 1) return 1;
    const Scalar nx = std::max(Scalar(0), std::abs(c.x()) - half);
    const Scalar ny = std::max(Scalar(0), std::abs(c.y()) - half);
    if (std::hypot(nx, ny) >= 1) return 0;
    int inside = 0;
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        const Point2<Scalar> s(c.x() + (Scalar(2 * i - 3) / 8) * h, c.y() + (Scalar(2 * j - 3) / 8) * h);
        if (s.norm() < 1) ++inside;
      }
    }
    return Scalar(inside) / 16;
  }
};

/// Uniform lattice over the domain's bounding box. Node k sits at (ix, iy) with
/// k = iy * nx + ix. Immutable once built; share through shared_ptr<const Grid>.
template <typename Scalar>
struct Grid {
  Domain<Scalar> domain;
  Scalar h = 0;
  Eigen::Index nx = 0;
  Eigen::Index ny = 0;
  Point2<Scalar> origin = Point2<Scalar>::Zero();
  PointSet<Scalar> nodes;
  Mask interior;            // strictly inside the domain
  VectorX<Scalar> weights;  // lumped quadrature weights (cell area inside the domain)

  Eigen::Index size() const { return nx * ny; }
  Eigen::Index index(Eigen::Index ix, Eigen::Index iy) const { return iy * nx + ix; }
  Eigen::Index ix(Eigen::Index k) const { return k % nx; }
  Eigen::Index iy(Eigen::Index k) const { return k / nx; }
  Point2<Scalar> node(Eigen::Index k) const { return nodes.row(k).transpose(); }

  Eigen::Index nearest(const Point2<Scalar>& p) const {
    const auto cx = static_cast<Eigen::Index>(std::llround((p.x() - origin.x()) / h));
    const auto cy = static_cast<Eigen::Index>(std::llround((p.y() - origin.y()) / h));
    return index(std::clamp<Eigen::Index>(cx, 0, nx - 1), std::clamp<Eigen::Index>(cy, 0, ny - 1));
  }

  bool in_bounding_box(const Point2<Scalar>& p, Scalar tol = Scalar(1e-12)) const {
    return p.x() >= origin.x() - tol && p.y() >= origin.y() - tol &&
           p.x() <= origin.x() + (nx - 1) * h + tol && p.y() <= origin.y() + (ny - 1) * h + tol;
  }

  /// L^2 inner product by lumped quadrature.
  Scalar inner(const VectorX<Scalar>& f, const VectorX<Scalar>& g) const {
    return (weights.array() * f.array() * g.array()).sum();
  }
};

namespace detail {

// Number of lattice intervals of spacing <= h covering [0, width].
template <typename Scalar>
Eigen::Index intervals(Scalar width, Scalar h) {
  return static_cast<Eigen::Index>(std::ceil(width / h - Scalar(1e-9)));
}

}  // namespace detail

/// Builds the lattice for `domain` with spacing at most `h` (the spacing is shrunk so
/// that the bounding box is covered exactly).
template <typename Scalar>
std::shared_ptr<const Grid<Scalar>> build_grid(const Domain<Scalar>& domain, Scalar h) {
  if (!(h > 0) || h > Scalar(0.5)) {
    throw InvalidParameter("grid spacing h must lie in (0, 1/2], got " + std::to_string(double(h)));
  }
  auto grid = std::make_shared<Grid<Scalar>>();
  grid->domain = domain;
  const Point2<Scalar> extent = domain.hi - domain.lo;
  const Eigen::Index n = detail::intervals(extent.x(), h);
  grid->h = extent.x() / Scalar(n);
  grid->nx = n + 1;
  grid->ny = detail::intervals(extent.y(), grid->h) + 1;
  grid->origin = domain.lo;
  const Eigen::Index size = grid->nx * grid->ny;
  grid->nodes.resize(size, 2);
  grid->interior.resize(size);
  grid->weights.resize(size);
  for (Eigen::Index iy = 0; iy < grid->ny; ++iy) {
    for (Eigen::Index ix = 0; ix < grid->nx; ++ix) {
      const Eigen::Index k = grid->index(ix, iy);
      const Point2<Scalar> p(domain.lo.x() + Scalar(ix) * grid->h, domain.lo.y() + Scalar(iy) * grid->h);
      grid->nodes.row(k) = p.transpose();
      grid->interior(k) = domain.contains_open(p);
      grid->weights(k) = grid->h * grid->h * domain.cell_fraction(p, grid->h);
    }
  }
  return grid;
}

/// Region from which candidate control points are drawn.
template <typename Scalar>
struct Region {
  enum class Kind { full, annulus, box };
  Kind kind = Kind::full;
  Scalar r1 = 0, r2 = 0;
  Point2<Scalar> lo = Point2<Scalar>::Zero(), hi = Point2<Scalar>::Zero();

  static Region full() { return {}; }
  static Region annulus(Scalar inner, Scalar outer) {
    Region r;
    r.kind = Kind::annulus;
    r.r1 = inner;
    r.r2 = outer;
    return r;
  }
  static Region box(const Point2<Scalar>& lo, const Point2<Scalar>& hi) {
    Region r;
    r.kind = Kind::box;
    r.lo = lo;
    r.hi = hi;
    return r;
  }

  bool contains(const Point2<Scalar>& p, Scalar tol = Scalar(1e-12)) const {
    switch (kind) {
      case Kind::full:
        return true;
      case Kind::annulus: {
        const Scalar r = p.norm();
        return r >= r1 - tol && r <= r2 + tol;
      }
      case Kind::box:
        return (p.array() >= lo.array() - tol).all() && (p.array() <= hi.array() + tol).all();
    }
    return false;
  }
};

/// Sorts points lexicographically and drops exact-duplicate rows.
template <typename Scalar>
PointSet<Scalar> sorted_unique(const std::vector<Point2<Scalar>>& pts) {
  std::vector<Point2<Scalar>> v = pts;
  auto less = [](const Point2<Scalar>& a, const Point2<Scalar>& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  };
  std::sort(v.begin(), v.end(), less);
  v.erase(std::unique(v.begin(), v.end(), [](const auto& a, const auto& b) { return a == b; }),
          v.end());
  PointSet<Scalar> out(static_cast<Eigen::Index>(v.size()), 2);
  for (std::size_t i = 0; i < v.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
  return out;
}

/// Lattice points of the closed domain that fall in `region`, on the same lattice as
/// build_grid(domain, h). Sorted lexicographically by (x, y).
template <typename Scalar>
PointSet<Scalar> candidate_points(const Domain<Scalar>& domain, const Region<Scalar>& region, Scalar h) {
  if (region.kind == Region<Scalar>::Kind::annulus && !(region.r2 >= region.r1 && region.r1 >= 0)) {
    throw InvalidParameter("annulus radii must satisfy 0 <= r1 <= r2");
  }
  if (region.kind == Region<Scalar>::Kind::box && !(region.lo.array() <= region.hi.array()).all()) {
    throw InvalidParameter("box corners must satisfy lo <= hi");
  }
  const auto grid = build_grid(domain, h);
  std::vector<Point2<Scalar>> pts;
  for (Eigen::Index k = 0; k < grid->size(); ++k) {
    const Point2<Scalar> p = grid->node(k);
    if (domain.contains(p) && region.contains(p)) pts.push_back(p);
  }
  if (pts.empty()) throw EmptySet("candidate region contains no lattice points");
  return sorted_unique(pts);
}

}  // namespace otp
