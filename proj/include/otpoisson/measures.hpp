#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <vector>

#include "otpoisson/geometry.hpp"

namespace otp {

/// Finite nonnegative combination of Dirac masses. Atoms closer than `merge_tol` are
/// merged into the first occurrence by summing weights; insertion order is otherwise kept.
template <typename Scalar>
class DiscreteMeasure {
 public:
  static constexpr Scalar merge_tol = Scalar(1e-12);

  DiscreteMeasure() : points_(0, 2), weights_(0) {}

  DiscreteMeasure(const PointSet<Scalar>& points, const VectorX<Scalar>& weights) {
    if (points.rows() != weights.size()) {
      throw ShapeError("measure has " + std::to_string(points.rows()) + " points but " +
                       std::to_string(weights.size()) + " weights");
    }
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
      if (!std::isfinite(weights(i)) || !points.row(i).allFinite()) {
        throw InvalidParameter("measure atoms must be finite");
      }
      if (weights(i) < 0) throw InvalidParameter("measure weights must be nonnegative");
    }
    merge(points, weights);
  }

  static DiscreteMeasure dirac(const Point2<Scalar>& a, Scalar mass = 1) {
    PointSet<Scalar> p(1, 2);
    p.row(0) = a.transpose();
    return DiscreteMeasure(p, VectorX<Scalar>::Constant(1, mass));
  }

  const PointSet<Scalar>& points() const { return points_; }
  const VectorX<Scalar>& weights() const { return weights_; }
  Point2<Scalar> point(Eigen::Index i) const { return points_.row(i).transpose(); }
  Eigen::Index size() const { return weights_.size(); }
  Scalar total_mass() const { return weights_.sum(); }

 private:
  void merge(const PointSet<Scalar>& points, const VectorX<Scalar>& weights) {
    const Eigen::Index n = weights.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      if (points(a, 0) != points(b, 0)) return points(a, 0) < points(b, 0);
      if (points(a, 1) != points(b, 1)) return points(a, 1) < points(b, 1);
      return a < b;
    });
    // representative (lowest original index) for each atom
    std::vector<Eigen::Index> rep(static_cast<std::size_t>(n));
    std::iota(rep.begin(), rep.end(), Eigen::Index{0});
    for (std::size_t s = 0; s < order.size();) {
      std::size_t e = s + 1;
      Eigen::Index head = order[s];
      while (e < order.size() && points(order[e], 0) - points(order[s], 0) <= merge_tol) {
        if ((points.row(order[e]) - points.row(order[s])).norm() <= merge_tol) {
          head = std::min(head, order[e]);
        } else {
          break;
        }
        ++e;
      }
      for (std::size_t t = s; t < e; ++t) rep[static_cast<std::size_t>(order[t])] = head;
      s = e;
    }
    std::vector<Eigen::Index> slot(static_cast<std::size_t>(n), -1);
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (rep[static_cast<std::size_t>(i)] == i) slot[static_cast<std::size_t>(i)] = count++;
    }
    points_.resize(count, 2);
    weights_.setZero(count);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index s = slot[static_cast<std::size_t>(rep[static_cast<std::size_t>(i)])];
      if (rep[static_cast<std::size_t>(i)] == i) points_.row(s) = points.row(i);
      weights_(s) += weights(i);
    }
  }

  PointSet<Scalar> points_;
  VectorX<Scalar> weights_;
};

/// Image measure T_# mu: each atom is moved by `map`, coinciding images are merged.
template <typename Scalar, typename Map>
DiscreteMeasure<Scalar> pushforward(Map&& map, const DiscreteMeasure<Scalar>& mu) {
  PointSet<Scalar> image(mu.size(), 2);
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const Point2<Scalar> y = map(mu.point(i));
    image.row(i) = y.transpose();
  }
  return DiscreteMeasure<Scalar>(image, mu.weights());
}

/// Atoms carrying more than mass_tol * total_mass.
template <typename Scalar>
PointSet<Scalar> support(const DiscreteMeasure<Scalar>& mu, Scalar mass_tol) {
  if (mass_tol < 0) throw InvalidParameter("mass_tol must be nonnegative");
  const Scalar cut = mass_tol * mu.total_mass();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (mu.weights()(i) > cut) keep.push_back(i);
  }
  PointSet<Scalar> out(static_cast<Eigen::Index>(keep.size()), 2);
  for (std::size_t r = 0; r < keep.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = mu.points().row(keep[r]);
  return out;
}

template <typename Scalar>
struct AtomReport {
  std::vector<Scalar> max_ball_mass;  // per refinement level
  std::vector<Scalar> ratios;         // level k+1 over level k
  bool atomic = false;
};

/// Largest mass of mu inside a closed ball of `radius` centred at one of its atoms.
template <typename Scalar>
Scalar max_ball_mass(const DiscreteMeasure<Scalar>& mu, Scalar radius) {
  if (mu.size() == 0) return 0;
  // bucket hashing with cell size = radius
  auto key = [radius](Scalar x, Scalar y) {
    const auto bx = static_cast<long long>(std::floor(x / radius));
    const auto by = static_cast<long long>(std::floor(y / radius));
    return std::pair<long long, long long>{bx, by};
  };
  auto pack = [](long long a, long long b) { return (a << 32) ^ (b & 0xffffffffLL); };
  std::unordered_map<long long, std::vector<Eigen::Index>> buckets;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    auto [bx, by] = key(mu.points()(i, 0), mu.points()(i, 1));
    buckets[pack(bx, by)].push_back(i);
  }
  Scalar best = 0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    auto [bx, by] = key(mu.points()(i, 0), mu.points()(i, 1));
    Scalar mass = 0;
    for (long long dx = -1; dx <= 1; ++dx) {
      for (long long dy = -1; dy <= 1; ++dy) {
        auto it = buckets.find(pack(bx + dx, by + dy));
        if (it == buckets.end()) continue;
        for (Eigen::Index j : it->second) {
          if ((mu.points().row(i) - mu.points().row(j)).norm() <= radius * (1 + Scalar(1e-12))) {
            mass += mu.weights()(j);
          }
        }
      }
    }
    best = std::max(best, mass);
  }
  return best;
}

/// Refinement-based atom detection: the maximal mass in balls of radius 2h is tracked
/// across levels; the sequence is flagged atomic when it fails to decay (every
/// consecutive ratio above 0.8).
template <typename Scalar>
AtomReport<Scalar> detect_atoms(const std::vector<DiscreteMeasure<Scalar>>& levels,
                                const std::vector<Scalar>& node_radius) {
  if (levels.size() < 2) throw InsufficientData("atom detection needs at least two refinement levels");
  if (node_radius.size() != levels.size()) throw ShapeError("one node radius per level is required");
  AtomReport<Scalar> report;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    report.max_ball_mass.push_back(max_ball_mass(levels[l], 2 * node_radius[l]));
  }
  report.atomic = true;
  for (std::size_t l = 1; l < levels.size(); ++l) {
    const Scalar prev = report.max_ball_mass[l - 1];
    const Scalar ratio = prev > 0 ? report.max_ball_mass[l] / prev : Scalar(0);
    report.ratios.push_back(ratio);
    if (!(ratio > Scalar(0.8))) report.atomic = false;
  }
  return report;
}

/// Histogram density on a grid: node value = mass in the node's cell / quadrature weight.
template <typename Scalar>
struct DensityEstimate {
  std::shared_ptr<const Grid<Scalar>> grid;
  VectorX<Scalar> values;
  Scalar norm_inf = 0;

  Scalar integral() const { return grid->weights.dot(values); }
  /// Piecewise-constant lookup; zero outside the bounding box.
  Scalar at(const Point2<Scalar>& p) const {
    if (!grid->in_bounding_box(p, grid->h / 2)) return 0;
    return values(grid->nearest(p));
  }
};

template <typename Scalar>
DensityEstimate<Scalar> estimate_density(const DiscreteMeasure<Scalar>& mu,
                                         std::shared_ptr<const Grid<Scalar>> grid) {
  DensityEstimate<Scalar> est;
  est.grid = grid;
  est.values.setZero(grid->size());
  VectorX<Scalar> cell_mass = VectorX<Scalar>::Zero(grid->size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const Point2<Scalar> p = mu.point(i);
    if (!grid->in_bounding_box(p, grid->h / 2)) continue;
    cell_mass(grid->nearest(p)) += mu.weights()(i);
  }
  for (Eigen::Index k = 0; k < grid->size(); ++k) {
    if (grid->weights(k) > 0) est.values(k) = cell_mass(k) / grid->weights(k);
  }
  est.norm_inf = est.values.size() ? est.values.maxCoeff() : Scalar(0);
  return est;
}

}  // namespace otp
