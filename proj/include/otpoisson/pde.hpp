#pragma once

#include <Eigen/Sparse>

#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <utility>
#include <vector>

#include "otpoisson/geometry.hpp"
#include "otpoisson/measures.hpp"

namespace otp {

/// Grid-sampled function. Dirichlet fields vanish at every non-interior node.
template <typename Scalar>
struct ScalarField {
  std::shared_ptr<const Grid<Scalar>> grid;
  VectorX<Scalar> values;
  bool dirichlet = false;

  static ScalarField zeros(std::shared_ptr<const Grid<Scalar>> g, bool dirichlet = true) {
    return {g, VectorX<Scalar>::Zero(g->size()), dirichlet};
  }

  template <typename Fn>
  static ScalarField sample(std::shared_ptr<const Grid<Scalar>> g, Fn&& fn) {
    ScalarField f{g, VectorX<Scalar>(g->size()), false};
    for (Eigen::Index k = 0; k < g->size(); ++k) f.values(k) = fn(g->node(k));
    return f;
  }

  Scalar operator()(const Point2<Scalar>& x) const;
};

/// Nodal gradient of a scalar field; bilinear interpolation between nodes.
template <typename Scalar>
struct VectorField {
  std::shared_ptr<const Grid<Scalar>> grid;
  PointSet<Scalar> values;

  Point2<Scalar> operator()(const Point2<Scalar>& x) const;
};

namespace detail {

template <typename Scalar>
using Stencil = std::array<std::pair<Eigen::Index, Scalar>, 4>;

// Bilinear weights of the cell containing x (clamped to the bounding box).
template <typename Scalar>
Stencil<Scalar> bilinear(const Grid<Scalar>& g, const Point2<Scalar>& x) {
  auto axis = [&](Scalar coord, Scalar origin, Eigen::Index n) {
    Scalar f = (coord - origin) / g.h;
    f = std::clamp(f, Scalar(0), Scalar(n - 1));
    Eigen::Index i = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::floor(f)), n - 2);
    Scalar t = f - Scalar(i);
    if (std::abs(t) < Scalar(1e-10)) t = 0;
    if (std::abs(1 - t) < Scalar(1e-10)) t = 1;
    return std::pair<Eigen::Index, Scalar>{i, t};
  };
  const auto [ix, tx] = axis(x.x(), g.origin.x(), g.nx);
  const auto [iy, ty] = axis(x.y(), g.origin.y(), g.ny);
  return {{{g.index(ix, iy), (1 - tx) * (1 - ty)},
           {g.index(ix + 1, iy), tx * (1 - ty)},
           {g.index(ix, iy + 1), (1 - tx) * ty},
           {g.index(ix + 1, iy + 1), tx * ty}}};
}

}  // namespace detail

template <typename Scalar>
Scalar ScalarField<Scalar>::operator()(const Point2<Scalar>& x) const {
  Scalar v = 0;
  for (const auto& [k, w] : detail::bilinear(*grid, x)) v += w * values(k);
  return v;
}

template <typename Scalar>
Point2<Scalar> VectorField<Scalar>::operator()(const Point2<Scalar>& x) const {
  Point2<Scalar> v = Point2<Scalar>::Zero();
  for (const auto& [k, w] : detail::bilinear(*grid, x)) v += w * values.row(k).transpose();
  return v;
}

/// Green function of -Laplace on the unit disk with homogeneous Dirichlet data,
/// G(x, xi) = (1/4pi) log((|x|^2 |xi|^2 - 2 x.xi + 1) / |x - xi|^2). Symmetric in its arguments.
template <typename Scalar>
Scalar green_disk(const Point2<Scalar>& x, const Point2<Scalar>& xi) {
  const Scalar num = x.squaredNorm() * xi.squaredNorm() - 2 * x.dot(xi) + 1;
  const Scalar den = (x - xi).squaredNorm();
  if (den == 0) return std::numeric_limits<Scalar>::infinity();
  return std::log(num / den) / (4 * std::numbers::pi_v<Scalar>);
}

/// green_disk with |x - xi| floored at `a`; nonnegative and continuous.
template <typename Scalar>
Scalar green_disk_clamped(const Point2<Scalar>& x, const Point2<Scalar>& xi, Scalar a) {
  const Scalar r2 = std::max((x - xi).squaredNorm(), a * a);
  const Scalar cross = (1 - x.squaredNorm()) * (1 - xi.squaredNorm());
  return std::log1p(std::max(cross, Scalar(0)) / r2) / (4 * std::numbers::pi_v<Scalar>);
}

enum class BackendKind { fd_grid, green_disk };

namespace detail {

// Five-point stiffness on the interior nodes. Arms that leave the domain end at the
// boundary crossing (fraction theta of h) and contribute 1/theta to the diagonal, so
// the matrix stays symmetric and K y = W f is Shortley-Weller scaled by a control volume.
template <typename Scalar>
struct FdSystem {
  std::shared_ptr<const Grid<Scalar>> grid;
  Eigen::SparseMatrix<Scalar> stiffness;
  VectorX<Scalar> inv_diag;
  std::vector<Eigen::Index> unknown_of_node;
  std::vector<Eigen::Index> node_of_unknown;
  Scalar rel_tol = Scalar(1e-12);

  explicit FdSystem(std::shared_ptr<const Grid<Scalar>> g) : grid(std::move(g)) {
    const Grid<Scalar>& G = *grid;
    unknown_of_node.assign(static_cast<std::size_t>(G.size()), -1);
    for (Eigen::Index k = 0; k < G.size(); ++k) {
      if (G.interior(k)) {
        unknown_of_node[static_cast<std::size_t>(k)] = static_cast<Eigen::Index>(node_of_unknown.size());
        node_of_unknown.push_back(k);
      }
    }
    const auto n = static_cast<Eigen::Index>(node_of_unknown.size());
    std::vector<Eigen::Triplet<Scalar>> trips;
    trips.reserve(static_cast<std::size_t>(5 * n));
    constexpr std::array<std::array<int, 2>, 4> dirs{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
    for (Eigen::Index u = 0; u < n; ++u) {
      const Eigen::Index k = node_of_unknown[static_cast<std::size_t>(u)];
      const Eigen::Index ix = G.ix(k), iy = G.iy(k);
      Scalar diag = 0;
      for (const auto& d : dirs) {
        const Eigen::Index nb = G.index(ix + d[0], iy + d[1]);
        const Eigen::Index v = unknown_of_node[static_cast<std::size_t>(nb)];
        if (v >= 0) {
          diag += 1;
          trips.emplace_back(u, v, Scalar(-1));
        } else {
          Scalar theta = G.domain.boundary_crossing(G.node(k), G.node(nb));
          if (theta > 1 - Scalar(1e-9)) theta = 1;
          theta = std::max(theta, Scalar(1e-6));
          diag += 1 / theta;
        }
      }
      trips.emplace_back(u, u, diag);
    }
    stiffness.resize(n, n);
    stiffness.setFromTriplets(trips.begin(), trips.end());
    stiffness.makeCompressed();
    inv_diag = stiffness.diagonal().cwiseInverse();
  }

  Eigen::Index unknowns() const { return static_cast<Eigen::Index>(node_of_unknown.size()); }

  // Jacobi-preconditioned conjugate gradients on the SPD stiffness matrix.
  VectorX<Scalar> solve(const VectorX<Scalar>& b) const {
    const Eigen::Index n = unknowns();
    VectorX<Scalar> x = VectorX<Scalar>::Zero(n);
    const Scalar bnorm = b.norm();
    if (bnorm == 0) return x;
    VectorX<Scalar> r = b;
    VectorX<Scalar> z = inv_diag.cwiseProduct(r);
    VectorX<Scalar> p = z;
    VectorX<Scalar> q(n);
    Scalar rz = r.dot(z);
    const Eigen::Index max_iter = 10 * std::max<Eigen::Index>(n, 1);
    for (Eigen::Index it = 0; it < max_iter; ++it) {
      q.noalias() = stiffness * p;
      const Scalar step = rz / p.dot(q);
      x += step * p;
      r -= step * q;
      if (r.norm() <= rel_tol * bnorm) return x;
      z = inv_diag.cwiseProduct(r);
      const Scalar rz_next = r.dot(z);
      p = z + (rz_next / rz) * p;
      rz = rz_next;
    }
    throw ConvergenceError("conjugate gradients did not reach the requested residual",
                           double(r.norm() / bnorm));
  }

  VectorX<Scalar> gather(const VectorX<Scalar>& nodal) const {
    VectorX<Scalar> out(unknowns());
    for (Eigen::Index u = 0; u < unknowns(); ++u) out(u) = nodal(node_of_unknown[static_cast<std::size_t>(u)]);
    return out;
  }

  VectorX<Scalar> scatter(const VectorX<Scalar>& unk) const {
    VectorX<Scalar> out = VectorX<Scalar>::Zero(grid->size());
    for (Eigen::Index u = 0; u < unknowns(); ++u) out(node_of_unknown[static_cast<std::size_t>(u)]) = unk(u);
    return out;
  }

  // Bilinear deposition of unit atoms at `pts` onto unknowns; weights on
  // non-interior nodes are dropped (boundary mass does not act on the state).
  Eigen::SparseMatrix<Scalar> deposition(const PointSet<Scalar>& pts) const {
    std::vector<Eigen::Triplet<Scalar>> trips;
    for (Eigen::Index j = 0; j < pts.rows(); ++j) {
      const Point2<Scalar> x = pts.row(j).transpose();
      if (!grid->domain.contains(x)) throw DomainError("atom outside the closed domain");
      for (const auto& [k, w] : bilinear(*grid, x)) {
        const Eigen::Index u = unknown_of_node[static_cast<std::size_t>(k)];
        if (u >= 0 && w != 0) trips.emplace_back(u, j, w);
      }
    }
    Eigen::SparseMatrix<Scalar> d(unknowns(), pts.rows());
    d.setFromTriplets(trips.begin(), trips.end());
    return d;
  }
};

}  // namespace detail

template <typename Scalar>
class PoissonBackend;

/// The discrete control-to-state map restricted to atoms at a fixed point set, together
/// with its transpose with respect to the lumped L^2 inner product.
template <typename Scalar>
class StateOperator {
 public:
  const PointSet<Scalar>& points() const { return points_; }
  const std::shared_ptr<const Grid<Scalar>>& grid() const { return grid_; }

  /// State for atoms of the given weights at points().
  ScalarField<Scalar> apply(const VectorX<Scalar>& w) const {
    if (w.size() != points_.rows()) throw ShapeError("weight vector does not match the point set");
    if (fd_) return {grid_, fd_->scatter(fd_->solve(deposit_ * w)), true};
    return {grid_, green_ * w, true};
  }

  /// p evaluated at points(), where -Laplace p = f with homogeneous Dirichlet data.
  /// Satisfies adjoint(f).dot(w) == <apply(w), f>_quad.
  VectorX<Scalar> adjoint(const VectorX<Scalar>& nodal_rhs) const {
    const VectorX<Scalar> wf = grid_->weights.cwiseProduct(nodal_rhs);
    if (fd_) return deposit_.transpose() * fd_->solve(fd_->gather(wf));
    return green_.transpose() * wf;
  }

 private:
  friend class PoissonBackend<Scalar>;
  std::shared_ptr<const Grid<Scalar>> grid_;
  PointSet<Scalar> points_;
  std::shared_ptr<const detail::FdSystem<Scalar>> fd_;
  Eigen::SparseMatrix<Scalar> deposit_;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> green_;
};

/// Solution operator of the homogeneous Dirichlet Poisson problem: either the
/// five-point finite-difference system or the closed-form Green function of the disk
/// (quadrature on the grid for field right-hand sides).
template <typename Scalar>
class PoissonBackend {
 public:
  static PoissonBackend fd_grid(std::shared_ptr<const Grid<Scalar>> grid) {
    PoissonBackend b;
    b.kind_ = BackendKind::fd_grid;
    b.grid_ = grid;
    b.fd_ = std::make_shared<const detail::FdSystem<Scalar>>(grid);
    return b;
  }

  static PoissonBackend green_disk(std::shared_ptr<const Grid<Scalar>> grid) {
    if (grid->domain.kind != DomainKind::unit_disk) {
      throw InvalidParameter("the green_disk backend requires the unit disk");
    }
    PoissonBackend b;
    b.kind_ = BackendKind::green_disk;
    b.grid_ = grid;
    return b;
  }

  BackendKind kind() const { return kind_; }
  const std::shared_ptr<const Grid<Scalar>>& grid() const { return grid_; }
  /// Radius below which the disk Green function is clamped.
  Scalar clamp_radius() const { return grid_->h / 2; }

  StateOperator<Scalar> bind(const PointSet<Scalar>& pts) const {
    StateOperator<Scalar> op;
    op.grid_ = grid_;
    op.points_ = pts;
    if (kind_ == BackendKind::fd_grid) {
      op.fd_ = fd_;
      op.deposit_ = fd_->deposition(pts);
    } else {
      const Grid<Scalar>& G = *grid_;
      for (Eigen::Index j = 0; j < pts.rows(); ++j) {
        if (!G.domain.contains(pts.row(j).transpose())) throw DomainError("atom outside the closed domain");
      }
      op.green_.setZero(G.size(), pts.rows());
      for (Eigen::Index j = 0; j < pts.rows(); ++j) {
        const Point2<Scalar> xi = pts.row(j).transpose();
        for (Eigen::Index k = 0; k < G.size(); ++k) {
          if (G.interior(k)) op.green_(k, j) = green_disk_clamped(G.node(k), xi, clamp_radius());
        }
      }
    }
    return op;
  }

  /// State of the (possibly signed) atomic right-hand side sum_j w_j delta_{pts_j}.
  ScalarField<Scalar> solve_state(const PointSet<Scalar>& pts, const VectorX<Scalar>& w) const {
    return bind(pts).apply(w);
  }

  ScalarField<Scalar> solve_state(const DiscreteMeasure<Scalar>& u) const {
    return solve_state(u.points(), u.weights());
  }

  /// Homogeneous Dirichlet solution of -Laplace p = rhs.
  ScalarField<Scalar> solve_adjoint(const ScalarField<Scalar>& rhs) const {
    if (rhs.grid != grid_) throw ShapeError("right-hand side lives on a different grid");
    const Grid<Scalar>& G = *grid_;
    const VectorX<Scalar> wf = G.weights.cwiseProduct(rhs.values);
    if (kind_ == BackendKind::fd_grid) {
      return {grid_, fd_->scatter(fd_->solve(fd_->gather(wf))), true};
    }
    ScalarField<Scalar> p = ScalarField<Scalar>::zeros(grid_);
    for (Eigen::Index k = 0; k < G.size(); ++k) {
      if (!G.interior(k)) continue;
      Scalar acc = 0;
      for (Eigen::Index l = 0; l < G.size(); ++l) {
        if (G.interior(l) && wf(l) != 0) acc += wf(l) * green_disk_clamped(G.node(k), G.node(l), clamp_radius());
      }
      p.values(k) = acc;
    }
    return p;
  }

  const detail::FdSystem<Scalar>* fd_system() const { return fd_.get(); }

 private:
  BackendKind kind_ = BackendKind::fd_grid;
  std::shared_ptr<const Grid<Scalar>> grid_;
  std::shared_ptr<const detail::FdSystem<Scalar>> fd_;
};

/// Pointwise Green potential sum_j w_j G(x, xi_j); +infinity at an atom.
template <typename Scalar>
Scalar green_potential(const DiscreteMeasure<Scalar>& mu, const Point2<Scalar>& x,
                       const PoissonBackend<Scalar>& backend) {
  const Grid<Scalar>& G = *backend.grid();
  if (!G.domain.contains_open(x, 0)) throw DomainError("green potential evaluated outside the open domain");
  for (Eigen::Index j = 0; j < mu.size(); ++j) {
    if (mu.weights()(j) > 0 && (mu.point(j) - x).norm() <= DiscreteMeasure<Scalar>::merge_tol) {
      return std::numeric_limits<Scalar>::infinity();
    }
  }
  if (backend.kind() == BackendKind::green_disk) {
    Scalar acc = 0;
    for (Eigen::Index j = 0; j < mu.size(); ++j) acc += mu.weights()(j) * green_disk(x, mu.point(j));
    return acc;
  }
  return backend.solve_state(mu)(x);
}

/// Central differences where both neighbours lie in the closed domain, one-sided
/// differences next to the boundary.
template <typename Scalar>
VectorField<Scalar> gradient_field(const ScalarField<Scalar>& f) {
  const Grid<Scalar>& G = *f.grid;
  VectorField<Scalar> out{f.grid, PointSet<Scalar>::Zero(G.size(), 2)};
  auto usable = [&](Eigen::Index ix, Eigen::Index iy) {
    if (ix < 0 || iy < 0 || ix >= G.nx || iy >= G.ny) return false;
    return G.domain.contains(G.node(G.index(ix, iy)));
  };
  for (Eigen::Index k = 0; k < G.size(); ++k) {
    const Eigen::Index ix = G.ix(k), iy = G.iy(k);
    if (!usable(ix, iy)) continue;
    for (int c = 0; c < 2; ++c) {
      const Eigen::Index dx = c == 0 ? 1 : 0, dy = c == 1 ? 1 : 0;
      const bool fwd = usable(ix + dx, iy + dy);
      const bool bwd = usable(ix - dx, iy - dy);
      const Scalar v = f.values(k);
      if (fwd && bwd) {
        out.values(k, c) = (f.values(G.index(ix + dx, iy + dy)) - f.values(G.index(ix - dx, iy - dy))) / (2 * G.h);
      } else if (fwd) {
        out.values(k, c) = (f.values(G.index(ix + dx, iy + dy)) - v) / G.h;
      } else if (bwd) {
        out.values(k, c) = (v - f.values(G.index(ix - dx, iy - dy))) / G.h;
      }
    }
  }
  return out;
}

}  // namespace otp
