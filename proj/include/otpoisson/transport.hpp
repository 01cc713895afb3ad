#pragma once

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "otpoisson/geometry.hpp"
#include "otpoisson/measures.hpp"

namespace otp {

enum class CostKind { metric, power, quadratic, radial };

/// Radial transportation cost c(x, xi) = h(|x - xi|).
template <typename Scalar>
class CostModel {
 public:
  static CostModel metric() { return CostModel(CostKind::metric, 1, "metric"); }
  static CostModel quadratic() { return CostModel(CostKind::quadratic, 2, "quadratic"); }
  static CostModel power(Scalar gamma) {
    if (!(gamma > 1 && gamma <= 2)) throw InvalidParameter("gamma must be in (1,2]");
    return CostModel(CostKind::power, gamma, "power");
  }
  /// Generic profile; h(0) = 0 and h nondecreasing are checked on [0, 4].
  static CostModel radial(std::function<Scalar(Scalar)> profile, std::string label) {
    if (!profile) throw InvalidParameter("radial cost needs a profile");
    if (std::abs(profile(0)) > Scalar(1e-14)) throw InvalidParameter("radial cost profile must vanish at 0");
    Scalar prev = profile(0);
    for (int i = 1; i <= 400; ++i) {
      const Scalar v = profile(Scalar(i) / 100);
      if (v < prev) throw InvalidParameter("radial cost profile must be nondecreasing");
      prev = v;
    }
    CostModel c(CostKind::radial, 0, std::move(label));
    c.profile_ = std::move(profile);
    return c;
  }

  CostKind kind() const { return kind_; }
  Scalar gamma() const { return gamma_; }
  const std::string& label() const { return label_; }

  Scalar profile(Scalar r) const {
    switch (kind_) {
      case CostKind::metric:
        return r;
      case CostKind::quadratic:
        return r * r / 2;
      case CostKind::power:
        return std::pow(r, gamma_) / gamma_;
      case CostKind::radial:
        return profile_(r);
    }
    return r;
  }

  Scalar operator()(const Point2<Scalar>& x, const Point2<Scalar>& xi) const { return profile((x - xi).norm()); }

  /// Lipschitz constant of the profile on [0, radius].
  Scalar lipschitz(Scalar radius) const {
    switch (kind_) {
      case CostKind::metric:
        return 1;
      case CostKind::quadratic:
        return radius;
      case CostKind::power:
        return std::pow(radius, gamma_ - 1);
      case CostKind::radial: {
        Scalar lip = 0;
        const int n = 2000;
        for (int i = 0; i < n; ++i) {
          const Scalar a = radius * Scalar(i) / n, b = radius * Scalar(i + 1) / n;
          lip = std::max(lip, (profile_(b) - profile_(a)) / (b - a));
        }
        return lip;
      }
    }
    return 0;
  }

  /// Modulus of strong convexity of z -> h(|z|) on the ball of `radius`.
  Scalar strong_convexity(Scalar radius) const {
    if (kind_ == CostKind::quadratic) return 1;
    if (kind_ == CostKind::power) return (gamma_ - 1) * std::pow(radius, gamma_ - 2);
    throw WrongModel("strong convexity is only defined for power and quadratic costs");
  }

  /// sup |Laplace_xi c(x, xi)| in two dimensions; needs a C^2 cost.
  Scalar laplacian_bound() const {
    if (kind_ == CostKind::quadratic || (kind_ == CostKind::power && gamma_ == 2)) return 2;
    throw WrongModel("the state bound needs a twice differentiable cost (quadratic or gamma = 2)");
  }

 private:
  CostModel(CostKind k, Scalar gamma, std::string label) : kind_(k), gamma_(gamma), label_(std::move(label)) {}

  CostKind kind_;
  Scalar gamma_;
  std::string label_;
  std::function<Scalar(Scalar)> profile_;
};

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct CostMatrix {
  PointSet<Scalar> sources;
  PointSet<Scalar> targets;
  DenseMatrix<Scalar> values;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  Scalar operator()(Eigen::Index i, Eigen::Index j) const { return values(i, j); }
};

template <typename Scalar>
CostMatrix<Scalar> cost_matrix(const CostModel<Scalar>& model, const PointSet<Scalar>& X, const PointSet<Scalar>& Xi) {
  if (X.rows() == 0 || Xi.rows() == 0) throw EmptySet("cost matrix needs nonempty point sets");
  CostMatrix<Scalar> C{X, Xi, DenseMatrix<Scalar>(X.rows(), Xi.rows())};
  for (Eigen::Index j = 0; j < Xi.rows(); ++j) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      C.values(i, j) = model.profile((X.row(i) - Xi.row(j)).norm());
    }
  }
  return C;
}

template <typename Scalar>
using SparsePlan = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

/// Nonnegative coupling between source atoms (rows) and target points (columns).
template <typename Scalar>
struct TransportPlan {
  SparsePlan<Scalar> weights;

  Eigen::Index rows() const { return weights.rows(); }
  Eigen::Index cols() const { return weights.cols(); }

  VectorX<Scalar> row_sums() const {
    VectorX<Scalar> r = VectorX<Scalar>::Zero(rows());
    for (Eigen::Index i = 0; i < weights.outerSize(); ++i) {
      for (typename SparsePlan<Scalar>::InnerIterator it(weights, i); it; ++it) r(i) += it.value();
    }
    return r;
  }

  VectorX<Scalar> column_sums() const {
    VectorX<Scalar> c = VectorX<Scalar>::Zero(cols());
    for (Eigen::Index i = 0; i < weights.outerSize(); ++i) {
      for (typename SparsePlan<Scalar>::InnerIterator it(weights, i); it; ++it) c(it.col()) += it.value();
    }
    return c;
  }

  Scalar cost(const CostMatrix<Scalar>& C) const {
    Scalar acc = 0;
    for (Eigen::Index i = 0; i < weights.outerSize(); ++i) {
      for (typename SparsePlan<Scalar>::InnerIterator it(weights, i); it; ++it) acc += it.value() * C(i, it.col());
    }
    return acc;
  }

  /// Number of strictly positive entries.
  Eigen::Index support_size() const {
    Eigen::Index n = 0;
    for (Eigen::Index i = 0; i < weights.outerSize(); ++i) {
      for (typename SparsePlan<Scalar>::InnerIterator it(weights, i); it; ++it) n += it.value() > 0;
    }
    return n;
  }

  static TransportPlan from_triplets(Eigen::Index m, Eigen::Index n, const std::vector<Eigen::Triplet<Scalar>>& t) {
    TransportPlan p;
    p.weights.resize(m, n);
    p.weights.setFromTriplets(t.begin(), t.end());
    p.weights.makeCompressed();
    return p;
  }
};

template <typename Scalar>
struct DualPotentials {
  VectorX<Scalar> phi;  // per source
  VectorX<Scalar> psi;  // per target

  /// max_ij (phi_i + psi_j - C_ij); feasible when <= tol.
  Scalar feasibility_residual(const CostMatrix<Scalar>& C) const {
    return ((-C.values).colwise() + phi).rowwise().operator+(psi.transpose()).maxCoeff();
  }
};

template <typename Scalar>
struct CTransform {
  VectorX<Scalar> values;
  std::vector<Eigen::Index> argmin;
};

/// psi^cbar(x_i) = min_j (C_ij - psi_j); ties resolve to the lowest column index.
template <typename Scalar>
CTransform<Scalar> c_bar_transform(const VectorX<Scalar>& psi, const CostMatrix<Scalar>& C) {
  if (psi.size() != C.cols()) throw ShapeError("psi must have one value per target point");
  if (C.cols() == 0) throw EmptySet("c-bar transform needs at least one target point");
  CTransform<Scalar> out{VectorX<Scalar>(C.rows()), std::vector<Eigen::Index>(static_cast<std::size_t>(C.rows()))};
  for (Eigen::Index i = 0; i < C.rows(); ++i) {
    Scalar best = C(i, 0) - psi(0);
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < C.cols(); ++j) {
      const Scalar v = C(i, j) - psi(j);
      if (v < best) {
        best = v;
        arg = j;
      }
    }
    out.values(i) = best;
    out.argmin[static_cast<std::size_t>(i)] = arg;
  }
  return out;
}

template <typename Scalar>
CTransform<Scalar> c_bar_transform(const VectorX<Scalar>& psi, const CostModel<Scalar>& model,
                                   const PointSet<Scalar>& X, const PointSet<Scalar>& Xi) {
  return c_bar_transform(psi, cost_matrix(model, X, Xi));
}

template <typename Scalar>
struct ExactSolution {
  TransportPlan<Scalar> plan;
  DualPotentials<Scalar> duals;
  Scalar value = 0;
  Eigen::Index pivots = 0;
};

namespace detail {

template <typename Scalar>
void check_marginals(const VectorX<Scalar>& mu, const VectorX<Scalar>& nu) {
  if ((mu.array() < 0).any() || (nu.array() < 0).any()) throw InvalidParameter("marginals must be nonnegative");
  const Scalar a = mu.sum(), b = nu.sum();
  if (std::abs(a - b) > Scalar(1e-9) * std::max({a, b, std::numeric_limits<Scalar>::min()})) {
    throw Infeasible("marginals carry different total mass");
  }
}

}  // namespace detail

/// Transportation simplex: northwest-corner start, duals from the basis tree (phi_0 = 0),
/// Bland's rule (first improving cell in row-major order, lowest-index leaving cell).
template <typename Scalar>
ExactSolution<Scalar> solve_kantorovich_exact(const VectorX<Scalar>& mu, const VectorX<Scalar>& nu_in,
                                              const CostMatrix<Scalar>& C) {
  const Eigen::Index m = mu.size(), n = nu_in.size();
  if (m == 0 || n == 0) throw EmptySet("transport problem needs nonempty marginals");
  if (C.rows() != m || C.cols() != n) throw ShapeError("cost matrix does not match the marginals");
  detail::check_marginals(mu, nu_in);
  VectorX<Scalar> nu = nu_in;
  if (nu.sum() > 0) nu *= mu.sum() / nu.sum();

  struct Cell {
    Eigen::Index i, j;
    Scalar flow;
  };
  std::vector<Cell> basis;
  basis.reserve(static_cast<std::size_t>(m + n - 1));
  std::vector<Eigen::Index> slot(static_cast<std::size_t>(m * n), -1);
  {
    VectorX<Scalar> supply = mu, demand = nu;
    Eigen::Index i = 0, j = 0;
    while (true) {
      const Scalar x = std::min(supply(i), demand(j));
      slot[static_cast<std::size_t>(i * n + j)] = static_cast<Eigen::Index>(basis.size());
      basis.push_back({i, j, x});
      supply(i) -= x;
      demand(j) -= x;
      if (i == m - 1 && j == n - 1) break;
      if (i == m - 1) {
        ++j;
      } else if (j == n - 1) {
        ++i;
      } else if (supply(i) <= demand(j)) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  const Scalar scale = std::max(Scalar(1), C.values.cwiseAbs().maxCoeff());
  const Scalar eps = Scalar(1e-12) * scale;
  VectorX<Scalar> u(m), v(n);
  std::vector<std::vector<Eigen::Index>> adj(static_cast<std::size_t>(m + n));
  std::vector<Eigen::Index> parent_edge(static_cast<std::size_t>(m + n));
  std::vector<char> seen(static_cast<std::size_t>(m + n));

  auto rebuild_adjacency = [&] {
    for (auto& a : adj) a.clear();
    for (std::size_t e = 0; e < basis.size(); ++e) {
      adj[static_cast<std::size_t>(basis[e].i)].push_back(static_cast<Eigen::Index>(e));
      adj[static_cast<std::size_t>(m + basis[e].j)].push_back(static_cast<Eigen::Index>(e));
    }
  };
  auto other_end = [&](Eigen::Index e, Eigen::Index node) {
    const Cell& c = basis[static_cast<std::size_t>(e)];
    return node < m ? m + c.j : c.i;
  };
  // BFS over the basis tree from `start`; fills parent_edge.
  auto bfs = [&](Eigen::Index start) {
    std::fill(seen.begin(), seen.end(), 0);
    std::deque<Eigen::Index> queue{start};
    seen[static_cast<std::size_t>(start)] = 1;
    parent_edge[static_cast<std::size_t>(start)] = -1;
    while (!queue.empty()) {
      const Eigen::Index node = queue.front();
      queue.pop_front();
      for (Eigen::Index e : adj[static_cast<std::size_t>(node)]) {
        const Eigen::Index nb = other_end(e, node);
        if (seen[static_cast<std::size_t>(nb)]) continue;
        seen[static_cast<std::size_t>(nb)] = 1;
        parent_edge[static_cast<std::size_t>(nb)] = e;
        queue.push_back(nb);
      }
    }
  };
  auto compute_duals = [&] {
    bfs(0);
    u(0) = 0;
    // BFS order is implied by re-walking parents; potentials follow each parent edge.
    std::vector<Eigen::Index> order;
    order.reserve(static_cast<std::size_t>(m + n));
    std::fill(seen.begin(), seen.end(), 0);
    std::deque<Eigen::Index> queue{0};
    seen[0] = 1;
    while (!queue.empty()) {
      const Eigen::Index node = queue.front();
      queue.pop_front();
      for (Eigen::Index e : adj[static_cast<std::size_t>(node)]) {
        const Eigen::Index nb = other_end(e, node);
        if (seen[static_cast<std::size_t>(nb)]) continue;
        seen[static_cast<std::size_t>(nb)] = 1;
        const Cell& c = basis[static_cast<std::size_t>(e)];
        if (nb >= m) {
          v(c.j) = C(c.i, c.j) - u(c.i);
        } else {
          u(c.i) = C(c.i, c.j) - v(c.j);
        }
        queue.push_back(nb);
      }
    }
  };

  ExactSolution<Scalar> sol;
  const Eigen::Index max_pivots = 100 * (m * n) + 1000;
  rebuild_adjacency();
  while (true) {
    compute_duals();
    Eigen::Index ei = -1, ej = -1;
    for (Eigen::Index i = 0; i < m && ei < 0; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (slot[static_cast<std::size_t>(i * n + j)] >= 0) continue;
        if (C(i, j) - u(i) - v(j) < -eps) {
          ei = i;
          ej = j;
          break;
        }
      }
    }
    if (ei < 0) break;
    if (sol.pivots >= max_pivots) throw ConvergenceError("transportation simplex exceeded its pivot budget", 0.0);
    ++sol.pivots;

    // Cycle: tree path from row ei back to column ej, alternating -, +, -, ...
    bfs(m + ej);
    std::vector<Eigen::Index> path;
    for (Eigen::Index node = ei; node != m + ej;) {
      const Eigen::Index e = parent_edge[static_cast<std::size_t>(node)];
      path.push_back(e);
      node = other_end(e, node);
    }
    Scalar theta = std::numeric_limits<Scalar>::infinity();
    Eigen::Index leave = -1;
    for (std::size_t k = 0; k < path.size(); k += 2) {
      const Cell& c = basis[static_cast<std::size_t>(path[k])];
      const Eigen::Index key = c.i * n + c.j;
      if (c.flow < theta ||
          (c.flow == theta && key < basis[static_cast<std::size_t>(leave)].i * n + basis[static_cast<std::size_t>(leave)].j)) {
        theta = c.flow;
        leave = path[k];
      }
    }
    for (std::size_t k = 0; k < path.size(); ++k) {
      Cell& c = basis[static_cast<std::size_t>(path[k])];
      c.flow += (k % 2 == 0) ? -theta : theta;
    }
    Cell& out = basis[static_cast<std::size_t>(leave)];
    slot[static_cast<std::size_t>(out.i * n + out.j)] = -1;
    out = {ei, ej, theta};
    slot[static_cast<std::size_t>(ei * n + ej)] = leave;
    rebuild_adjacency();
  }

  std::vector<Eigen::Triplet<Scalar>> trips;
  for (const Cell& c : basis) {
    if (c.flow > 0) {
      trips.emplace_back(c.i, c.j, c.flow);
      sol.value += c.flow * C(c.i, c.j);
    }
  }
  sol.plan = TransportPlan<Scalar>::from_triplets(m, n, trips);
  sol.duals = {u, v};
  return sol;
}

template <typename Scalar>
struct SinkhornResult {
  TransportPlan<Scalar> plan;
  Scalar value = 0;
  Scalar column_error = 0;  // l1 error of the column marginal; rows are exact
  Eigen::Index iterations = 0;
};

/// Log-domain Sinkhorn iterations for entropic transport at temperature eps; stops once
/// the plan, rescaled to exact row marginals, has column error <= tol in l1.
template <typename Scalar>
SinkhornResult<Scalar> solve_sinkhorn(const VectorX<Scalar>& mu, const VectorX<Scalar>& nu, const CostMatrix<Scalar>& C,
                                      Scalar eps, Scalar tol, Eigen::Index max_iter = 200000) {
  if (!(eps > 0)) throw InvalidParameter("entropic temperature must be positive");
  const Eigen::Index m = mu.size(), n = nu.size();
  if (C.rows() != m || C.cols() != n) throw ShapeError("cost matrix does not match the marginals");
  detail::check_marginals(mu, nu);
  const Scalar ninf = -std::numeric_limits<Scalar>::infinity();
  VectorX<Scalar> f = VectorX<Scalar>::Zero(m), g = VectorX<Scalar>::Zero(n);
  auto logw = [ninf](Scalar w) { return w > 0 ? std::log(w) : ninf; };

  auto lse = [](const VectorX<Scalar>& a) {
    const Scalar mx = a.maxCoeff();
    if (!std::isfinite(mx)) return mx;
    return mx + std::log((a.array() - mx).exp().sum());
  };
  VectorX<Scalar> buf_m(m), buf_n(n);
  auto update_f = [&] {
    for (Eigen::Index i = 0; i < m; ++i) {
      if (!(mu(i) > 0)) {
        f(i) = ninf;
        continue;
      }
      for (Eigen::Index j = 0; j < n; ++j) buf_n(j) = (g(j) - C(i, j)) / eps;
      f(i) = eps * (logw(mu(i)) - lse(buf_n));
    }
  };
  auto update_g = [&] {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!(nu(j) > 0)) {
        g(j) = ninf;
        continue;
      }
      for (Eigen::Index i = 0; i < m; ++i) buf_m(i) = (f(i) - C(i, j)) / eps;
      g(j) = eps * (logw(nu(j)) - lse(buf_m));
    }
  };
  auto entry = [&](Eigen::Index i, Eigen::Index j) -> Scalar {
    if (!std::isfinite(f(i)) || !std::isfinite(g(j))) return 0;
    return std::exp((f(i) + g(j) - C(i, j)) / eps);
  };

  SinkhornResult<Scalar> res;
  for (Eigen::Index it = 1; it <= max_iter; ++it) {
    update_g();
    update_f();
    VectorX<Scalar> cols = VectorX<Scalar>::Zero(n);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) cols(j) += entry(i, j);
    }
    res.column_error = (cols - nu).cwiseAbs().sum();
    res.iterations = it;
    if (res.column_error <= tol) {
      std::vector<Eigen::Triplet<Scalar>> trips;
      for (Eigen::Index i = 0; i < m; ++i) {
        VectorX<Scalar> row(n);
        for (Eigen::Index j = 0; j < n; ++j) row(j) = entry(i, j);
        const Scalar s = row.sum();
        if (!(s > 0)) continue;
        row *= mu(i) / s;
        for (Eigen::Index j = 0; j < n; ++j) {
          if (row(j) > 0) {
            trips.emplace_back(i, j, row(j));
            res.value += row(j) * C(i, j);
          }
        }
      }
      res.plan = TransportPlan<Scalar>::from_triplets(m, n, trips);
      return res;
    }
  }
  throw ConvergenceError("Sinkhorn iterations did not converge", double(res.column_error));
}

template <typename Scalar>
struct DualityGap {
  Scalar gap = 0;
  Scalar feasibility_residual = 0;
  bool feasible = true;
};

/// <C, pi> - (<phi, P0 pi> + <psi, P1 pi>); nonnegative for feasible duals.
template <typename Scalar>
DualityGap<Scalar> duality_gap(const TransportPlan<Scalar>& plan, const DualPotentials<Scalar>& duals,
                               const CostMatrix<Scalar>& C, Scalar feas_tol = Scalar(1e-9)) {
  if (duals.phi.size() != C.rows() || duals.psi.size() != C.cols()) throw ShapeError("duals do not match the cost matrix");
  DualityGap<Scalar> out;
  out.gap = plan.cost(C) - duals.phi.dot(plan.row_sums()) - duals.psi.dot(plan.column_sums());
  out.feasibility_residual = duals.feasibility_residual(C);
  out.feasible = out.feasibility_residual <= feas_tol * std::max(Scalar(1), C.values.cwiseAbs().maxCoeff());
  return out;
}

/// Optimal transport value between u0 and the signed atomic measure (points, weights);
/// +infinity for negative weights or when the total masses differ beyond 1e-9 relative.
template <typename Scalar>
Scalar eval_transport_distance(const CostModel<Scalar>& model, const DiscreteMeasure<Scalar>& u0,
                               const PointSet<Scalar>& points, const VectorX<Scalar>& weights) {
  const Scalar inf = std::numeric_limits<Scalar>::infinity();
  if ((weights.array() < 0).any()) return inf;
  const Scalar a = u0.total_mass(), b = weights.sum();
  if (std::abs(a - b) > Scalar(1e-9) * std::max({a, b, std::numeric_limits<Scalar>::min()})) return inf;
  if (a == 0) return 0;
  auto positive = [](const PointSet<Scalar>& p, const VectorX<Scalar>& w) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      if (w(i) > 0) keep.push_back(i);
    }
    PointSet<Scalar> pp(static_cast<Eigen::Index>(keep.size()), 2);
    VectorX<Scalar> ww(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t r = 0; r < keep.size(); ++r) {
      pp.row(static_cast<Eigen::Index>(r)) = p.row(keep[r]);
      ww(static_cast<Eigen::Index>(r)) = w(keep[r]);
    }
    return std::pair{pp, ww};
  };
  const auto [xs, mu] = positive(u0.points(), u0.weights());
  const auto [ys, nu] = positive(points, weights);
  return solve_kantorovich_exact(mu, nu, cost_matrix(model, xs, ys)).value;
}

template <typename Scalar>
Scalar eval_transport_distance(const CostModel<Scalar>& model, const DiscreteMeasure<Scalar>& u0,
                               const DiscreteMeasure<Scalar>& u) {
  return eval_transport_distance(model, u0, u.points(), u.weights());
}

/// F(psi) = -sum_i u0_i psi^cbar(x_i), the conjugate of the transport distance.
template <typename Scalar>
Scalar eval_F(const VectorX<Scalar>& psi, const CostModel<Scalar>& model, const DiscreteMeasure<Scalar>& u0,
              const PointSet<Scalar>& Xi) {
  return -u0.weights().dot(c_bar_transform(psi, model, u0.points(), Xi).values);
}

}  // namespace otp
