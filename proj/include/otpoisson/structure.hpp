#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "otpoisson/control.hpp"

namespace otp {

template <typename Scalar>
CertificateReport<Scalar> check_optimality(const SolveReport<Scalar>& rep, const ControlProblem<Scalar>& prob, Scalar tol) {
  return detail::certify(rep.plan, rep.duals, rep.p_candidates, prob.alpha, prob.C, prob.u0.weights(), rep.gap,
                         rep.objective, tol);
}

/// Gradient of the adjoint at the candidate points.
template <typename Scalar>
PointSet<Scalar> adjoint_gradient(const ScalarField<Scalar>& p, const PointSet<Scalar>& pts) {
  const VectorField<Scalar> g = gradient_field(p);
  PointSet<Scalar> out(pts.rows(), 2);
  for (Eigen::Index j = 0; j < pts.rows(); ++j) out.row(j) = g(pts.row(j).transpose()).transpose();
  return out;
}

template <typename Scalar>
struct RayReport {
  Scalar gradient_excess = 0;  // max (|grad p(xi)| - alpha)^+ over charged targets
  Scalar collinearity = 0;     // max distance of a source from the ray through its target
  Scalar norm_defect = 0;      // max ||grad p(xi)| - alpha| over targets receiving moved mass
  Eigen::Index charged_targets = 0;
  Eigen::Index moved_targets = 0;
  Scalar tol = 0;
  bool pass = true;
};

/// Metric-cost transport rays: mass arriving at xi travels along [xi, xi + r grad p(xi)/|grad p(xi)|].
/// Plan entries below mass_tol * (row mass) are ignored.
template <typename Scalar>
RayReport<Scalar> check_transport_rays(const TransportPlan<Scalar>& plan, const PointSet<Scalar>& sources,
                                       const PointSet<Scalar>& targets, const PointSet<Scalar>& grad_p, Scalar alpha,
                                       const CostModel<Scalar>& cost, Scalar tol, Scalar mass_tol = Scalar(1e-8)) {
  if (cost.kind() != CostKind::metric) throw WrongModel("transport rays are defined for the metric cost");
  if (grad_p.rows() != targets.rows()) throw ShapeError("one adjoint gradient per target is required");
  RayReport<Scalar> rep;
  rep.tol = tol;
  const VectorX<Scalar> rows = plan.row_sums();
  std::vector<char> charged(static_cast<std::size_t>(targets.rows()), 0), moved(charged);
  for (Eigen::Index i = 0; i < plan.weights.outerSize(); ++i) {
    for (typename SparsePlan<Scalar>::InnerIterator it(plan.weights, i); it; ++it) {
      if (!(it.value() > mass_tol * rows(i))) continue;
      const Eigen::Index j = it.col();
      charged[static_cast<std::size_t>(j)] = 1;
      const Point2<Scalar> d = (sources.row(i) - targets.row(j)).transpose();
      const Scalar r = d.norm();
      if (r <= Scalar(1e-12)) continue;
      moved[static_cast<std::size_t>(j)] = 1;
      const Point2<Scalar> g = grad_p.row(j).transpose();
      const Scalar gn = g.norm();
      const Scalar dist = gn > 0 ? (d - r * g / gn).norm() : r;
      rep.collinearity = std::max(rep.collinearity, dist);
    }
  }
  for (Eigen::Index j = 0; j < targets.rows(); ++j) {
    if (!charged[static_cast<std::size_t>(j)]) continue;
    ++rep.charged_targets;
    const Scalar gn = grad_p.row(j).norm();
    rep.gradient_excess = std::max(rep.gradient_excess, gn - alpha);
    if (moved[static_cast<std::size_t>(j)]) {
      ++rep.moved_targets;
      rep.norm_defect = std::max(rep.norm_defect, std::abs(gn - alpha));
    }
  }
  rep.pass = rep.gradient_excess <= tol && rep.collinearity <= tol && rep.norm_defect <= tol;
  return rep;
}

template <typename Scalar>
struct CurvatureReport {
  Scalar kappa = 0;
  Scalar beta = 0;
  Scalar alpha = 0;
  Eigen::Index pairs = 0;
  bool verdict = false;  // kappa < alpha * beta
};

/// kappa = max over pairs of -<grad p(xi) - grad p(zeta), xi - zeta> / |xi - zeta|^2; all pairs
/// for at most 2000 points, otherwise 10^6 pairs drawn with seed 42. `rho` bounds |xi - x|.
template <typename Scalar>
CurvatureReport<Scalar> check_curvature(const PointSet<Scalar>& grad_p, const PointSet<Scalar>& pts,
                                        const CostModel<Scalar>& cost, Scalar rho, Scalar alpha) {
  if (grad_p.rows() != pts.rows()) throw ShapeError("one adjoint gradient per point is required");
  CurvatureReport<Scalar> rep;
  rep.alpha = alpha;
  rep.beta = cost.strong_convexity(rho);
  auto pair_value = [&](Eigen::Index a, Eigen::Index b) {
    const Point2<Scalar> dx = (pts.row(a) - pts.row(b)).transpose();
    const Scalar d2 = dx.squaredNorm();
    if (!(d2 > 0)) return -std::numeric_limits<Scalar>::infinity();
    return -(grad_p.row(a) - grad_p.row(b)).dot(dx.transpose()) / d2;
  };
  Scalar kappa = -std::numeric_limits<Scalar>::infinity();
  const Eigen::Index n = pts.rows();
  if (n <= 2000) {
    for (Eigen::Index a = 0; a < n; ++a) {
      for (Eigen::Index b = a + 1; b < n; ++b) {
        kappa = std::max(kappa, pair_value(a, b));
        ++rep.pairs;
      }
    }
  } else {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    for (int s = 0; s < 1000000; ++s) {
      const Eigen::Index a = pick(rng), b = pick(rng);
      if (a == b) continue;
      kappa = std::max(kappa, pair_value(a, b));
      ++rep.pairs;
    }
  }
  rep.kappa = std::isfinite(kappa) ? std::max(kappa, Scalar(0)) : Scalar(0);
  rep.verdict = rep.kappa < alpha * rep.beta;
  return rep;
}

/// Discrete Lipschitz constant of p/alpha over the candidates, with the pair sampling of
/// check_curvature. Informational: p/alpha need not be 1-Lipschitz.
template <typename Scalar>
Scalar adjoint_lipschitz(const VectorX<Scalar>& p, const PointSet<Scalar>& pts, Scalar alpha) {
  if (p.size() != pts.rows()) throw ShapeError("one adjoint value per point is required");
  auto pair_value = [&](Eigen::Index a, Eigen::Index b) {
    const Scalar d = (pts.row(a) - pts.row(b)).norm();
    return d > 0 ? std::abs(p(a) - p(b)) / (alpha * d) : Scalar(0);
  };
  Scalar lip = 0;
  const Eigen::Index n = pts.rows();
  if (n <= 2000) {
    for (Eigen::Index a = 0; a < n; ++a) {
      for (Eigen::Index b = a + 1; b < n; ++b) lip = std::max(lip, pair_value(a, b));
    }
  } else {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    for (int s = 0; s < 1000000; ++s) lip = std::max(lip, pair_value(pick(rng), pick(rng)));
  }
  return lip;
}

template <typename Scalar>
struct MapExtraction {
  bool is_map = false;
  Eigen::Index worst_row = -1;
  Scalar worst_fraction = 0;  // largest mass fraction outside a row's main entry
  std::vector<Eigen::Index> map;
  Scalar pushforward_error = 0;
  std::vector<std::pair<Scalar, Scalar>> holder_pairs;  // (|x1 - x2|, |T(x1) - T(x2)|)
  Scalar holder_violation = 0;  // max of lhs - rhs over all pairs
};

/// Reads a transport map off the plan when each row is (up to tol) a single entry, then
/// checks (beta - kappa/alpha) |T(x1) - T(x2)|^2 <= 2 lip |x1 - x2| over all row pairs.
template <typename Scalar>
MapExtraction<Scalar> extract_transport_map(const TransportPlan<Scalar>& plan, const DiscreteMeasure<Scalar>& u0,
                                            const PointSet<Scalar>& targets, Scalar tol, Scalar beta, Scalar kappa,
                                            Scalar alpha, Scalar lip) {
  MapExtraction<Scalar> out;
  const Eigen::Index m = plan.rows();
  if (m != u0.size()) throw ShapeError("plan rows must match the prior");
  out.map.assign(static_cast<std::size_t>(m), -1);
  for (Eigen::Index i = 0; i < m; ++i) {
    Scalar total = 0, best = -1;
    for (typename SparsePlan<Scalar>::InnerIterator it(plan.weights, i); it; ++it) {
      total += it.value();
      if (it.value() > best) {
        best = it.value();
        out.map[static_cast<std::size_t>(i)] = it.col();
      }
    }
    const Scalar frac = total > 0 ? (total - best) / total : Scalar(0);
    if (frac > out.worst_fraction || out.worst_row < 0) {
      out.worst_fraction = frac;
      out.worst_row = i;
    }
  }
  out.is_map = out.worst_fraction <= tol;
  if (!out.is_map) return out;

  VectorX<Scalar> pushed = VectorX<Scalar>::Zero(targets.rows());
  for (Eigen::Index i = 0; i < m; ++i) {
    if (out.map[static_cast<std::size_t>(i)] >= 0) pushed(out.map[static_cast<std::size_t>(i)]) += u0.weights()(i);
  }
  out.pushforward_error = (pushed - plan.column_sums()).cwiseAbs().maxCoeff();

  const Scalar coef = beta - kappa / alpha;
  out.holder_violation = -std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = a + 1; b < m; ++b) {
      const Eigen::Index ta = out.map[static_cast<std::size_t>(a)], tb = out.map[static_cast<std::size_t>(b)];
      if (ta < 0 || tb < 0) continue;
      const Scalar dx = (u0.point(a) - u0.point(b)).norm();
      const Scalar dt = (targets.row(ta) - targets.row(tb)).norm();
      out.holder_pairs.emplace_back(dx, dt);
      out.holder_violation = std::max(out.holder_violation, coef * dt * dt - 2 * lip * dx);
    }
  }
  if (out.holder_pairs.empty()) out.holder_violation = 0;
  return out;
}

template <typename Scalar>
struct DensityReport {
  Scalar max_violation = 0;  // max over checked cells of (density of u_bar - bound)^+
  Scalar max_density = 0;
  Eigen::Index cells = 0;
  VectorX<Scalar> density;  // per coarse node
  VectorX<Scalar> bound;    // per coarse node (cell average of the pointwise bound)
};

/// Compares the density of u_bar, averaged over the cells of `cells`, with the cell
/// average of U0(T(xi)) |det DT(xi)|, T(xi) = xi - |grad psi|^((2-gamma)/(gamma-1)) grad psi,
/// psi = -p/alpha. Fine lattice cells are split between coarse cells by overlap. Only cells
/// whose fine nodes all carry a central-difference Jacobian count.
template <typename Scalar>
DensityReport<Scalar> check_density_bound(const VectorX<Scalar>& u_bar, const PointSet<Scalar>& targets,
                                          const ScalarField<Scalar>& p, Scalar alpha, Scalar gamma,
                                          const DensityEstimate<Scalar>& U0,
                                          std::shared_ptr<const Grid<Scalar>> cells) {
  if (!(gamma > 1 && gamma <= 2)) throw InvalidParameter("gamma must be in (1,2]");
  const Grid<Scalar>& G = *p.grid;
  ScalarField<Scalar> psi{p.grid, -p.values / alpha, p.dirichlet};
  const VectorField<Scalar> grad = gradient_field(psi);
  const Scalar expo = (2 - gamma) / (gamma - 1);

  PointSet<Scalar> T(G.size(), 2);
  for (Eigen::Index k = 0; k < G.size(); ++k) {
    const Point2<Scalar> g = grad.values.row(k).transpose();
    const Scalar gn = g.norm();
    const Scalar s = expo == 0 ? Scalar(1) : (gn > 0 ? std::pow(gn, expo) : Scalar(0));
    T.row(k) = (G.node(k) - s * g).transpose();
  }
  // |det DT| by central differences; NaN where a neighbour is missing
  VectorX<Scalar> bound = VectorX<Scalar>::Constant(G.size(), std::numeric_limits<Scalar>::quiet_NaN());
  auto inner = [&](Eigen::Index ix, Eigen::Index iy) {
    return ix >= 0 && iy >= 0 && ix < G.nx && iy < G.ny && G.interior(G.index(ix, iy));
  };
  for (Eigen::Index k = 0; k < G.size(); ++k) {
    const Eigen::Index ix = G.ix(k), iy = G.iy(k);
    if (!(inner(ix, iy) && inner(ix - 1, iy) && inner(ix + 1, iy) && inner(ix, iy - 1) && inner(ix, iy + 1))) continue;
    if (!(inner(ix - 2, iy) && inner(ix + 2, iy) && inner(ix, iy - 2) && inner(ix, iy + 2))) continue;
    const Point2<Scalar> dx = (T.row(G.index(ix + 1, iy)) - T.row(G.index(ix - 1, iy))).transpose() / (2 * G.h);
    const Point2<Scalar> dy = (T.row(G.index(ix, iy + 1)) - T.row(G.index(ix, iy - 1))).transpose() / (2 * G.h);
    const Scalar det = std::abs(dx.x() * dy.y() - dx.y() * dy.x());
    bound(k) = U0.at(T.row(k).transpose()) * det;
  }

  const Grid<Scalar>& H = *cells;
  DensityReport<Scalar> rep;
  VectorX<Scalar> mass = VectorX<Scalar>::Zero(H.size()), bsum = VectorX<Scalar>::Zero(H.size());
  std::vector<char> valid(static_cast<std::size_t>(H.size()), 1), touched(valid.size(), 0);
  // spreads a fine lattice cell of width G.h around x over the coarse cells by area overlap
  auto spread = [&](const Point2<Scalar>& x, auto&& add) {
    const Point2<Scalar> lo = x.array() - G.h / 2, hi = x.array() + G.h / 2;
    const Eigen::Index cx0 = std::max<Eigen::Index>(0, std::llround((lo.x() - H.origin.x()) / H.h) - 1);
    const Eigen::Index cy0 = std::max<Eigen::Index>(0, std::llround((lo.y() - H.origin.y()) / H.h) - 1);
    for (Eigen::Index cy = cy0; cy < std::min(H.ny, cy0 + 3 + static_cast<Eigen::Index>(G.h / H.h)); ++cy) {
      for (Eigen::Index cx = cx0; cx < std::min(H.nx, cx0 + 3 + static_cast<Eigen::Index>(G.h / H.h)); ++cx) {
        const Point2<Scalar> c = H.node(H.index(cx, cy));
        const Scalar ox = std::min(hi.x(), c.x() + H.h / 2) - std::max(lo.x(), c.x() - H.h / 2);
        const Scalar oy = std::min(hi.y(), c.y() + H.h / 2) - std::max(lo.y(), c.y() - H.h / 2);
        if (ox > 0 && oy > 0) add(H.index(cx, cy), ox * oy / (G.h * G.h));
      }
    }
  };
  for (Eigen::Index j = 0; j < targets.rows(); ++j) {
    if (!(u_bar(j) > 0)) continue;
    spread(targets.row(j).transpose(), [&](Eigen::Index c, Scalar f) { mass(c) += f * u_bar(j); });
  }
  for (Eigen::Index k = 0; k < G.size(); ++k) {
    if (!(G.weights(k) > 0)) continue;
    spread(G.node(k), [&](Eigen::Index c, Scalar f) {
      touched[static_cast<std::size_t>(c)] = 1;
      if (std::isnan(bound(k))) {
        valid[static_cast<std::size_t>(c)] = 0;
      } else {
        bsum(c) += f * G.h * G.h * bound(k);
      }
    });
  }
  rep.density = VectorX<Scalar>::Zero(H.size());
  rep.bound = VectorX<Scalar>::Zero(H.size());
  for (Eigen::Index c = 0; c < H.size(); ++c) {
    if (!valid[static_cast<std::size_t>(c)] || !touched[static_cast<std::size_t>(c)] || !(H.weights(c) > 0)) continue;
    ++rep.cells;
    rep.density(c) = mass(c) / H.weights(c);
    rep.bound(c) = bsum(c) / H.weights(c);
    rep.max_density = std::max(rep.max_density, rep.density(c));
    rep.max_violation = std::max(rep.max_violation, rep.density(c) - rep.bound(c));
  }
  return rep;
}

template <typename Scalar>
struct StateBoundReport {
  Scalar laplacian = 0;
  Scalar support_margin = 0;  // min over charged interior candidates of y_d + alpha*lap - y
  Scalar global_margin = 0;   // |y_d|_inf + alpha*lap - |y|_inf
  Scalar state_max = 0;
  Scalar slack = 0;
  bool pass = true;
};

/// Pointwise state bounds under full tracking for a C^2 cost; margins must be >= -slack.
template <typename Scalar>
StateBoundReport<Scalar> check_state_bounds(const SolveReport<Scalar>& rep, const ControlProblem<Scalar>& prob,
                                            Scalar slack) {
  if (!prob.objective.full) throw InvalidParameter("state bounds need a full tracking objective");
  StateBoundReport<Scalar> out;
  out.laplacian = prob.cost.laplacian_bound();
  out.slack = slack;
  const Scalar lift = prob.alpha * out.laplacian;
  out.state_max = rep.state.values.cwiseAbs().maxCoeff();
  out.global_margin = prob.objective.y_d.values.cwiseAbs().maxCoeff() + lift - out.state_max;
  out.support_margin = std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index j = 0; j < prob.targets(); ++j) {
    const Point2<Scalar> xi = prob.candidates.row(j).transpose();
    if (!(rep.u_bar(j) > 0) || !prob.grid->domain.contains_open(xi)) continue;
    out.support_margin = std::min(out.support_margin, prob.objective.y_d(xi) + lift - rep.state(xi));
  }
  if (!std::isfinite(out.support_margin)) out.support_margin = 0;
  out.pass = out.global_margin >= -slack && out.support_margin >= -slack;
  return out;
}

template <typename Scalar>
struct SeparationBound {
  Scalar operator_norm = 0;  // estimate of |S| from measures to L^2(D)
  Scalar distance = 0;       // dist(candidates, boundary of (domain minus observation window))
  Scalar yd_norm = 0;        // |y_d|_{L^2(D)}
  Scalar prior_mass = 0;
  Scalar bound = 0;
  Scalar alpha = 0;
  bool predicted = false;
};

namespace detail {

// 4 d^2 |S| / r^2 (|y_d| + |S| |u0|) with d = 2. |S| is bounded above by the spectral norm of
// the discrete map from Diracs at every interior node to the observed nodes.
template <typename Scalar>
SeparationBound<Scalar> separation_bound(const ControlProblem<Scalar>& prob) {
  const Grid<Scalar>& G = *prob.grid;
  if (prob.objective.full) throw SeparationError("full tracking: the observation window contains the candidates");
  SeparationBound<Scalar> out;
  std::vector<Eigen::Index> observed;
  for (Eigen::Index k = 0; k < G.size(); ++k) {
    if (prob.objective.window(k)) observed.push_back(k);
  }
  if (observed.empty()) throw SeparationError("empty observation window");
  out.distance = std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index j = 0; j < prob.targets(); ++j) {
    const Point2<Scalar> xi = prob.candidates.row(j).transpose();
    Scalar d = G.domain.distance_to_boundary(xi);
    for (Eigen::Index k : observed) d = std::min(d, (G.node(k) - xi).norm());
    out.distance = std::min(out.distance, d);
  }
  if (!(out.distance > 0)) throw SeparationError("the observation window or the boundary meets the candidates");

  std::vector<Point2<Scalar>> inner;
  for (Eigen::Index k = 0; k < G.size(); ++k) {
    if (G.interior(k)) inner.push_back(G.node(k));
  }
  const PointSet<Scalar> pts = sorted_unique(inner);
  const StateOperator<Scalar> op = prob.backend.bind(pts);
  const VectorX<Scalar> mask = prob.objective.window.template cast<Scalar>().matrix();
  VectorX<Scalar> v = VectorX<Scalar>::Ones(pts.rows()).normalized();
  Scalar lambda = 0;
  for (int it = 0; it < 60; ++it) {
    const VectorX<Scalar> hv = op.adjoint(op.apply(v).values.cwiseProduct(mask));
    const Scalar next = v.dot(hv);
    const Scalar nrm = hv.norm();
    if (!(nrm > 0)) break;
    v = hv / nrm;
    const bool settled = std::abs(next - lambda) <= Scalar(1e-10) * next;
    lambda = next;
    if (settled) break;
  }
  out.operator_norm = std::sqrt(std::max(lambda, Scalar(0)));
  out.yd_norm = std::sqrt(prob.observed_weights.dot(prob.objective.y_d.values.cwiseAbs2()));
  out.prior_mass = prob.u0.total_mass();
  const Scalar d = 2;
  out.bound = 4 * d * d * out.operator_norm / (out.distance * out.distance) *
              (out.yd_norm + out.operator_norm * out.prior_mass);
  out.alpha = prob.alpha;
  return out;
}

}  // namespace detail

/// Threshold above which the metric-cost optimum keeps the prior in place.
template <typename Scalar>
SeparationBound<Scalar> sparsity_threshold(const ControlProblem<Scalar>& prob) {
  if (prob.cost.kind() != CostKind::metric) throw WrongModel("the sparsity threshold applies to the metric cost");
  auto out = detail::separation_bound(prob);
  out.predicted = prob.alpha > out.bound;
  return out;
}

/// A priori curvature condition for power and quadratic costs: alpha * beta above the bound.
template <typename Scalar>
SeparationBound<Scalar> curvature_threshold(const ControlProblem<Scalar>& prob, Scalar rho) {
  auto out = detail::separation_bound(prob);
  out.bound /= prob.cost.strong_convexity(rho);
  out.predicted = prob.alpha > out.bound;
  return out;
}

/// max |xi - x| over sources and candidates.
template <typename Scalar>
Scalar transport_radius(const ControlProblem<Scalar>& prob) {
  Scalar rho = 0;
  for (Eigen::Index i = 0; i < prob.sources(); ++i) {
    rho = std::max(rho, (prob.candidates.rowwise() - prob.u0.points().row(i)).rowwise().norm().maxCoeff());
  }
  return rho;
}

/// Lebesgue measure of the set {inside} as atoms at the lattice nodes of the closed
/// domain, each weighted by the area of its cell inside the set (8x8 midpoint subsampling).
template <typename Scalar, typename Inside>
DiscreteMeasure<Scalar> discretize_lebesgue(const Grid<Scalar>& grid, Inside&& inside) {
  std::vector<Point2<Scalar>> pts;
  std::vector<Scalar> w;
  const Scalar h = grid.h;
  constexpr int sub = 8;
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    const Point2<Scalar> c = grid.node(k);
    if (!grid.domain.contains(c)) continue;
    int hits = 0;
    for (int a = 0; a < sub; ++a) {
      for (int b = 0; b < sub; ++b) {
        const Point2<Scalar> s(c.x() + (Scalar(2 * a + 1) / (2 * sub) - Scalar(0.5)) * h,
                               c.y() + (Scalar(2 * b + 1) / (2 * sub) - Scalar(0.5)) * h);
        if (grid.domain.contains(s, 0) && inside(s)) ++hits;
      }
    }
    if (hits == 0) continue;
    pts.push_back(c);
    w.push_back(h * h * Scalar(hits) / Scalar(sub * sub));
  }
  PointSet<Scalar> P(static_cast<Eigen::Index>(pts.size()), 2);
  VectorX<Scalar> W(static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    P.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
    W(static_cast<Eigen::Index>(i)) = w[i];
  }
  return DiscreteMeasure<Scalar>(P, W);
}

template <typename Scalar>
struct AnnulusExample {
  ControlProblem<Scalar> problem;
  TransportPlan<Scalar> reference_plan;  // sources moved radially onto the ring
  VectorX<Scalar> reference_u;
  ScalarField<Scalar> reference_p;       // |xi|^2 - 1 times alpha, sampled
  Scalar ring_radius = Scalar(0.5);
  Scalar mass = Scalar(0.75) * std::numbers::pi_v<Scalar>;

  /// Closed-form c-bar transform of psi = 1 - |xi|^2 under the metric cost.
  static Scalar psi_cbar(const Point2<Scalar>& x) {
    const Scalar r = x.norm();
    return r < Scalar(0.5) ? r * r - 1 : r - Scalar(1.25);
  }
};

/// Disk, metric cost, prior = Lebesgue measure on the annulus 1/2 < |x| < 1 (cell areas,
/// rescaled to total mass 3 pi / 4), candidates = all lattice points of the closed disk.
/// The desired state is y_d = y_ref + 4 alpha, where y_ref is the state of the reference
/// control obtained by moving every source to its minimizer of |x - xi| + p(xi)/alpha with
/// p the discrete solution of -Laplace p = -4 alpha. That control is then exactly optimal
/// for the discrete problem.
template <typename Scalar>
AnnulusExample<Scalar> build_annulus_example(Scalar h, Scalar alpha, BackendKind backend = BackendKind::fd_grid) {
  const auto domain = Domain<Scalar>::unit_disk();
  const auto grid = build_grid(domain, h);
  const auto be = backend == BackendKind::fd_grid ? PoissonBackend<Scalar>::fd_grid(grid)
                                                  : PoissonBackend<Scalar>::green_disk(grid);
  const PointSet<Scalar> candidates = candidate_points(domain, Region<Scalar>::full(), grid->h);

  const DiscreteMeasure<Scalar> cells = discretize_lebesgue(*grid, [](const Point2<Scalar>& x) {
    const Scalar r = x.norm();
    return r > Scalar(0.5) && r < 1;
  });
  const Scalar mass = Scalar(0.75) * std::numbers::pi_v<Scalar>;
  const DiscreteMeasure<Scalar> u0(cells.points(), cells.weights() * (mass / cells.total_mass()));

  // provisional problem to reach the bound state operator
  auto y0 = ScalarField<Scalar>::zeros(grid, false);
  auto prob = make_problem(be, u0, candidates, CostModel<Scalar>::metric(),
                           TrackingObjective<Scalar>::tracking_full(y0), alpha);
  const VectorX<Scalar> rhs = VectorX<Scalar>::Constant(grid->size(), -4 * alpha);
  const VectorX<Scalar> p = prob.state_op.adjoint(rhs);
  const auto cols = detail::vertex_columns(prob.C, alpha, p);
  std::vector<Eigen::Triplet<Scalar>> trips;
  for (Eigen::Index i = 0; i < u0.size(); ++i) trips.emplace_back(i, cols[static_cast<std::size_t>(i)], u0.weights()(i));
  auto plan = TransportPlan<Scalar>::from_triplets(u0.size(), candidates.rows(), trips);
  VectorX<Scalar> u = plan.column_sums();
  ScalarField<Scalar> yd = prob.state_op.apply(u);
  yd.values.array() += 4 * alpha;
  yd.dirichlet = false;
  prob.objective = TrackingObjective<Scalar>::tracking_full(yd);
  auto ref_p = ScalarField<Scalar>::sample(grid, [alpha](const Point2<Scalar>& x) { return alpha * (x.squaredNorm() - 1); });
  return AnnulusExample<Scalar>{std::move(prob), std::move(plan), std::move(u), std::move(ref_p), Scalar(0.5), mass};
}

}  // namespace otp
