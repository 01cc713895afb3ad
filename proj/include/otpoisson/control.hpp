#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "otpoisson/certificate.hpp"
#include "otpoisson/pde.hpp"
#include "otpoisson/transport.hpp"

namespace otp {

/// J(y) = 1/2 ||y - y_d||^2 over the observed nodes (all nodes for full tracking).
template <typename Scalar>
struct TrackingObjective {
  ScalarField<Scalar> y_d;
  Mask window;
  bool full = true;

  static TrackingObjective tracking_full(ScalarField<Scalar> y_d) {
    Mask all = Mask::Constant(y_d.grid->size(), true);
    return {std::move(y_d), std::move(all), true};
  }
  static TrackingObjective tracking_window(ScalarField<Scalar> y_d, Mask window) {
    if (window.size() != y_d.grid->size()) throw ShapeError("observation mask must have one entry per grid node");
    return {std::move(y_d), std::move(window), false};
  }
};

template <typename Scalar>
struct ControlProblem {
  std::shared_ptr<const Grid<Scalar>> grid;
  PoissonBackend<Scalar> backend;
  DiscreteMeasure<Scalar> u0;
  PointSet<Scalar> candidates;
  CostModel<Scalar> cost;
  CostMatrix<Scalar> C;
  TrackingObjective<Scalar> objective;
  Scalar alpha = 1;
  StateOperator<Scalar> state_op;    // bound to the candidates
  VectorX<Scalar> observed_weights;  // quadrature weights restricted to the window

  Eigen::Index sources() const { return u0.size(); }
  Eigen::Index targets() const { return candidates.rows(); }
};

template <typename Scalar>
ControlProblem<Scalar> make_problem(const PoissonBackend<Scalar>& backend, const DiscreteMeasure<Scalar>& u0,
                                    const PointSet<Scalar>& candidates, const CostModel<Scalar>& cost,
                                    TrackingObjective<Scalar> objective, Scalar alpha) {
  if (!(alpha > 0)) throw InvalidParameter("alpha must be positive");
  if (u0.size() == 0) throw EmptySet("the prior has no atoms");
  if (candidates.rows() == 0) throw EmptySet("no candidate control points");
  const auto& grid = backend.grid();
  if (objective.y_d.grid != grid) throw ShapeError("desired state lives on a different grid");
  for (Eigen::Index i = 0; i < u0.size(); ++i) {
    if (!grid->domain.contains(u0.point(i))) throw DomainError("prior atom outside the closed domain");
  }
  ControlProblem<Scalar> prob{grid, backend, u0, candidates, cost, cost_matrix(cost, u0.points(), candidates),
                              std::move(objective), alpha, backend.bind(candidates), {}};
  prob.observed_weights = grid->weights.cwiseProduct(prob.objective.window.template cast<Scalar>().matrix());
  return prob;
}

template <typename Scalar>
struct SolveOptions {
  Scalar tol = Scalar(1e-6);
  Eigen::Index max_iter = 5000;
  Eigen::Index corrective_every = 10;
  Eigen::Index corrective_steps = 50;
  std::optional<TransportPlan<Scalar>> initial_plan;
};

template <typename Scalar>
struct SolveReport {
  TransportPlan<Scalar> plan;
  VectorX<Scalar> u_bar;  // column sums of the plan, one weight per candidate
  ScalarField<Scalar> state;
  ScalarField<Scalar> adjoint;
  VectorX<Scalar> p_candidates;
  DualPotentials<Scalar> duals;
  std::vector<Scalar> objective_history;
  std::vector<Scalar> gap_history;
  Eigen::Index iterations = 0;
  bool converged = false;
  Scalar objective = 0;
  Scalar gap = 0;
  Scalar tol = 0;
  double wall_time = 0;
  CertificateReport<Scalar> certificate;

  /// The optimal control as a measure on the candidates carrying mass.
  DiscreteMeasure<Scalar> control(const PointSet<Scalar>& candidates) const {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < u_bar.size(); ++j) {
      if (u_bar(j) > 0) keep.push_back(j);
    }
    PointSet<Scalar> pts(static_cast<Eigen::Index>(keep.size()), 2);
    VectorX<Scalar> w(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t r = 0; r < keep.size(); ++r) {
      pts.row(static_cast<Eigen::Index>(r)) = candidates.row(keep[r]);
      w(static_cast<Eigen::Index>(r)) = u_bar(keep[r]);
    }
    return DiscreteMeasure<Scalar>(pts, w);
  }
};

namespace detail {

// Plan stored row by row as (column, weight) pairs sorted by column.
template <typename Scalar>
using RowPlan = std::vector<std::vector<std::pair<Eigen::Index, Scalar>>>;

template <typename Scalar>
RowPlan<Scalar> to_rows(const TransportPlan<Scalar>& plan) {
  RowPlan<Scalar> rows(static_cast<std::size_t>(plan.rows()));
  for (Eigen::Index i = 0; i < plan.weights.outerSize(); ++i) {
    for (typename SparsePlan<Scalar>::InnerIterator it(plan.weights, i); it; ++it) {
      if (it.value() > 0) rows[static_cast<std::size_t>(i)].emplace_back(it.col(), it.value());
    }
  }
  return rows;
}

template <typename Scalar>
TransportPlan<Scalar> from_rows(const RowPlan<Scalar>& rows, Eigen::Index n) {
  std::vector<Eigen::Triplet<Scalar>> trips;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (const auto& [j, w] : rows[i]) trips.emplace_back(static_cast<Eigen::Index>(i), j, w);
  }
  return TransportPlan<Scalar>::from_triplets(static_cast<Eigen::Index>(rows.size()), n, trips);
}

template <typename Scalar>
VectorX<Scalar> column_sums(const RowPlan<Scalar>& rows, Eigen::Index n) {
  VectorX<Scalar> u = VectorX<Scalar>::Zero(n);
  for (const auto& row : rows) {
    for (const auto& [j, w] : row) u(j) += w;
  }
  return u;
}

template <typename Scalar>
Scalar plan_cost(const RowPlan<Scalar>& rows, const CostMatrix<Scalar>& C) {
  Scalar acc = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (const auto& [j, w] : rows[i]) acc += w * C(static_cast<Eigen::Index>(i), j);
  }
  return acc;
}

// Euclidean projection onto {x >= 0, sum x = mass} (sort-based).
template <typename Scalar>
void project_simplex(std::vector<Scalar>& v, Scalar mass) {
  std::vector<Scalar> s = v;
  std::sort(s.begin(), s.end(), std::greater<Scalar>());
  Scalar cum = 0, theta = 0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    cum += s[k];
    const Scalar t = (cum - mass) / Scalar(k + 1);
    if (s[k] - t > 0) theta = t;
  }
  for (auto& x : v) x = std::max(x - theta, Scalar(0));
}

// Evaluation of y, p at candidates and the objective for a given control.
template <typename Scalar>
struct Evaluation {
  VectorX<Scalar> u;
  ScalarField<Scalar> y;
  VectorX<Scalar> residual;  // window * (y - y_d), nodal
  VectorX<Scalar> p;         // adjoint at candidates
  Scalar tracking = 0;
};

template <typename Scalar>
Evaluation<Scalar> evaluate(const ControlProblem<Scalar>& prob, const VectorX<Scalar>& u, bool with_adjoint = true) {
  Evaluation<Scalar> ev{u, prob.state_op.apply(u), {}, {}, 0};
  ev.residual = (ev.y.values - prob.objective.y_d.values).cwiseProduct(prob.objective.window.template cast<Scalar>().matrix());
  ev.tracking = ev.residual.dot(prob.observed_weights.cwiseProduct(ev.residual)) / 2;
  if (with_adjoint) ev.p = prob.state_op.adjoint(ev.residual);
  return ev;
}

// Largest eigenvalue of S^T W_D S over the candidates, by power iteration.
template <typename Scalar>
Scalar hessian_norm(const ControlProblem<Scalar>& prob, int iterations = 30) {
  VectorX<Scalar> v = VectorX<Scalar>::Ones(prob.targets()).normalized();
  const VectorX<Scalar> mask = prob.objective.window.template cast<Scalar>().matrix();
  Scalar lambda = 0;
  for (int k = 0; k < iterations; ++k) {
    const VectorX<Scalar> y = prob.state_op.apply(v).values.cwiseProduct(mask);
    const VectorX<Scalar> hv = prob.state_op.adjoint(y);
    lambda = v.dot(hv);
    const Scalar nrm = hv.norm();
    if (!(nrm > 0)) break;
    v = hv / nrm;
  }
  return lambda;
}

// Argmin over columns of alpha*C_ij + p_j for every row; ties go to the lowest column.
template <typename Scalar>
std::vector<Eigen::Index> vertex_columns(const CostMatrix<Scalar>& C, Scalar alpha, const VectorX<Scalar>& p,
                                         VectorX<Scalar>* row_min = nullptr) {
  const Eigen::Index m = C.rows(), n = C.cols();
  std::vector<Eigen::Index> cols(static_cast<std::size_t>(m));
  if (row_min) row_min->resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    Scalar best = std::numeric_limits<Scalar>::infinity();
    Eigen::Index arg = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const Scalar g = alpha * C.values(i, j) + p(j);
      if (g < best) {
        best = g;
        arg = j;
      }
    }
    cols[static_cast<std::size_t>(i)] = arg;
    if (row_min) (*row_min)(i) = best;
  }
  return cols;
}

}  // namespace detail

/// 1/2 sum_D w (y - y_d)^2 + alpha <C, pi> with y the state of the plan's column sums.
template <typename Scalar>
Scalar objective(const ControlProblem<Scalar>& prob, const TransportPlan<Scalar>& plan) {
  const auto ev = detail::evaluate(prob, plan.column_sums(), false);
  return ev.tracking + prob.alpha * plan.cost(prob.C);
}

/// Dense gradient alpha * C_ij + p(xi_j), with p the adjoint of the tracking residual.
template <typename Scalar>
DenseMatrix<Scalar> gradient_wrt_plan(const ControlProblem<Scalar>& prob, const TransportPlan<Scalar>& plan) {
  const auto ev = detail::evaluate(prob, plan.column_sums());
  return (prob.alpha * prob.C.values).rowwise() + ev.p.transpose();
}

/// Linear minimization oracle: each row's mass on its smallest gradient entry.
template <typename Scalar>
TransportPlan<Scalar> fw_vertex(const DenseMatrix<Scalar>& gradient, const VectorX<Scalar>& u0) {
  if (gradient.rows() != u0.size()) throw ShapeError("gradient rows must match the prior");
  std::vector<Eigen::Triplet<Scalar>> trips;
  for (Eigen::Index i = 0; i < gradient.rows(); ++i) {
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < gradient.cols(); ++j) {
      if (gradient(i, j) < gradient(i, arg)) arg = j;
    }
    if (u0(i) > 0) trips.emplace_back(i, arg, u0(i));
  }
  return TransportPlan<Scalar>::from_triplets(gradient.rows(), gradient.cols(), trips);
}

namespace detail {

// Projected gradient over the current row supports, step 1/L with backtracking so the
// objective never increases. Entries driven to zero leave the support.
template <typename Scalar>
void corrective_pass(const ControlProblem<Scalar>& prob, RowPlan<Scalar>& rows, Evaluation<Scalar>& ev,
                     Scalar& obj, Scalar hess, Eigen::Index steps) {
  const VectorX<Scalar>& u0 = prob.u0.weights();
  const Scalar alpha = prob.alpha;
  for (Eigen::Index s = 0; s < steps; ++s) {
    std::vector<int> count(static_cast<std::size_t>(prob.targets()), 0);
    int max_count = 1;
    bool any_split = false;
    for (const auto& row : rows) {
      any_split = any_split || row.size() > 1;
      for (const auto& e : row) max_count = std::max(max_count, ++count[static_cast<std::size_t>(e.first)]);
    }
    if (!any_split) return;
    Scalar step = 1 / std::max(hess * Scalar(max_count), std::numeric_limits<Scalar>::min());
    bool accepted = false;
    for (int attempt = 0; attempt < 40 && !accepted; ++attempt, step /= 2) {
      RowPlan<Scalar> trial = rows;
      for (std::size_t i = 0; i < trial.size(); ++i) {
        auto& row = trial[i];
        if (row.size() < 2) continue;
        std::vector<Scalar> v(row.size());
        for (std::size_t k = 0; k < row.size(); ++k) {
          const Eigen::Index j = row[k].first;
          v[k] = row[k].second - step * (alpha * prob.C(static_cast<Eigen::Index>(i), j) + ev.p(j));
        }
        project_simplex(v, u0(static_cast<Eigen::Index>(i)));
        std::vector<std::pair<Eigen::Index, Scalar>> kept;
        for (std::size_t k = 0; k < row.size(); ++k) {
          if (v[k] > 0) kept.emplace_back(row[k].first, v[k]);
        }
        row = std::move(kept);
      }
      Evaluation<Scalar> next = evaluate(prob, column_sums(trial, prob.targets()), false);
      const Scalar next_obj = next.tracking + alpha * plan_cost(trial, prob.C);
      if (next_obj <= obj) {
        accepted = true;
        const Scalar drop = obj - next_obj;
        rows = std::move(trial);
        next.p = prob.state_op.adjoint(next.residual);
        ev = std::move(next);
        obj = next_obj;
        if (drop <= std::numeric_limits<Scalar>::epsilon() * (1 + std::abs(obj))) return;
      }
    }
    if (!accepted) return;
  }
}

}  // namespace detail

/// Frank-Wolfe on the plan polytope (rows fixed to u0) with exact line search and a
/// periodic fully-corrective projected-gradient pass over the current support.
template <typename Scalar>
SolveReport<Scalar> solve_control(const ControlProblem<Scalar>& prob, const SolveOptions<Scalar>& opts = {}) {
  if (!(opts.tol > 0)) throw InvalidParameter("tolerance must be positive");
  const auto start = std::chrono::steady_clock::now();
  const Eigen::Index m = prob.sources(), n = prob.targets();
  const VectorX<Scalar>& u0 = prob.u0.weights();
  const Scalar alpha = prob.alpha;

  detail::RowPlan<Scalar> rows;
  if (opts.initial_plan) {
    const auto& init = *opts.initial_plan;
    if (init.rows() != m || init.cols() != n) throw ShapeError("initial plan has the wrong shape");
    const VectorX<Scalar> r = init.row_sums();
    if ((r - u0).cwiseAbs().maxCoeff() > Scalar(1e-12) * std::max(Scalar(1), u0.sum())) {
      throw InvalidParameter("initial plan rows must carry the prior weights");
    }
    rows = detail::to_rows(init);
  } else {
    rows.resize(static_cast<std::size_t>(m));
    const auto cols = detail::vertex_columns(prob.C, alpha, VectorX<Scalar>::Zero(n).eval());
    for (Eigen::Index i = 0; i < m; ++i) {
      if (u0(i) > 0) rows[static_cast<std::size_t>(i)].emplace_back(cols[static_cast<std::size_t>(i)], u0(i));
    }
  }

  SolveReport<Scalar> rep;
  rep.tol = opts.tol;
  auto ev = detail::evaluate(prob, detail::column_sums(rows, n));
  Scalar obj = ev.tracking + alpha * detail::plan_cost(rows, prob.C);
  Scalar hess = -1;
  VectorX<Scalar> row_min;
  Scalar gap = 0;

  for (Eigen::Index k = 0;; ++k) {
    const auto vcols = detail::vertex_columns(prob.C, alpha, ev.p, &row_min);
    gap = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (const auto& [j, w] : rows[i]) {
        gap += w * (alpha * prob.C(static_cast<Eigen::Index>(i), j) + ev.p(j) - row_min(static_cast<Eigen::Index>(i)));
      }
    }
    gap = std::max(gap, Scalar(0));
    rep.objective_history.push_back(obj);
    rep.gap_history.push_back(gap);
    rep.iterations = k;
    if (gap <= opts.tol * (1 + std::abs(obj))) {
      rep.converged = true;
      break;
    }
    if (k >= opts.max_iter) break;

    VectorX<Scalar> du = -ev.u;
    for (Eigen::Index i = 0; i < m; ++i) du(vcols[static_cast<std::size_t>(i)]) += u0(i);
    const ScalarField<Scalar> sd = prob.state_op.apply(du);
    const VectorX<Scalar> sd_obs = sd.values.cwiseProduct(prob.objective.window.template cast<Scalar>().matrix());
    const Scalar c = sd_obs.dot(prob.observed_weights.cwiseProduct(sd_obs)) / 2;
    const Scalar t = c > 0 ? std::min(Scalar(1), gap / (2 * c)) : Scalar(1);

    for (Eigen::Index i = 0; i < m; ++i) {
      auto& row = rows[static_cast<std::size_t>(i)];
      if (!(u0(i) > 0)) continue;
      const Eigen::Index vj = vcols[static_cast<std::size_t>(i)];
      if (t == 1) {
        row.assign(1, {vj, u0(i)});
        continue;
      }
      bool found = false;
      for (auto& e : row) {
        e.second *= 1 - t;
        if (e.first == vj) {
          e.second += t * u0(i);
          found = true;
        }
      }
      if (!found) {
        row.insert(std::upper_bound(row.begin(), row.end(), vj,
                                    [](Eigen::Index a, const auto& e) { return a < e.first; }),
                   {vj, t * u0(i)});
      }
      std::erase_if(row, [](const auto& e) { return !(e.second > 0); });
    }

    if (opts.corrective_every > 0 && (k + 1) % opts.corrective_every == 0) {
      ev = detail::evaluate(prob, detail::column_sums(rows, n));
      obj = ev.tracking + alpha * detail::plan_cost(rows, prob.C);
      if (hess < 0) hess = detail::hessian_norm(prob);
      detail::corrective_pass(prob, rows, ev, obj, hess, opts.corrective_steps);
    } else {
      // y is affine in t; reuse the direction solve instead of a fresh state solve
      detail::Evaluation<Scalar> next;
      next.u = detail::column_sums(rows, n);
      next.y = {prob.grid, ev.y.values + t * sd.values, true};
      next.residual = (next.y.values - prob.objective.y_d.values)
                          .cwiseProduct(prob.objective.window.template cast<Scalar>().matrix());
      next.tracking = next.residual.dot(prob.observed_weights.cwiseProduct(next.residual)) / 2;
      next.p = prob.state_op.adjoint(next.residual);
      ev = std::move(next);
      obj = ev.tracking + alpha * detail::plan_cost(rows, prob.C);
    }
  }

  rep.plan = detail::from_rows(rows, n);
  rep.u_bar = rep.plan.column_sums();
  rep.state = prob.state_op.apply(rep.u_bar);
  {
    ScalarField<Scalar> rhs{prob.grid, ev.residual, false};
    rep.adjoint = prob.backend.solve_adjoint(rhs);
  }
  rep.p_candidates = ev.p;
  rep.duals.psi = -ev.p / alpha;
  rep.duals.phi = c_bar_transform(rep.duals.psi, prob.C).values;
  rep.objective = obj;
  rep.gap = gap;
  rep.certificate = detail::certify(rep.plan, rep.duals, rep.p_candidates, alpha, prob.C, u0, gap, obj, opts.tol);
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace otp
