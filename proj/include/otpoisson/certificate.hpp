#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "otpoisson/transport.hpp"

namespace otp {

template <typename Scalar>
struct Residual {
  std::string name;
  Scalar value = 0;
  Scalar tolerance = 0;
  bool pass = true;
};

/// Residuals of the discrete first-order system; pass iff every residual is within its tolerance.
template <typename Scalar>
struct CertificateReport {
  std::vector<Residual<Scalar>> checks;

  void add(std::string name, Scalar value, Scalar tolerance) {
    const bool ok = std::isfinite(value) && value <= tolerance;
    checks.push_back({std::move(name), value, tolerance, ok});
  }

  bool pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
  }

  const Residual<Scalar>* find(const std::string& name) const {
    for (const auto& c : checks) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }

  Scalar value(const std::string& name) const {
    const auto* c = find(name);
    return c ? c->value : std::numeric_limits<Scalar>::quiet_NaN();
  }
};

/// max over plan entries above mass_tol of [C_ij + p_j/alpha - min_k (C_ik + p_k/alpha)].
template <typename Scalar>
Scalar check_support_inclusion(const TransportPlan<Scalar>& plan, const VectorX<Scalar>& p, Scalar alpha,
                               const CostMatrix<Scalar>& C, Scalar mass_tol = 0) {
  if (p.size() != C.cols() || plan.rows() != C.rows() || plan.cols() != C.cols()) {
    throw ShapeError("plan, adjoint and cost matrix disagree in size");
  }
  if (!(alpha > 0)) throw InvalidParameter("alpha must be positive");
  Scalar worst = 0;
  const VectorX<Scalar> shift = p / alpha;
  for (Eigen::Index i = 0; i < plan.weights.outerSize(); ++i) {
    typename SparsePlan<Scalar>::InnerIterator it(plan.weights, i);
    if (!it) continue;
    const Scalar best = (C.values.row(i).transpose() + shift).minCoeff();
    for (; it; ++it) {
      if (it.value() > mass_tol) worst = std::max(worst, C(i, it.col()) + shift(it.col()) - best);
    }
  }
  return worst;
}

namespace detail {

// Shared by the solver and by verification of serialized reports.
template <typename Scalar>
CertificateReport<Scalar> certify(const TransportPlan<Scalar>& plan, const DualPotentials<Scalar>& duals,
                                  const VectorX<Scalar>& p, Scalar alpha, const CostMatrix<Scalar>& C,
                                  const VectorX<Scalar>& u0, Scalar fw_gap, Scalar objective, Scalar tol) {
  CertificateReport<Scalar> rep;
  const Scalar scale = std::max(Scalar(1), C.values.cwiseAbs().maxCoeff());
  const Scalar obj_scale = 1 + std::abs(objective);
  rep.add("dual_feasibility", duals.feasibility_residual(C), tol * scale);
  const Scalar gap = plan.cost(C) - duals.phi.dot(u0) - duals.psi.dot(plan.column_sums());
  rep.add("duality_gap", std::abs(gap), tol * obj_scale / alpha);
  rep.add("fw_gap", fw_gap, tol * obj_scale);
  rep.add("adjoint_consistency", (duals.psi + p / alpha).cwiseAbs().maxCoeff(), tol * scale);
  const Scalar mass = u0.sum();
  rep.add("support_inclusion", check_support_inclusion(plan, p, alpha, C, Scalar(1e-8) * mass),
          std::sqrt(tol) * scale);
  return rep;
}

}  // namespace detail

}  // namespace otp
