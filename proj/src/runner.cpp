#include "otpoisson/runner.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>

#include "otpoisson/io.hpp"

namespace otp {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

DiscreteMeasure<double> atoms_measure(const std::vector<std::array<double, 3>>& atoms) {
  PointSet<double> p(static_cast<Eigen::Index>(atoms.size()), 2);
  VectorX<double> w(static_cast<Eigen::Index>(atoms.size()));
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    p(static_cast<Eigen::Index>(i), 0) = atoms[i][0];
    p(static_cast<Eigen::Index>(i), 1) = atoms[i][1];
    w(static_cast<Eigen::Index>(i)) = atoms[i][2];
  }
  return DiscreteMeasure<double>(p, w);
}

DiscreteMeasure<double> rescaled(const DiscreteMeasure<double>& mu, double mass) {
  if (!(mu.total_mass() > 0)) throw EmptySet("the prior region contains no lattice cells");
  return DiscreteMeasure<double>(mu.points(), mu.weights() * (mass / mu.total_mass()));
}

Mask box_mask(const Grid<double>& g, const BoxSpec& b) {
  Mask m(g.size());
  const auto r = Region<double>::box(b.lo, b.hi);
  for (Eigen::Index k = 0; k < g.size(); ++k) m(k) = g.domain.contains(g.node(k)) && r.contains(g.node(k));
  return m;
}

ojson vec_json(const VectorX<double>& v) { return ojson(std::vector<double>(v.data(), v.data() + v.size())); }

ojson certificate_json(const CertificateReport<double>& c) {
  ojson checks = ojson::array();
  for (const auto& r : c.checks) {
    checks.push_back({{"name", r.name}, {"value", r.value}, {"tolerance", r.tolerance}, {"pass", r.pass}});
  }
  return {{"pass", c.pass()}, {"checks", checks}};
}

void write_json(const fs::path& path, const ojson& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

double off_diagonal_mass(const TransportPlan<double>& plan, const PointSet<double>& src, const PointSet<double>& dst) {
  double off = 0;
  for (Eigen::Index i = 0; i < plan.weights.outerSize(); ++i) {
    for (SparsePlan<double>::InnerIterator it(plan.weights, i); it; ++it) {
      if ((src.row(i) - dst.row(it.col())).norm() > 1e-12) off += it.value();
    }
  }
  return off;
}

bool is_c2(const CostModel<double>& c) {
  return c.kind() == CostKind::quadratic || (c.kind() == CostKind::power && c.gamma() == 2);
}

// Structural diagnostics; `ok` turns false when a requested check fails.
ojson structure_checks(const RunConfig& cfg, const BuiltProblem& built, const SolveReport<double>& rep, bool& ok,
                       std::ostream& log) {
  const auto& prob = built.problem;
  const double h = prob.grid->h;
  ojson s = ojson::object();
  const auto requested = [&](const char* name) { return cfg.wants(name); };
  auto record = [&](const char* name, ojson entry, bool pass) {
    entry["pass"] = pass;
    s[name] = std::move(entry);
    if (!pass) {
      ok = false;
      log << "check " << name << ": FAILED\n";
    }
  };

  s["adjoint_lipschitz"] = {{"value", adjoint_lipschitz(rep.p_candidates, prob.candidates, prob.alpha)},
                            {"informational", true}};

  if (requested("rays") && prob.cost.kind() == CostKind::metric) {
    const auto grad = adjoint_gradient(rep.adjoint, prob.candidates);
    const double k = 5;
    const auto r = check_transport_rays(rep.plan, prob.u0.points(), prob.candidates, grad, prob.alpha, prob.cost,
                                        cfg.tol + k * h);
    record("rays",
           {{"gradient_excess", r.gradient_excess},
            {"collinearity", r.collinearity},
            {"norm_defect", r.norm_defect},
            {"charged_targets", r.charged_targets},
            {"moved_targets", r.moved_targets},
            {"tolerance", r.tol},
            {"slack_constant", k}},
           r.pass);
  }

  const bool convex_power = prob.cost.kind() == CostKind::quadratic || prob.cost.kind() == CostKind::power;
  if (convex_power && (requested("curvature") || requested("map"))) {
    const double rho = transport_radius(prob);
    const auto grad = adjoint_gradient(rep.adjoint, prob.candidates);
    const auto curv = check_curvature(grad, prob.candidates, prob.cost, rho, prob.alpha);
    if (requested("curvature")) {
      record("curvature",
             {{"kappa", curv.kappa},
              {"beta", curv.beta},
              {"alpha_beta", curv.alpha * curv.beta},
              {"pairs", curv.pairs},
              {"verdict", curv.verdict}},
             true);
    }
    if (requested("map")) {
      const double lip = prob.cost.lipschitz(rho);
      const auto m = extract_transport_map(rep.plan, prob.u0, prob.candidates, 1e-8, curv.beta, curv.kappa,
                                           prob.alpha, lip);
      ojson pairs = ojson::array();
      for (const auto& [dx, dt] : m.holder_pairs) pairs.push_back({dx, dt});
      const bool pass = !curv.verdict || (m.is_map && m.holder_violation <= 1e-8);
      record("map",
             {{"is_map", m.is_map},
              {"worst_row", m.worst_row},
              {"worst_fraction", m.worst_fraction},
              {"pushforward_error", m.pushforward_error},
              {"holder_violation", m.holder_violation},
              {"lipschitz", lip},
              {"holder_pairs", pairs}},
             pass);
    }
  }

  if (requested("density") && convex_power && cfg.prior.kind == "uniform_box") {
    const auto U0 = estimate_density(prob.u0, prob.grid);
    const auto cells = build_grid(prob.grid->domain, std::min(0.5, 4 * h));
    const double gamma = prob.cost.kind() == CostKind::quadratic ? 2.0 : prob.cost.gamma();
    const auto d = check_density_bound(rep.u_bar, prob.candidates, rep.adjoint, prob.alpha, gamma, U0, cells);
    record("density", {{"max_violation", d.max_violation}, {"max_density", d.max_density}, {"cells", d.cells}}, true);
  }

  if (requested("state_bound") && is_c2(prob.cost) && prob.objective.full) {
    const double k = 10;
    const auto b = check_state_bounds(rep, prob, k * h);
    record("state_bound",
           {{"laplacian", b.laplacian},
            {"support_margin", b.support_margin},
            {"global_margin", b.global_margin},
            {"state_max", b.state_max},
            {"slack", b.slack},
            {"slack_constant", k}},
           b.pass);
  }

  if (requested("sparsity") && prob.cost.kind() == CostKind::metric && !prob.objective.full) {
    const auto t = built.threshold ? *built.threshold : sparsity_threshold(prob);
    const double off = off_diagonal_mass(rep.plan, prob.u0.points(), prob.candidates);
    const double mass = prob.u0.total_mass();
    const bool stays = off <= 1e-10 * mass;
    record("sparsity",
           {{"operator_norm", t.operator_norm},
            {"distance", t.distance},
            {"yd_norm", t.yd_norm},
            {"prior_mass", t.prior_mass},
            {"bound", t.bound},
            {"alpha", prob.alpha},
            {"predicted", prob.alpha > t.bound},
            {"off_diagonal_mass", off},
            {"u_bar_equals_u0", stays}},
           !(prob.alpha > t.bound) || stays);
  }
  return s;
}

ojson annulus_summary(const AnnulusExample<double>& ex, const SolveReport<double>& rep, std::ostream& log) {
  const auto& prob = ex.problem;
  const double h = prob.grid->h;
  double total = rep.u_bar.sum(), near = 0;
  for (Eigen::Index j = 0; j < prob.targets(); ++j) {
    if (std::abs(prob.candidates.row(j).norm() - ex.ring_radius) <= 2 * h) near += rep.u_bar(j);
  }
  double cbar_err = 0;
  for (Eigen::Index i = 0; i < prob.sources(); ++i) {
    cbar_err = std::max(cbar_err, std::abs(rep.duals.phi(i) - AnnulusExample<double>::psi_cbar(prob.u0.point(i))));
  }
  log << std::setprecision(10) << "total mass " << total << " (prior " << prob.u0.total_mass() << ")\n"
      << "mass within 2h of the ring: " << near / total << "\n"
      << "c-bar transform sup error: " << cbar_err << "\n";
  return {{"total_mass", total},
          {"prior_mass", prob.u0.total_mass()},
          {"ring_fraction", near / total},
          {"ring_band", 2 * h},
          {"psi_cbar_error", cbar_err}};
}

int run_ot(const RunConfig& cfg, std::ostream& log) {
  const auto mu = atoms_measure(cfg.ot.mu), nu = atoms_measure(cfg.ot.nu);
  const auto C = cost_matrix(cfg.cost.build(), mu.points(), nu.points());
  fs::create_directories(cfg.output);
  ojson rep;
  rep["command"] = "ot";
  rep["config"] = cfg.resolved();
  const auto start = std::chrono::steady_clock::now();
  TransportPlan<double> plan;
  if (cfg.ot.method == "exact") {
    const auto sol = solve_kantorovich_exact(mu.weights(), nu.weights(), C);
    plan = sol.plan;
    const auto gap = duality_gap(sol.plan, sol.duals, C);
    rep["value"] = sol.value;
    rep["pivots"] = sol.pivots;
    rep["duality_gap"] = gap.gap;
    rep["dual_feasibility"] = gap.feasibility_residual;
    rep["duals"] = {{"phi", vec_json(sol.duals.phi)}, {"psi", vec_json(sol.duals.psi)}};
  } else {
    const auto sol = solve_sinkhorn(mu.weights(), nu.weights(), C, cfg.ot.epsilon, cfg.tol, cfg.max_iter);
    plan = sol.plan;
    rep["value"] = sol.value;
    rep["iterations"] = sol.iterations;
    rep["column_error"] = sol.column_error;
  }
  io::write_plan_csv(fs::path(cfg.output) / "plan.csv", plan, mu.points(), nu.points());
  rep["files"] = {{"plan", "plan.csv"}};
  rep["exit_code"] = 0;
  rep["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_json(fs::path(cfg.output) / "report.json", rep);
  log << "transport value " << std::setprecision(12) << rep["value"].get<double>() << "\n";
  return exit_ok;
}

int run_verify(const RunConfig& cfg, std::ostream& log) {
  std::ifstream in(cfg.report);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("report '" + cfg.report + "' is not valid JSON: " + e.what());
  }
  for (const char* key : {"config", "alpha", "duals", "files"}) {
    if (!doc.contains(key)) throw ParseError("report is missing key '" + std::string(key) + "'");
  }
  const fs::path dir = fs::path(cfg.report).parent_path();
  const RunConfig original = parse_config_json(doc["config"], dir);
  if (original.command == Command::verify || original.command == Command::ot) {
    throw ParseError("the report does not describe a control solve");
  }
  auto built = build_problem(original);
  auto& prob = built.problem;
  prob.alpha = doc["alpha"].get<double>();

  const auto plan = io::read_plan_csv(dir / doc["files"]["plan"].get<std::string>(), prob.sources(), prob.targets());
  const auto as_vec = [](const nlohmann::json& a) {
    const auto v = a.get<std::vector<double>>();
    return VectorX<double>(Eigen::Map<const VectorX<double>>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  DualPotentials<double> duals{as_vec(doc["duals"]["phi"]), as_vec(doc["duals"]["psi"])};
  if (duals.phi.size() != prob.sources() || duals.psi.size() != prob.targets()) {
    throw ParseError("report duals do not match the problem size");
  }
  const VectorX<double> rows = plan.row_sums();
  if ((rows - prob.u0.weights()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, prob.u0.total_mass())) {
    log << "plan rows do not carry the prior\n";
    return exit_certificate;
  }
  // independent recomputation of state, adjoint and Frank-Wolfe gap from the plan
  const auto ev = detail::evaluate(prob, plan.column_sums());
  const double obj = ev.tracking + prob.alpha * plan.cost(prob.C);
  VectorX<double> row_min;
  detail::vertex_columns(prob.C, prob.alpha, ev.p, &row_min);
  double gap = 0;
  for (Eigen::Index i = 0; i < plan.weights.outerSize(); ++i) {
    for (SparsePlan<double>::InnerIterator it(plan.weights, i); it; ++it) {
      gap += it.value() * (prob.alpha * prob.C(i, it.col()) + ev.p(it.col()) - row_min(i));
    }
  }
  gap = std::max(gap, 0.0);
  const double tol = doc.value("tol", original.tol);
  const auto cert = detail::certify(plan, duals, ev.p, prob.alpha, prob.C, prob.u0.weights(), gap, obj, tol);
  for (const auto& c : cert.checks) {
    log << std::setprecision(6) << (c.pass ? "PASS " : "FAIL ") << c.name << " = " << c.value << " (tol " << c.tolerance
        << ")\n";
  }
  return cert.pass() ? exit_ok : exit_certificate;
}

}  // namespace

DiscreteMeasure<double> build_prior(const RunConfig& cfg, const Grid<double>& grid, const PointSet<double>& candidates) {
  const auto& p = cfg.prior;
  if (p.kind == "atoms") return atoms_measure(p.atoms);
  if (p.kind == "csv") return io::read_measure_csv(p.path);
  if (p.kind == "uniform_box") {
    const auto r = Region<double>::box(p.box.lo, p.box.hi);
    return rescaled(discretize_lebesgue(grid, [&](const Point2<double>& x) { return r.contains(x, 0); }), p.mass);
  }
  if (p.kind == "annulus") {
    return rescaled(discretize_lebesgue(grid,
                                        [&](const Point2<double>& x) {
                                          const double r = x.norm();
                                          return r > p.r1 && r < p.r2;
                                        }),
                    p.mass);
  }
  // random_atoms: distinct candidate points with weights in [1/2, 3/2), rescaled to the mass
  std::mt19937_64 rng(cfg.seed);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(candidates.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n = std::min<Eigen::Index>(p.count, candidates.rows());
  std::sort(idx.begin(), idx.begin() + n);
  std::uniform_real_distribution<double> weight(0.5, 1.5);
  PointSet<double> pts(n, 2);
  VectorX<double> w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    pts.row(i) = candidates.row(idx[static_cast<std::size_t>(i)]);
    w(i) = weight(rng);
  }
  return rescaled(DiscreteMeasure<double>(pts, w), p.mass);
}

BuiltProblem build_problem(const RunConfig& cfg) {
  const auto domain = cfg.build_domain();
  const BackendKind kind = cfg.backend == "green_disk" ? BackendKind::green_disk : BackendKind::fd_grid;
  if (cfg.command == Command::example_annulus) {
    auto ex = build_annulus_example(cfg.h, cfg.alpha, kind);
    auto prob = ex.problem;
    return {std::move(prob), std::move(ex), std::nullopt};
  }
  const auto grid = build_grid(domain, cfg.h);
  const auto backend =
      kind == BackendKind::green_disk ? PoissonBackend<double>::green_disk(grid) : PoissonBackend<double>::fd_grid(grid);
  const PointSet<double> candidates = candidate_points(domain, cfg.candidates.build(), grid->h);
  const auto u0 = build_prior(cfg, *grid, candidates);

  ScalarField<double> yd{grid, VectorX<double>::Zero(grid->size()), false};
  const auto& d = cfg.objective.y_d;
  if (d.kind == "constant") {
    yd.values.setConstant(d.value);
  } else if (d.kind == "random") {
    std::mt19937_64 rng(cfg.seed + 1);
    std::uniform_real_distribution<double> dist(d.lo, d.hi);
    for (Eigen::Index k = 0; k < grid->size(); ++k) yd.values(k) = dist(rng);
  } else {
    yd = io::read_field_csv(d.path, grid);
  }
  auto objective = cfg.objective.kind == "tracking_window"
                       ? TrackingObjective<double>::tracking_window(yd, box_mask(*grid, cfg.objective.window))
                       : TrackingObjective<double>::tracking_full(yd);
  auto prob = make_problem(backend, u0, candidates, cfg.cost.build(), std::move(objective), cfg.alpha);
  BuiltProblem built{std::move(prob), std::nullopt, std::nullopt};
  if (cfg.command == Command::example_sparsity) {
    auto t = sparsity_threshold(built.problem);
    built.problem.alpha = cfg.alpha_factor * t.bound;
    t.alpha = built.problem.alpha;
    t.predicted = t.alpha > t.bound;
    built.threshold = t;
  }
  return built;
}

int run(const RunConfig& cfg, std::ostream& log) {
  if (cfg.command == Command::ot) return run_ot(cfg, log);
  if (cfg.command == Command::verify) return run_verify(cfg, log);

  const auto built = build_problem(cfg);
  const auto& prob = built.problem;
  SolveOptions<double> opts;
  opts.tol = cfg.tol;
  opts.max_iter = cfg.max_iter;
  const auto rep = solve_control(prob, opts);
  log << std::setprecision(10) << (rep.converged ? "converged" : "not converged") << " after " << rep.iterations
      << " iterations: objective " << rep.objective << ", gap " << rep.gap << "\n";

  bool ok = true;
  ojson report;
  report["command"] = to_string(cfg.command);
  report["config"] = cfg.resolved();
  report["converged"] = rep.converged;
  report["iterations"] = rep.iterations;
  report["objective"] = rep.objective;
  report["gap"] = rep.gap;
  report["alpha"] = prob.alpha;
  report["tol"] = cfg.tol;
  report["sources"] = prob.sources();
  report["candidates"] = prob.targets();
  report["objective_history"] = rep.objective_history;
  report["gap_history"] = rep.gap_history;
  report["duals"] = {{"psi", vec_json(rep.duals.psi)},
                     {"phi", vec_json(rep.duals.phi)},
                     {"p_candidates", vec_json(rep.p_candidates)}};
  if (cfg.wants("certificate")) {
    const auto cert = check_optimality(rep, prob, cfg.tol);
    report["certificate"] = certificate_json(cert);
    if (!cert.pass()) {
      ok = false;
      log << "check certificate: FAILED\n";
    }
  } else {
    report["certificate"] = ojson::object();
  }
  report["structure"] = structure_checks(cfg, built, rep, ok, log);

  ojson summary = ojson::object();
  if (built.annulus) summary = annulus_summary(*built.annulus, rep, log);
  if (cfg.command == Command::example_sparsity) {
    const double off = off_diagonal_mass(rep.plan, prob.u0.points(), prob.candidates);
    const bool same = off <= 1e-10 * prob.u0.total_mass();
    const double dist = eval_transport_distance(prob.cost, prob.u0, prob.candidates, rep.u_bar);
    summary = {{"threshold", built.threshold->bound},
               {"alpha", prob.alpha},
               {"predicted", built.threshold->predicted},
               {"off_diagonal_mass", off},
               {"transport_distance", dist},
               {"u_bar == u0", same}};
    log << "threshold " << built.threshold->bound << ", alpha " << prob.alpha << "\n"
        << "u_bar == u0: " << (same ? "true" : "false") << "\n";
  }
  report["summary"] = summary;

  const fs::path out(cfg.output);
  fs::create_directories(out);
  io::write_measure_csv(out / "u0.csv", prob.u0.points(), prob.u0.weights());
  const auto u_bar = rep.control(prob.candidates);
  io::write_measure_csv(out / "u_bar.csv", u_bar.points(), u_bar.weights());
  io::write_plan_csv(out / "plan.csv", rep.plan, prob.u0.points(), prob.candidates);
  io::write_field_csv(out / "state.csv", rep.state);
  io::write_field_csv(out / "adjoint.csv", rep.adjoint);
  report["files"] = {{"u0", "u0.csv"},
                     {"u_bar", "u_bar.csv"},
                     {"plan", "plan.csv"},
                     {"state", "state.csv"},
                     {"adjoint", "adjoint.csv"}};

  const int code = !rep.converged ? exit_unconverged : (ok ? exit_ok : exit_certificate);
  report["exit_code"] = code;
  report["wall_time"] = rep.wall_time;
  write_json(out / "report.json", report);
  return code;
}

}  // namespace otp
