#include "otpoisson/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "otpoisson/io.hpp"

namespace otp {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string to_string(Command c) {
  switch (c) {
    case Command::solve:
      return "solve";
    case Command::verify:
      return "verify";
    case Command::example_annulus:
      return "example-annulus";
    case Command::example_sparsity:
      return "example-sparsity";
    case Command::ot:
      return "ot";
  }
  return "solve";
}

CostModel<double> CostSpec::build() const {
  if (model == "metric") return CostModel<double>::metric();
  if (model == "quadratic") return CostModel<double>::quadratic();
  return CostModel<double>::power(gamma);
}

Region<double> RegionSpec::build() const {
  if (kind == "box") return Region<double>::box(box.lo, box.hi);
  if (kind == "annulus") return Region<double>::annulus(r1, r2);
  return Region<double>::full();
}

Domain<double> RunConfig::build_domain() const {
  return domain == "unit_disk" ? Domain<double>::unit_disk() : Domain<double>::unit_square();
}

bool RunConfig::wants(const std::string& check) const {
  if (std::find(checks.begin(), checks.end(), "none") != checks.end()) return false;
  if (std::find(checks.begin(), checks.end(), "all") != checks.end()) return true;
  return std::find(checks.begin(), checks.end(), check) != checks.end();
}

namespace {

// Object reader that rejects keys it was not asked about.
class Section {
 public:
  Section(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ParseError(label() + " must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const json& v = obj_.at(key);
    if (!v.is_number()) throw ParseError("key '" + path(key) + "' must be a number");
    return v.get<double>();
  }

  long integer(const std::string& key, long fallback) {
    if (!has(key)) return fallback;
    const json& v = obj_.at(key);
    if (!v.is_number_integer()) throw ParseError("key '" + path(key) + "' must be an integer");
    return v.get<long>();
  }

  std::string text(const std::string& key, const std::string& fallback, const std::vector<std::string>& allowed = {}) {
    if (!has(key)) return fallback;
    const json& v = obj_.at(key);
    if (!v.is_string()) throw ParseError("key '" + path(key) + "' must be a string");
    std::string s = v.get<std::string>();
    if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
      std::string opts;
      for (const auto& a : allowed) opts += (opts.empty() ? "" : "|") + a;
      throw ParseError("key '" + path(key) + "' must be one of " + opts + ", got '" + s + "'");
    }
    return s;
  }

  Point2<double> point(const std::string& key, const Point2<double>& fallback) {
    if (!has(key)) return fallback;
    const json& v = obj_.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      throw ParseError("key '" + path(key) + "' must be a pair of numbers");
    }
    return {v[0].get<double>(), v[1].get<double>()};
  }

  std::vector<std::array<double, 3>> atoms(const std::string& key) {
    std::vector<std::array<double, 3>> out;
    if (!has(key)) return out;
    const json& v = obj_.at(key);
    if (!v.is_array()) throw ParseError("key '" + path(key) + "' must be an array of [x, y, w] triples");
    for (const auto& a : v) {
      if (!a.is_array() || a.size() != 3 || !a[0].is_number() || !a[1].is_number() || !a[2].is_number()) {
        throw ParseError("key '" + path(key) + "' must be an array of [x, y, w] triples");
      }
      out.push_back({a[0].get<double>(), a[1].get<double>(), a[2].get<double>()});
    }
    return out;
  }

  Section child(const std::string& key) { return Section(raw(key), path(key)); }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ParseError("unknown key '" + path(it.key()) + "'");
    }
  }

  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

 private:
  std::string label() const { return where_.empty() ? "configuration" : "key '" + where_ + "'"; }

  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

BoxSpec read_box(Section s, const BoxSpec& fallback = {}) {
  BoxSpec b{s.point("lo", fallback.lo), s.point("hi", fallback.hi)};
  s.finish();
  if (!(b.lo.array() <= b.hi.array()).all()) throw ParseError("key '" + s.path("lo") + "' must not exceed 'hi'");
  return b;
}

std::string resolve(const fs::path& base, const std::string& p) {
  fs::path q(p);
  if (q.is_relative()) q = base / q;
  return q.lexically_normal().string();
}

void require_file(const std::string& key, const std::string& p) {
  if (!fs::is_regular_file(p)) throw ParseError("key '" + key + "': file '" + p + "' does not exist");
}

void check_weights(const std::string& key, const std::vector<std::array<double, 3>>& atoms) {
  for (const auto& a : atoms) {
    if (!(a[2] >= 0)) throw ParseError("key '" + key + "': weights must be nonnegative");
  }
}

ojson box_json(const BoxSpec& b) {
  return ojson{{"lo", {b.lo.x(), b.lo.y()}}, {"hi", {b.hi.x(), b.hi.y()}}};
}

ojson atoms_json(const std::vector<std::array<double, 3>>& atoms) {
  ojson a = ojson::array();
  for (const auto& t : atoms) a.push_back({t[0], t[1], t[2]});
  return a;
}

}  // namespace

std::vector<std::string> parse_checks(const std::string& value) {
  if (value == "all" || value == "none") return {value};
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto& known = known_checks();
    if (std::find(known.begin(), known.end(), item) == known.end()) {
      throw ParseError("unknown check '" + item + "'");
    }
    out.push_back(item);
  }
  if (out.empty()) throw ParseError("empty check list");
  return out;
}

RunConfig parse_config_json(const json& doc, const fs::path& base) {
  Section top(doc, "");
  RunConfig cfg;
  const std::string cmd = top.text("command", "solve", {"solve", "verify", "example-annulus", "example-sparsity", "ot"});
  if (cmd == "verify") cfg.command = Command::verify;
  if (cmd == "example-annulus") cfg.command = Command::example_annulus;
  if (cmd == "example-sparsity") cfg.command = Command::example_sparsity;
  if (cmd == "ot") cfg.command = Command::ot;

  // command-specific defaults
  if (cfg.command == Command::example_annulus) {
    cfg.domain = "unit_disk";
    cfg.h = 0.04;
  }
  if (cfg.command == Command::example_sparsity) {
    cfg.candidates.kind = "box";
    cfg.candidates.box = {Point2<double>(0.15, 0.15), Point2<double>(0.45, 0.45)};
    cfg.objective.kind = "tracking_window";
    cfg.objective.window = {Point2<double>(0.75, 0.75), Point2<double>(1, 1)};
    cfg.objective.y_d.kind = "random";
    cfg.prior.kind = "random_atoms";
  }

  cfg.domain = top.text("domain", cfg.domain, {"unit_square", "unit_disk"});
  cfg.h = top.number("h", cfg.h);
  if (!(cfg.h > 0 && cfg.h < 0.25)) throw ParseError("key 'h' must lie in (0, 1/4)");
  cfg.backend = top.text("backend", cfg.backend, {"fd_grid", "green_disk"});
  if (cfg.backend == "green_disk" && cfg.domain != "unit_disk") {
    throw ParseError("key 'backend': green_disk requires domain unit_disk");
  }
  cfg.alpha = top.number("alpha", cfg.alpha);
  if (!(cfg.alpha > 0)) throw ParseError("key 'alpha' must be positive");
  cfg.alpha_factor = top.number("alpha_factor", cfg.alpha_factor);
  if (!(cfg.alpha_factor > 0)) throw ParseError("key 'alpha_factor' must be positive");
  cfg.tol = top.number("tol", cfg.tol);
  if (!(cfg.tol > 0)) throw ParseError("key 'tol' must be positive");
  cfg.max_iter = top.integer("max_iter", cfg.max_iter);
  if (cfg.max_iter < 0) throw ParseError("key 'max_iter' must be nonnegative");
  cfg.output = resolve(base, top.text("output", cfg.output));
  {
    const long seed = top.integer("seed", 0);
    if (seed < 0) throw ParseError("key 'seed' must be nonnegative");
    cfg.seed = static_cast<unsigned long>(seed);
  }
  if (top.has("checks")) {
    const json& v = top.raw("checks");
    if (v.is_string()) {
      cfg.checks = parse_checks(v.get<std::string>());
    } else if (v.is_array()) {
      std::string joined;
      for (const auto& c : v) {
        if (!c.is_string()) throw ParseError("key 'checks' must be a string or an array of strings");
        joined += (joined.empty() ? "" : ",") + c.get<std::string>();
      }
      cfg.checks = parse_checks(joined);
    } else {
      throw ParseError("key 'checks' must be a string or an array of strings");
    }
  }

  if (top.has("cost")) {
    Section c = top.child("cost");
    cfg.cost.model = c.text("model", cfg.cost.model, {"metric", "quadratic", "power"});
    cfg.cost.gamma = c.number("gamma", cfg.cost.gamma);
    c.finish();
    if (cfg.cost.model == "power" && !(cfg.cost.gamma > 1 && cfg.cost.gamma <= 2)) {
      throw ParseError("gamma must be in (1,2]");
    }
  }

  if (top.has("prior")) {
    Section p = top.child("prior");
    cfg.prior.kind = p.text("kind", cfg.prior.kind, {"atoms", "csv", "uniform_box", "annulus", "random_atoms"});
    if (cfg.prior.kind == "atoms") {
      cfg.prior.atoms = p.atoms("atoms");
      check_weights("prior.atoms", cfg.prior.atoms);
      if (cfg.prior.atoms.empty()) throw ParseError("key 'prior.atoms' must list at least one atom");
    } else if (cfg.prior.kind == "csv") {
      cfg.prior.path = resolve(base, p.text("path", ""));
      require_file("prior.path", cfg.prior.path);
      const auto mu = io::read_measure_csv(cfg.prior.path);
      if (mu.size() == 0) throw ParseError("key 'prior.path': the prior file has no atoms");
    } else if (cfg.prior.kind == "uniform_box") {
      if (p.has("box")) cfg.prior.box = read_box(p.child("box"));
      cfg.prior.mass = p.number("mass", cfg.prior.mass);
    } else if (cfg.prior.kind == "annulus") {
      cfg.prior.r1 = p.number("r1", cfg.prior.r1);
      cfg.prior.r2 = p.number("r2", cfg.prior.r2);
      cfg.prior.mass = p.number("mass", cfg.prior.mass);
      if (!(cfg.prior.r1 >= 0 && cfg.prior.r2 > cfg.prior.r1)) throw ParseError("key 'prior': need 0 <= r1 < r2");
    } else {
      cfg.prior.count = p.integer("count", cfg.prior.count);
      cfg.prior.mass = p.number("mass", cfg.prior.mass);
      if (cfg.prior.count < 1) throw ParseError("key 'prior.count' must be at least 1");
    }
    p.finish();
    if (!(cfg.prior.mass > 0)) throw ParseError("key 'prior.mass' must be positive");
  } else if (cfg.command == Command::solve) {
    throw ParseError("key 'prior' is required for solve");
  }

  if (top.has("candidates")) {
    Section c = top.child("candidates");
    cfg.candidates.kind = c.text("kind", cfg.candidates.kind, {"full", "box", "annulus"});
    if (cfg.candidates.kind == "box" && c.has("box")) cfg.candidates.box = read_box(c.child("box"));
    if (cfg.candidates.kind == "annulus") {
      cfg.candidates.r1 = c.number("r1", cfg.candidates.r1);
      cfg.candidates.r2 = c.number("r2", cfg.candidates.r2);
    }
    c.finish();
  }

  if (top.has("objective")) {
    Section o = top.child("objective");
    cfg.objective.kind = o.text("kind", cfg.objective.kind, {"tracking_full", "tracking_window"});
    if (o.has("y_d")) {
      Section y = o.child("y_d");
      auto& d = cfg.objective.y_d;
      d.kind = y.text("kind", d.kind, {"constant", "random", "csv"});
      if (d.kind == "constant") d.value = y.number("value", d.value);
      if (d.kind == "random") {
        d.lo = y.number("lo", d.lo);
        d.hi = y.number("hi", d.hi);
        if (!(d.lo <= d.hi)) throw ParseError("key 'objective.y_d.lo' must not exceed 'hi'");
      }
      if (d.kind == "csv") {
        d.path = resolve(base, y.text("path", ""));
        require_file("objective.y_d.path", d.path);
      }
      y.finish();
    }
    if (o.has("window")) cfg.objective.window = read_box(o.child("window"), cfg.objective.window);
    o.finish();
  }

  if (top.has("report")) {
    cfg.report = resolve(base, top.text("report", ""));
  }
  if (cfg.command == Command::verify) {
    if (cfg.report.empty()) throw ParseError("key 'report' is required for verify");
    require_file("report", cfg.report);
  }

  if (top.has("ot")) {
    Section o = top.child("ot");
    cfg.ot.mu = o.atoms("mu");
    cfg.ot.nu = o.atoms("nu");
    check_weights("ot.mu", cfg.ot.mu);
    check_weights("ot.nu", cfg.ot.nu);
    cfg.ot.method = o.text("method", cfg.ot.method, {"exact", "sinkhorn"});
    cfg.ot.epsilon = o.number("epsilon", cfg.ot.epsilon);
    if (!(cfg.ot.epsilon > 0)) throw ParseError("key 'ot.epsilon' must be positive");
    o.finish();
  }
  if (cfg.command == Command::ot && (cfg.ot.mu.empty() || cfg.ot.nu.empty())) {
    throw ParseError("keys 'ot.mu' and 'ot.nu' are required for ot");
  }

  if (cfg.command == Command::example_annulus && (cfg.domain != "unit_disk" || cfg.cost.model != "metric")) {
    throw ParseError("example-annulus runs on the unit disk with the metric cost");
  }
  if (cfg.command == Command::example_sparsity &&
      (cfg.cost.model != "metric" || cfg.objective.kind != "tracking_window")) {
    throw ParseError("example-sparsity needs the metric cost and a tracking_window objective");
  }
  top.finish();
  return cfg;
}

RunConfig parse_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read configuration '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("configuration '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config_json(doc, path.parent_path());
}

nlohmann::ordered_json RunConfig::resolved() const {
  ojson j;
  j["command"] = to_string(command);
  j["domain"] = domain;
  j["h"] = h;
  j["backend"] = backend;
  j["cost"] = {{"model", cost.model}, {"gamma", cost.gamma}};
  j["alpha"] = alpha;
  j["alpha_factor"] = alpha_factor;
  ojson yd{{"kind", objective.y_d.kind}};
  if (objective.y_d.kind == "constant") yd["value"] = objective.y_d.value;
  if (objective.y_d.kind == "random") {
    yd["lo"] = objective.y_d.lo;
    yd["hi"] = objective.y_d.hi;
  }
  if (objective.y_d.kind == "csv") yd["path"] = objective.y_d.path;
  j["objective"] = {{"kind", objective.kind}, {"y_d", yd}, {"window", box_json(objective.window)}};
  ojson pr{{"kind", prior.kind}};
  if (prior.kind == "atoms") pr["atoms"] = atoms_json(prior.atoms);
  if (prior.kind == "csv") pr["path"] = prior.path;
  if (prior.kind == "uniform_box") pr["box"] = box_json(prior.box);
  if (prior.kind == "annulus") {
    pr["r1"] = prior.r1;
    pr["r2"] = prior.r2;
  }
  if (prior.kind == "random_atoms") pr["count"] = prior.count;
  if (prior.kind != "atoms" && prior.kind != "csv") pr["mass"] = prior.mass;
  j["prior"] = pr;
  ojson cand{{"kind", candidates.kind}};
  if (candidates.kind == "box") cand["box"] = box_json(candidates.box);
  if (candidates.kind == "annulus") {
    cand["r1"] = candidates.r1;
    cand["r2"] = candidates.r2;
  }
  j["candidates"] = cand;
  j["tol"] = tol;
  j["max_iter"] = max_iter;
  j["output"] = output;
  j["seed"] = seed;
  j["checks"] = checks;
  if (!report.empty()) j["report"] = report;
  if (command == Command::ot) {
    j["ot"] = {{"mu", atoms_json(ot.mu)}, {"nu", atoms_json(ot.nu)}, {"method", ot.method}, {"epsilon", ot.epsilon}};
  }
  return j;
}

}  // namespace otp
