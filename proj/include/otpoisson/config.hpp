#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "otpoisson/geometry.hpp"
#include "otpoisson/measures.hpp"
#include "otpoisson/transport.hpp"

namespace otp {

enum class Command { solve, verify, example_annulus, example_sparsity, ot };

std::string to_string(Command c);

struct BoxSpec {
  Point2<double> lo = Point2<double>::Zero();
  Point2<double> hi = Point2<double>::Ones();
};

struct CostSpec {
  std::string model = "metric";  // metric | quadratic | power
  double gamma = 2;
  CostModel<double> build() const;
};

/// Prior u0: inline atoms, a CSV file, cell-area weights of a box or annulus, or random
/// atoms drawn on the candidate lattice.
struct PriorSpec {
  std::string kind = "atoms";  // atoms | csv | uniform_box | annulus | random_atoms
  std::vector<std::array<double, 3>> atoms;
  std::string path;
  BoxSpec box;
  double r1 = 0.5, r2 = 1;
  double mass = 1;
  long count = 10;
};

struct RegionSpec {
  std::string kind = "full";  // full | box | annulus
  BoxSpec box;
  double r1 = 0, r2 = 1;
  Region<double> build() const;
};

struct DesiredSpec {
  std::string kind = "constant";  // constant | random | csv
  double value = 0;
  double lo = 0, hi = 1;
  std::string path;
};

struct ObjectiveSpec {
  std::string kind = "tracking_full";  // tracking_full | tracking_window
  DesiredSpec y_d;
  BoxSpec window;
};

struct OtSpec {
  std::vector<std::array<double, 3>> mu, nu;
  std::string method = "exact";  // exact | sinkhorn
  double epsilon = 1e-2;
};

inline const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> names{"certificate", "rays",     "curvature", "map",
                                              "density",     "state_bound", "sparsity"};
  return names;
}

struct RunConfig {
  Command command = Command::solve;
  std::string domain = "unit_square";
  double h = 0.05;
  std::string backend = "fd_grid";
  CostSpec cost;
  double alpha = 1;
  double alpha_factor = 2;  // example-sparsity: alpha = factor * threshold
  ObjectiveSpec objective;
  PriorSpec prior;
  RegionSpec candidates;
  double tol = 1e-6;
  long max_iter = 5000;
  std::string output = "out";
  unsigned long seed = 0;
  std::vector<std::string> checks{"all"};
  std::string report;  // verify: path of the report.json to check
  OtSpec ot;

  Domain<double> build_domain() const;
  bool wants(const std::string& check) const;
  nlohmann::ordered_json resolved() const;
};

/// Reads and validates a JSON configuration. Relative paths resolve against the file's directory.
RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);

/// Parses a --check value: "all", "none" or a comma list of known_checks().
std::vector<std::string> parse_checks(const std::string& value);

}  // namespace otp
