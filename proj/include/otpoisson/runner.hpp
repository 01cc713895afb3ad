#pragma once

#include <iosfwd>
#include <optional>

#include "otpoisson/config.hpp"
#include "otpoisson/structure.hpp"

namespace otp {

enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_unconverged = 2, exit_certificate = 3 };

/// Problem assembled from a configuration, plus the reference data of the built-in examples.
struct BuiltProblem {
  ControlProblem<double> problem;
  std::optional<AnnulusExample<double>> annulus;
  std::optional<SeparationBound<double>> threshold;  // example-sparsity
};

DiscreteMeasure<double> build_prior(const RunConfig& cfg, const Grid<double>& grid, const PointSet<double>& candidates);
BuiltProblem build_problem(const RunConfig& cfg);

/// Executes the configured command, writing artifacts into cfg.output. Returns an ExitCode.
int run(const RunConfig& cfg, std::ostream& log);

}  // namespace otp
