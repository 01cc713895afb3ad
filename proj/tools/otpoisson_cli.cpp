#include <CLI11.hpp>

#include <iostream>

#include "otpoisson/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Optimal control of the Poisson equation with transport regularization"};
  app.set_help_flag("-h,--help", "Print this help message and exit");

  std::string command;
  std::string config_path;
  std::string out_dir;
  double tol = 0;
  long max_iter = -1;
  std::string checks;
  app.add_option("command", command, "solve | verify | example-annulus | example-sparsity | ot")
      ->check(CLI::IsMember({"solve", "verify", "example-annulus", "example-sparsity", "ot"}));
  app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--tol", tol, "Frank-Wolfe gap tolerance")->check(CLI::PositiveNumber);
  app.add_option("--max-iter", max_iter, "iteration limit")->check(CLI::NonNegativeNumber);
  app.add_option("--check", checks, "all | none | comma list of checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : otp::exit_usage;
  }

  try {
    otp::RunConfig cfg;
    if (!config_path.empty()) {
      cfg = otp::parse_config(config_path);
    } else {
      if (command.empty()) throw otp::ParseError("either a command or --config is required");
      nlohmann::json doc{{"command", command}};
      if (command == "solve" || command == "verify" || command == "ot") {
        throw otp::ParseError("command '" + command + "' needs --config");
      }
      cfg = otp::parse_config_json(doc, std::filesystem::current_path());
    }
    if (!command.empty() && command != otp::to_string(cfg.command)) {
      throw otp::ParseError("command '" + command + "' does not match the configuration ('" +
                            otp::to_string(cfg.command) + "')");
    }
    if (!out_dir.empty()) cfg.output = std::filesystem::absolute(out_dir).lexically_normal().string();
    if (tol > 0) cfg.tol = tol;
    if (max_iter >= 0) cfg.max_iter = max_iter;
    if (!checks.empty()) cfg.checks = otp::parse_checks(checks);
    return otp::run(cfg, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return otp::exit_usage;
  }
}
