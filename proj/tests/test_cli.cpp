#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(OTP_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) out += buf.data();
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("otp_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

json small_solve() {
  return {{"command", "solve"},
          {"h", 0.1},
          {"alpha", 0.05},
          {"seed", 4},
          {"prior", {{"kind", "random_atoms"}, {"count", 4}}},
          {"candidates", {{"kind", "box"}, {"box", {{"lo", {0.2, 0.2}}, {"hi", {0.8, 0.8}}}}}},
          {"objective", {{"kind", "tracking_full"}, {"y_d", {{"kind", "random"}}}}}};
}

}  // namespace

TEST_CASE("solve writes every artifact") {
  const auto dir = scratch("solve");
  write_json(dir / "run.json", small_solve());
  const auto r = cli("--config " + (dir / "run.json").string() + " --out " + (dir / "out").string());
  CHECK(r.code == 0);
  for (const char* f : {"report.json", "u0.csv", "u_bar.csv", "plan.csv", "state.csv", "adjoint.csv"}) {
    CHECK(fs::exists(dir / "out" / f));
  }
  const auto rep = json::parse(slurp(dir / "out" / "report.json"));
  CHECK(rep["converged"] == true);
  CHECK(rep["exit_code"] == 0);
  CHECK(rep["config"]["alpha"] == 0.05);
  CHECK(rep["certificate"]["pass"] == true);
  CHECK(rep["duals"]["psi"].size() == rep["candidates"].get<std::size_t>());
  CHECK(slurp(dir / "out" / "u_bar.csv").rfind("x,y,w\n", 0) == 0);
}

TEST_CASE("runs are deterministic up to the wall time") {
  const auto dir = scratch("determinism");
  write_json(dir / "run.json", small_solve());
  for (const char* out : {"a", "b"}) {
    CHECK(cli("--config " + (dir / "run.json").string() + " --out " + (dir / out).string()).code == 0);
  }
  auto a = json::parse(slurp(dir / "a" / "report.json"));
  auto b = json::parse(slurp(dir / "b" / "report.json"));
  a.erase("wall_time");
  b.erase("wall_time");
  a["config"].erase("output");
  b["config"].erase("output");
  CHECK(a.dump() == b.dump());
  for (const char* f : {"u_bar.csv", "plan.csv", "state.csv", "adjoint.csv"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
}

TEST_CASE("verify accepts an untouched report and rejects a tampered one") {
  const auto dir = scratch("verify");
  write_json(dir / "run.json", small_solve());
  REQUIRE(cli("--config " + (dir / "run.json").string() + " --out " + (dir / "out").string()).code == 0);
  write_json(dir / "verify.json", {{"command", "verify"}, {"report", (dir / "out" / "report.json").string()}});
  const auto ok = cli("verify --config " + (dir / "verify.json").string());
  CHECK(ok.code == 0);

  auto rep = json::parse(slurp(dir / "out" / "report.json"));
  rep["duals"]["psi"][0] = rep["duals"]["psi"][0].get<double>() + 0.5;
  write_json(dir / "out" / "report.json", rep);
  const auto bad = cli("verify --config " + (dir / "verify.json").string());
  CHECK(bad.code == 3);
  CHECK(bad.out.find("FAIL") != std::string::npos);
}

TEST_CASE("example-sparsity keeps the prior") {
  const auto dir = scratch("sparsity");
  const auto r = cli("example-sparsity --out " + dir.string());
  CHECK(r.code == 0);
  CHECK(r.out.find("u_bar == u0: true") != std::string::npos);
  const auto rep = json::parse(slurp(dir / "report.json"));
  CHECK(rep["summary"]["transport_distance"].get<double>() <= 1e-10);
}

TEST_CASE("unconverged runs exit with 2") {
  const auto dir = scratch("unconverged");
  write_json(dir / "run.json", small_solve());
  const auto r = cli("--config " + (dir / "run.json").string() + " --out " + dir.string() + " --max-iter 0 --tol 1e-14");
  CHECK(r.code == 2);
  CHECK(json::parse(slurp(dir / "report.json"))["converged"] == false);
}

TEST_CASE("ot command") {
  const auto dir = scratch("ot");
  write_json(dir / "ot.json", {{"command", "ot"},
                               {"output", (dir / "out").string()},
                               {"ot", {{"mu", {{0, 0, 1}}}, {"nu", {{0.3, 0.4, 0.5}, {0, 0, 0.5}}}}}});
  const auto r = cli("--config " + (dir / "ot.json").string());
  CHECK(r.code == 0);
  const auto rep = json::parse(slurp(dir / "out" / "report.json"));
  CHECK(rep["value"].get<double>() == doctest::Approx(0.25));
}

TEST_CASE("usage errors exit with 1") {
  CHECK(cli("").code == 1);
  CHECK(cli("solve").code == 1);
  CHECK(cli("frobnicate").code == 1);
  CHECK(cli("--config /no/such/file.json").code == 1);
  const auto dir = scratch("usage");
  auto bad = small_solve();
  bad["alpah"] = 1;
  write_json(dir / "bad.json", bad);
  const auto r = cli("--config " + (dir / "bad.json").string());
  CHECK(r.code == 1);
  CHECK(r.out.find("alpah") != std::string::npos);
  CHECK(cli("example-annulus --check bogus").code == 1);
}

TEST_CASE("help") {
  const auto r = cli("--help");
  CHECK(r.code == 0);
  CHECK(r.out.find("--config") != std::string::npos);
}
