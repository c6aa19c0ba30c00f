#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "doctest.h"
#include "qvar/commands.hpp"
#include "qvar/config.hpp"

using namespace qvar;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("qvar_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Runs the CLI binary; returns its exit status.
int run_cli(const std::string& args, const std::string& env = "") {
  const char* cli = std::getenv("QVAR_CLI");
  REQUIRE_MESSAGE(cli != nullptr, "QVAR_CLI must point at the CLI binary");
  const std::string cmd = env + " '" + std::string(cli) + "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

fs::path write_config(const fs::path& dir, const std::string& json) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << json;
  return p;
}

using Row = std::map<std::string, std::string>;

std::vector<Row> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) header.push_back(cell);
  }
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    Row r;
    std::size_t i = 0;
    for (std::string cell; std::getline(ss, cell, ',');) r[header.at(i++)] = cell;
    REQUIRE(i == header.size());
    rows.push_back(r);
  }
  return rows;
}

double num(const Row& r, const std::string& key) { return std::stod(r.at(key)); }

// Small simulation budget keeps the end-to-end runs quick.
const char* kSmallSim = R"("sim": {"M": 20000, "N": 50})";

}  // namespace

TEST_CASE("empty config gives the reference setup") {
  const ExperimentConfig cfg = parse_config("{}");
  CHECK(cfg.model.r == 0.05);
  CHECK(cfg.model.x0 == 1.0);
  CHECK(cfg.model.epsilon == 0.1);
  CHECK(cfg.utility.gamma1 == 0.5);
  CHECK(cfg.sim.M == 100000);
  CHECK(cfg.pinn.nodes == 50);
  CHECK(cfg.epsilon_grid.size() == 41);
  CHECK(cfg.epsilon_grid.back() == 1.0);
  CHECK(cfg.dist_lambdas == std::vector<double>{0.0, 1.5, 2.5});
  CHECK_FALSE(cfg.pinn_checkpoint.has_value());
}

TEST_CASE("config overrides, inheritance and validation") {
  const ExperimentConfig cfg = parse_config(
      R"({"model": {"L": 0.8, "x0": 0.7}, "sim": {"M": 10}, "pinn": {"y": [0.3, 2.5]},
          "epsilon_grid": [0.1, 0.2], "output_dir": "elsewhere"})");
  CHECK(cfg.model.L == 0.8);
  CHECK(cfg.utility.L == 0.8);  // inherited
  CHECK(cfg.model.x0 == 0.7);
  CHECK(cfg.model.r == 0.05);
  CHECK(cfg.sim.M == 10);
  CHECK(cfg.sim.N == 100);
  CHECK(cfg.pinn.y.lo == 0.3);
  CHECK(cfg.pinn.y.hi == 2.5);
  CHECK(cfg.output_dir == "elsewhere");

  CHECK_THROWS_AS(parse_config(R"({"modle": {}})"), InvalidParameter);
  CHECK_THROWS_AS(parse_config(R"({"model": {"sigmaa": 0.2}})"), InvalidParameter);
  CHECK_THROWS_AS(parse_config(R"({"model": {"sigma": "wide"}})"), InvalidParameter);
  CHECK_THROWS_AS(parse_config(R"({"model": {"sigma": -1}})"), InvalidParameter);
  CHECK_THROWS_AS(parse_config(R"({"utility": {"L": 0.5}})"), InvalidParameter);
  CHECK_THROWS_AS(parse_config(R"({"epsilon_grid": []})"), InvalidParameter);
  CHECK_THROWS_AS(parse_config(R"({"epsilon_grid": [1.5]})"), InvalidParameter);
  CHECK_THROWS_AS(parse_config(R"({"pinn": {"mu": [0.1]}})"), InvalidParameter);
  CHECK_THROWS_AS(parse_config("[1, 2]"), InvalidParameter);
  CHECK_THROWS_AS(parse_config("{"), InvalidParameter);
}

TEST_CASE("resolved config round trips") {
  const ExperimentConfig cfg =
      parse_config(R"({"model": {"p": 0.5}, "pinn_checkpoint": "m.json", "dist_bins": 12})");
  const std::string text = dump_config(cfg);
  const ExperimentConfig back = parse_config(text);
  CHECK(dump_config(back) == text);
  CHECK(back.model.p == 0.5);
  CHECK(back.pinn_checkpoint == fs::path("m.json"));
  CHECK(back.dist_bins == 12);
}

TEST_CASE("six significant digits") {
  CHECK(fmt6(1.0) == "1");
  CHECK(fmt6(1.4524378) == "1.45244");
  CHECK(fmt6(-0.0857956123) == "-0.0857956");
  CHECK(fmt6(1.23456789e-7) == "1.23457e-07");
  CHECK(fmt6(-0.0) == "0");
  CHECK(fmt6(std::nan("")) == "nan");
  CHECK(parse_method("mc") == Method::Mc);
  CHECK_THROWS_AS(parse_method("newton"), InvalidParameter);
}

TEST_CASE("solve: exit codes and records") {
  const fs::path dir = scratch("solve");
  CHECK(run_cli("solve --epsilon 0.35 --out " + dir.string()) == kExitOk);
  auto rec = nlohmann::json::parse(read_file(dir / "solve_lagrange.json"));
  CHECK(rec["status"] == "ok");
  CHECK(rec["lambda_star"].get<double>() == doctest::Approx(0.483).epsilon(0.005 / 0.483));
  CHECK(rec["p_at_0"].get<double>() == doctest::Approx(0.35).epsilon(1e-6));

  const auto manifest = nlohmann::json::parse(read_file(dir / "manifest_solve.json"));
  CHECK(manifest["build_id"] == build_id());
  CHECK(manifest["config"]["model"]["x0"] == 1.0);
  CHECK(manifest["arguments"]["epsilon"] == 0.35);

  const fs::path poor = write_config(dir, R"({"model": {"x0": 0.6}})");
  CHECK(run_cli("solve --epsilon 0.2 --config " + poor.string() + " --out " + dir.string()) ==
        kExitInfeasible);
  rec = nlohmann::json::parse(read_file(dir / "solve_lagrange.json"));
  CHECK(rec["status"] == "infeasible");
  CHECK(rec["x_hat"].get<double>() == doctest::Approx(0.66).epsilon(0.02 / 0.66));
  CHECK(rec["lambda_star"].is_null());

  const fs::path wild = write_config(dir, std::string("{") + kSmallSim + R"(, "model": {"x0": 1.0}})");
  std::string text = read_file(wild);
  text.replace(text.find("\"N\": 50"), 7, "\"N\": 50, \"delta\": 1e9");
  std::ofstream(wild) << text;
  CHECK(run_cli("solve --method mc --config " + wild.string() + " --out " + dir.string()) ==
        kExitNumerical);

  CHECK(run_cli("solve --method newton --out " + dir.string()) == kExitUsage);
  CHECK(run_cli("solve --epsilon 1.5 --out " + dir.string()) == kExitUsage);
  CHECK(run_cli("--out " + dir.string()) == kExitUsage);
  const fs::path bad = write_config(dir, R"({"model": {"sigma": 0}})");
  CHECK(run_cli("solve --config " + bad.string() + " --out " + dir.string()) == kExitUsage);
}

TEST_CASE("sweep: properties and byte-identical reruns") {
  const fs::path a = scratch("sweep_a");
  const fs::path b = scratch("sweep_b");
  const fs::path cfg = write_config(a, std::string("{") + kSmallSim + "}");
  for (const std::string method : {"lagrange", "mc"}) {
    const std::string args = "sweep --method " + method + " --config " + cfg.string();
    REQUIRE(run_cli(args + " --out " + a.string(), "QVAR_THREADS=1") == kExitOk);
    REQUIRE(run_cli(args + " --out " + b.string(), "QVAR_THREADS=3") == kExitOk);
    const std::string name = "sweep_" + method + ".csv";
    CHECK(read_file(a / name) == read_file(b / name));

    const auto rows = read_csv(a / name);
    REQUIRE(rows.size() == 41);
    double eps0 = -1.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CAPTURE(method);
      CAPTURE(i);
      if (i > 0) CHECK(num(rows[i], "lambda_star") <= num(rows[i - 1], "lambda_star"));
      const double eps = num(rows[i], "epsilon");
      if (num(rows[i], "lambda_star") > 0.0) {
        CHECK(num(rows[i], "p_at_least_L") == doctest::Approx(1.0 - eps).epsilon(1e-4));
      } else {
        if (eps0 < 0.0) eps0 = 1.0 - num(rows[i], "p_at_least_L");
        CHECK(num(rows[i], "p_at_least_L") == doctest::Approx(1.0 - eps0).epsilon(1e-9));
        CHECK(eps >= eps0 - 1e-4);
      }
    }
    CHECK(eps0 == doctest::Approx(0.395).epsilon(0.01 / 0.395));
  }
  // The eps = 1 endpoint matches a direct solve.
  REQUIRE(run_cli("solve --epsilon 1 --out " + a.string()) == kExitOk);
  const auto rec = nlohmann::json::parse(read_file(a / "solve_lagrange.json"));
  const Row last = read_csv(a / "sweep_lagrange.csv").back();
  CHECK(last.at("y_star") == fmt6(rec["y_star"].get<double>()));
  CHECK(last.at("u_c") == fmt6(rec["u_c"].get<double>()));
}

TEST_CASE("dist: atoms, support and tail") {
  const fs::path dir = scratch("dist");
  const fs::path cfg = write_config(dir, std::string("{") + kSmallSim + "}");
  REQUIRE(run_cli("dist --config " + cfg.string() + " --out " + dir.string()) == kExitOk);
  const auto summary = read_csv(dir / "dist_lagrange_summary.csv");
  REQUIRE(summary.size() == 3);
  CHECK(num(summary[0], "p_at_L") == 0.0);
  CHECK(summary[0].at("envelope_case") == "one_segment");
  CHECK(summary[2].at("envelope_case") == "two_segment");
  for (const Row& r : summary) {
    // The smallest continuous outcome sits at the knot: x* never lands inside (L, knot).
    CHECK(num(r, "support_min") >= num(r, "knot") * (1.0 - 1e-6));
    CHECK(num(r, "support_min") <= num(r, "knot") * 1.01);
  }

  const auto hist = read_csv(dir / "dist_lagrange.csv");
  std::map<std::string, std::vector<double>> bins;
  double mass = 0.0;
  for (const Row& r : hist) {
    if (r.at("lambda") != "0") continue;
    mass += num(r, "frequency");
    if (r.at("kind") == "bin") bins["0"].push_back(num(r, "count"));
  }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));
  // Tail decay: summed counts of consecutive groups over the upper half fall.
  const auto& c = bins["0"];
  REQUIRE(c.size() == 40);
  std::vector<double> groups(4, 0.0);
  for (int k = 20; k < 40; ++k) groups[(k - 20) / 5] += c[k];
  for (int g = 1; g < 4; ++g) CHECK(groups[g] < groups[g - 1]);
}

TEST_CASE("feasibility curves") {
  const fs::path dir = scratch("feas");
  const fs::path cfg = write_config(dir, std::string("{") + kSmallSim + "}");
  REQUIRE(run_cli("feasibility --method mc --config " + cfg.string() + " --out " + dir.string()) ==
          kExitOk);
  const auto rows = read_csv(dir / "feasibility_mc.csv");
  std::map<std::string, std::vector<Row>> by_x;
  for (const Row& r : rows) by_x[r.at("x0")].push_back(r);
  REQUIRE(by_x.size() == 4);
  for (const Row& r : by_x["0.6"]) CHECK(num(r, "constraint") < 0.8);
  // Just below the threshold the constraint approaches 1 - eps from below.
  CHECK(num(by_x["0.66"].back(), "constraint") == doctest::Approx(0.8).epsilon(0.02));
  const auto& hi = by_x["0.8"];
  int changes = 0;
  for (std::size_t j = 2; j < hi.size(); ++j) {
    const double d1 = num(hi[j], "full_value") - num(hi[j - 1], "full_value");
    const double d0 = num(hi[j - 1], "full_value") - num(hi[j - 2], "full_value");
    changes += (d1 > 0.0) != (d0 > 0.0);
  }
  CHECK(changes == 1);

  const auto summary = read_csv(dir / "feasibility_mc_summary.csv");
  REQUIRE(summary.size() == 4);
  CHECK(summary[0].at("classification") == "infeasible");
  CHECK(summary[2].at("classification") == "feasible");
  CHECK(summary[2].at("status") == "ok");
}

TEST_CASE("table1 with a small network") {
  const fs::path dir = scratch("table1");
  const fs::path cfg = write_config(
      dir, std::string("{") + kSmallSim +
               R"(, "pinn": {"nodes": 8, "collocation": 200, "boundary": 50, "max_steps": 200}})");
  REQUIRE(run_cli("table1 --config " + cfg.string() + " --out " + dir.string()) == kExitOk);
  const auto rows = read_csv(dir / "table1.csv");
  REQUIRE(rows.size() == 12);
  for (const Row& r : rows) {
    if (r.at("method") != "lagrange") continue;
    CAPTURE(r.at("epsilon"));
    CHECK(r.at("status") == "ok");
    for (const char* k : {"diff_lambda_star", "diff_y_star", "diff_u", "diff_u_c", "diff_p_at_L",
                          "diff_p_at_0"}) {
      CHECK(std::abs(num(r, k)) <= 0.005);
    }
  }
  CHECK(fs::exists(dir / "pinn_model.json"));
  CHECK(fs::exists(dir / "pinn_training_log.csv"));

  // Reusing the checkpoint reproduces the table byte for byte.
  const fs::path again = scratch("table1_again");
  std::string text = read_file(cfg);
  text.insert(text.rfind('}'), ", \"pinn_checkpoint\": \"" + (dir / "pinn_model.json").string() + "\"");
  const fs::path cfg2 = write_config(again, text);
  REQUIRE(run_cli("table1 --config " + cfg2.string() + " --out " + again.string()) == kExitOk);
  CHECK(read_file(dir / "table1.csv") == read_file(again / "table1.csv"));
}
