#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qvar/commands.hpp"

using namespace qvar;

int main(int argc, char** argv) {
  CLI::App app{"S-shaped utility maximization under a VaR constraint with a hidden drift"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<double> epsilon;
  std::string method_name = "lagrange";
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  app.add_option("--config", config_path, "experiment JSON (defaults when omitted)")
      ->check(CLI::ExistingFile);
  app.add_option("--epsilon", epsilon, "quantile level for solve (default: model.epsilon)")
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--method", method_name, "solver")
      ->check(CLI::IsMember({"lagrange", "mc", "pinn"}));
  app.add_option("--seed", seed, "seed for both the simulation pool and the network");
  app.add_option("--out", out_dir, "output directory (default: output_dir from the config)");

  auto* solve = app.add_subcommand("solve", "solve one epsilon and print the result record");
  auto* sweep = app.add_subcommand("sweep", "constraint level sweep over epsilon_grid");
  auto* dist = app.add_subcommand("dist", "terminal wealth distributions for dist_lambdas");
  auto* feas = app.add_subcommand("feasibility", "lambda curves for each feasibility_x0");
  auto* table = app.add_subcommand("table1", "all methods at the four reference levels");
  for (auto* sub : {solve, sweep, dist, feas, table}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    ExperimentConfig cfg = config_path.empty() ? parse_config("{}") : load_config(config_path);
    if (seed) {
      cfg.sim.seed = *seed;
      cfg.pinn.seed = *seed;
    }
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    cfg.validate();
    const Method method = parse_method(method_name);

    if (solve->parsed()) {
      return cmd_solve(cfg, epsilon.value_or(cfg.model.epsilon), method, std::cout, &std::cerr);
    }
    if (sweep->parsed()) return cmd_sweep(cfg, method, &std::cerr);
    if (dist->parsed()) return cmd_dist(cfg, method, &std::cerr);
    if (feas->parsed()) return cmd_feasibility(cfg, method, &std::cerr);
    return cmd_table1(cfg, &std::cerr);
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}
