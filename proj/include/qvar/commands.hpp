#pragma once

// Experiment subcommands. Each writes its CSV/JSON outputs plus a manifest
// into cfg.output_dir and returns a process exit code.

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

#include "qvar/analytic.hpp"
#include "qvar/config.hpp"

namespace qvar {

enum class Method { Lagrange, Mc, Pinn };

Method parse_method(const std::string& name);
std::string to_string(Method m);

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitInfeasible = 2;
inline constexpr int kExitNumerical = 3;

/// One row of the results table: the columns reported for every method.
struct SolveRecord {
  Method method = Method::Lagrange;
  double epsilon = 0.0;
  double x0 = 0.0;
  bool feasible = true;
  double x_hat = 0.0;
  double lambda_star = 0.0;
  double y_star = 0.0;
  double u = 0.0;
  double u_c = 0.0;
  double u_c_se = 0.0;  // simulation standard error, 0 for quadrature
  double p_at_L = 0.0;
  double p_at_0 = 0.0;
  double p_at_least_L = 0.0;
};

/// Solvers shared across the points of one command: the quadrature solver,
/// the simulated pool and the trained network are built on first use.
class Workbench {
 public:
  explicit Workbench(const ExperimentConfig& cfg, std::ostream* progress = nullptr);
  ~Workbench();

  const ExperimentConfig& config() const { return cfg_; }
  const LagrangeSolver& lagrange();
  const SamplePool& pool();
  const ConcavifiedUtility& utility() const;
  /// Loads cfg.pinn_checkpoint or trains, saving the model and training log
  /// into the output directory.
  const PinnModel& pinn();

  SolveRecord solve(double epsilon, Method method);
  /// Dual start for a fixed multiplier at the configured x0.
  double y_for_lambda(double lambda, Method method);

 private:
  ExperimentConfig cfg_;
  std::ostream* progress_;
  struct State;
  std::unique_ptr<State> state_;
};

int cmd_solve(const ExperimentConfig& cfg, double epsilon, Method method, std::ostream& out,
              std::ostream* progress = nullptr);
int cmd_sweep(const ExperimentConfig& cfg, Method method, std::ostream* progress = nullptr);
int cmd_dist(const ExperimentConfig& cfg, Method method, std::ostream* progress = nullptr);
int cmd_feasibility(const ExperimentConfig& cfg, Method method, std::ostream* progress = nullptr);
int cmd_table1(const ExperimentConfig& cfg, std::ostream* progress = nullptr);

/// %.6g, the format of every floating-point CSV field.
std::string fmt6(double v);

/// Identifier of the source tree this binary was built from.
std::string build_id();

}  // namespace qvar
