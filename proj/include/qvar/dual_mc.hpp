#pragma once

// Dual Monte Carlo solver: Euler simulation of the discount process zeta and
// the filtered drift, sample-average dual value, fixed-step descent for the
// optimal dual start y*, and a lambda-grid sweep inverted for the multiplier.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "qvar/model.hpp"
#include "qvar/utility.hpp"

namespace qvar {

struct SimConfig {
  std::size_t M = 100000;
  int N = 100;
  std::uint64_t seed = 42;
  double delta = 0.1;
  int descent_steps = 200;
  int lambda_grid_size = 51;
  double lambda_max = 2.5;
  double y_init = 1.0;

  void validate() const;
};

/// Samples per independent RNG stream. Stream b is seeded from (seed, b).
inline constexpr std::size_t kSampleBlock = 4096;

struct SamplePool {
  std::vector<double> zeta_terminal;
  std::vector<double> mu_terminal;
  std::uint64_t seed = 0;
  int N = 0;
  double h = 0.0;
  std::size_t zeta_floor_hits = 0;  // steps where zeta fell below the floor
  std::size_t mu_clamp_hits = 0;    // steps where the filter left [mu_l, mu_h]

  std::size_t size() const { return zeta_terminal.size(); }
};

inline constexpr double kZetaFloor = 1e-12;

SamplePool simulate_paths(const SimConfig& cfg, const ModelParams& params);

/// Euler steps with explicit normals z[path][step], used by tests.
SamplePool simulate_paths_from(const std::vector<std::vector<double>>& normals, double T,
                               const ModelParams& params);

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// (1/M) sum V^c_lambda(y zeta_i).
McEstimate mc_dual_value(double y, double lambda, const SamplePool& pool,
                         const ConcavifiedUtility& utility);

/// x0 - (1/M) sum zeta_i x*(y zeta_i): derivative of the dual objective in y.
double dual_gradient(double y, const EnvelopeCase& c, double x0, const SamplePool& pool,
                     const ConcavifiedUtility& utility);

struct DescentResult {
  double y_star = 0.0;
  double residual = 0.0;  // |gradient| at the returned iterate
};

/// Fixed-step descent y <- y - delta * gradient from cfg.y_init. Throws
/// NumericalFailure if an iterate leaves (1e-6, 1e6).
DescentResult optimize_y(double lambda, double x0, const SamplePool& pool, const SimConfig& cfg,
                         const ConcavifiedUtility& utility);

struct PrimalEstimates {
  double u_c = 0.0;
  double u_c_se = 0.0;
  double u = 0.0;
  double h = 0.0;  // frequency of x* >= L
  double p_at_L = 0.0;
  double p_at_0 = 0.0;
};

PrimalEstimates primal_estimates(double lambda, double y_star, const SamplePool& pool,
                                 const ConcavifiedUtility& utility);

struct SweepPoint {
  double lambda = 0.0;
  double y_star = 0.0;
  double residual = 0.0;
  PrimalEstimates est;
};

struct LambdaGrid {
  double x0 = 0.0;
  std::vector<SweepPoint> points;
  bool h_monotone = true;
};

/// Descent and primal estimates at each of the J grid multipliers, all on the
/// same pool. Grid points run in parallel.
LambdaGrid lambda_grid(double x0, const SamplePool& pool, const SimConfig& cfg,
                       const ConcavifiedUtility& utility);

struct McSolution {
  double epsilon = 0.0;
  double x0 = 0.0;
  bool feasible = true;  // false when max h on the grid stays below 1 - epsilon
  double lambda_star = 0.0;
  double y_star = 0.0;
  double u_c = 0.0;
  double u_c_se = 0.0;
  double u = 0.0;
  double h = 0.0;
  double p_at_L = 0.0;
  double p_at_0 = 0.0;
};

/// Right inverse of h on the grid: lambda* = 0 if h(0) >= 1 - eps, otherwise
/// linear interpolation across the first bracket reaching 1 - eps.
McSolution invert_grid(const LambdaGrid& grid, double epsilon);

McSolution lambda_sweep(double x0, double epsilon, const SamplePool& pool, const SimConfig& cfg,
                        const ConcavifiedUtility& utility);

}  // namespace qvar
