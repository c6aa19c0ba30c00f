#pragma once

// Exact solver for the VaR-constrained problem. Terminal wealth is a function
// of H = H(T) only, X(T) = x*(y0 (1+phi) H), so every quantity below is a
// one-dimensional quadrature over the terminal reference Brownian value.
// Probabilities under P are Q-expectations weighted by F(T).

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qvar/model.hpp"
#include "qvar/utility.hpp"

namespace qvar {

enum class FormTag {
  Unconstrained,      // (theta + I1(Y)) 1{H <= c_z / (y0 (1+phi))}, lambda = 0
  OneSegmentBinding,  // (theta + I1(Y)) 1{H < H*}
  TwoSegmentBinding,  // continuous below c_z_tilde / (y0 (1+phi)), L up to H*, else 0
  FloorOnly,          // L 1{H < H*}
};

std::string to_string(FormTag tag);

enum class Feasibility { Feasible, Boundary, Infeasible };

std::string to_string(Feasibility f);

/// Dual cutoffs in H-units for one (form, y0) pair.
struct WealthForm {
  FormTag tag = FormTag::Unconstrained;
  double y0 = 1.0;
  double H_star = 0.0;
  double continuous_cut = 0.0;  // X continuous for H below this
  double floor_cut = 0.0;       // X >= L for H below this
};

struct Solution {
  double epsilon = 0.0;
  double x0 = 0.0;
  Feasibility feasibility = Feasibility::Feasible;
  double x_hat = 0.0;
  double H_star = 0.0;
  double lambda_star = 0.0;  // +inf for FloorOnly
  double y0 = 0.0;           // +inf for FloorOnly
  WealthForm form;
  double u = 0.0;
  double u_c = 0.0;  // +inf for FloorOnly
  double p_at_L = 0.0;
  double p_at_0 = 0.0;
  double p_at_least_L = 0.0;

  bool solved() const { return feasibility != Feasibility::Infeasible; }
};

struct WealthStats {
  double u = 0.0;
  double u_c = 0.0;
  double p_at_L = 0.0;
  double p_at_0 = 0.0;
  double p_at_least_L = 0.0;
};

struct EpsilonThresholds {
  double eps_star = 0.0;   // at or above: unconstrained form
  double eps_lower = 0.0;  // below: two-segment form
};

class LagrangeSolver {
 public:
  LagrangeSolver(const ModelParams& params, const UtilitySpec& utility,
                 const QuadratureSpec& quad = {});

  const ModelParams& params() const { return params_; }
  const DerivedParams& derived() const { return derived_; }
  const ConcavifiedUtility& utility() const { return utility_; }
  const QuadratureSpec& quadrature() const { return quad_; }
  const HLevelSets& level_sets() const { return levels_; }

  /// P(H(T) <= level), computed as E^Q[F 1{H <= level}].
  double prob_H_below(double level) const;

  /// Least H* with P(H(T) <= H*) = 1 - eps. eps = 1 gives 0; eps = 0 gives
  /// the supremum of H over the truncated domain.
  double H_star(double eps) const;

  /// Cost of delivering L on {H < H*_eps}.
  double x_hat(double eps) const;

  Feasibility classify_feasibility(double x0, double eps) const;

  WealthForm make_form(FormTag tag, double y0, double H_star) const;
  double terminal_wealth(double H, const WealthForm& form) const;

  /// E^Q[F X(T) (1+phi) H] for the given form.
  double budget_value(const WealthForm& form) const;

  /// y0 with budget_value = x0. Throws RangeError when x0 is not attained.
  double solve_y0(FormTag tag, double H_star, double x0) const;

  /// Steps 0-3 of the exact algorithm.
  Solution solve(double x0, double eps) const;

  WealthStats wealth_stats(const WealthForm& form, double lambda) const;

  /// v^c_lambda(t, y, mu_hat) by quadrature.
  double dual_value(double t, double y, double mu_hat, double lambda) const;

  /// g_lambda(t, y, mu_hat) = P(x*(Y(T)) >= L | Y(t) = y, mu(t) = mu_hat).
  double dual_constraint(double t, double y, double mu_hat, double lambda) const;

  EpsilonThresholds epsilon_thresholds(double y0) const;

  /// Wealth financed at t = 0 by the dual start y for a fixed multiplier:
  /// E^Q[F (1+phi) H x*(y (1+phi) H)].
  double dual_budget(double y, double lambda) const;

  /// y with dual_budget(y, lambda) = x0.
  double y_for_lambda(double x0, double lambda) const;

  /// Statistics of x*(y (1+phi) H(T)) for a fixed multiplier.
  WealthStats dual_stats(double y, double lambda) const;

 private:
  // Breakpoints of {H = level} for each finite positive level.
  std::vector<double> breakpoints(std::initializer_list<double> levels) const;

  ModelParams params_;
  DerivedParams derived_;
  ConcavifiedUtility utility_;
  QuadratureSpec quad_;
  HLevelSets levels_;
};

inline constexpr double kBoundaryTolerance = 1e-9;

}  // namespace qvar
