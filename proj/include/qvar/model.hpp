#pragma once

// Market model with a two-state unobservable drift, its Bayesian filter, and
// the reference-measure representation in which every expectation reduces to
// a one-dimensional integral against the N(0, tau) density of the terminal
// reference Brownian value w.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "qvar/errors.hpp"

namespace qvar {

struct ModelParams {
  double r = 0.05;
  double sigma = 0.2;
  double mu_l = 0.03;
  double mu_h = 0.1;
  double p = 4.0 / 7.0;  // prior P(mu = mu_h); gives a prior mean drift of 0.07
  double T = 1.0;
  double x0 = 1.0;
  double theta = 1.5;
  double L = 0.9;
  double epsilon = 0.1;

  /// Throws InvalidParameter on the first violated invariant.
  void validate() const;
};

struct DerivedParams {
  double theta_l = 0.0;  // (mu_l - r) / sigma
  double Theta = 0.0;    // (mu_h - mu_l) / sigma
  double mu_hat0 = 0.0;  // prior mean drift
  double phi = 0.0;      // (mu_hat0 - mu_l) / (mu_h - mu_hat0)
};

DerivedParams derive_params(const ModelParams& params);

/// Same market constants, likelihood-ratio start recomputed from a filtered
/// drift state mu_hat in (mu_l, mu_h).
DerivedParams derive_params_at(const ModelParams& params, double mu_hat);

/// Filter volatility sigma^{-1}(mu - mu_l)(mu_h - mu); zero outside [mu_l, mu_h].
double psi(double mu_hat, const ModelParams& params);

/// log of H at terminal reference value w with tau time remaining.
double log_h_of_w(double w, double tau, const DerivedParams& d, double r);

/// exp(-theta_l w - (r + theta_l^2/2) tau) / (1 + phi exp(Theta w - Theta^2 tau/2)).
double h_of_w(double w, double tau, const DerivedParams& d, double r);

/// Density ratio (1 + phi exp(Theta w - Theta^2 tau/2)) / (1 + phi).
double f_weight(double w, double tau, const DerivedParams& d);

struct QuadratureSpec {
  int node_count = 512;
  double truncation = 8.0;
  double split_tolerance = 1e-13;

  void validate() const;
};

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussLegendreRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

GaussLegendreRule make_gauss_legendre(int order);

/// Cached 16-point rule used for every quadrature panel.
const GaussLegendreRule& panel_rule();

inline constexpr int kPanelOrder = 16;

/// Composite Gauss-Legendre approximation of E[g(W)], W ~ N(0, tau), over
/// [-truncation sqrt(tau), truncation sqrt(tau)]. The domain is cut into
/// node_count / 16 equal panels and additionally split at every breakpoint
/// (sorted, may lie outside the domain) so piecewise-smooth integrands
/// converge at the smooth rate.
template <typename G>
double q_expect(G&& g, double tau, const QuadratureSpec& spec,
                std::span<const double> breakpoints = {}) {
  if (!(tau > 0.0)) throw DomainError("q_expect: tau must be positive");
  const double half = spec.truncation * std::sqrt(tau);
  const int panels = std::max(1, spec.node_count / kPanelOrder);
  const double width = 2.0 * half / panels;

  std::vector<double> cuts;
  cuts.reserve(static_cast<std::size_t>(panels) + 1 + breakpoints.size());
  for (int i = 0; i <= panels; ++i) cuts.push_back(-half + width * i);
  cuts.back() = half;
  for (double b : breakpoints) {
    if (b > -half && b < half) cuts.push_back(b);
  }
  std::sort(cuts.begin(), cuts.end());

  const GaussLegendreRule& rule = panel_rule();
  const double norm = 1.0 / std::sqrt(2.0 * M_PI * tau);
  double total = 0.0;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double a = cuts[c];
    const double b = cuts[c + 1];
    if (b - a <= 0.0) continue;
    const double mid = 0.5 * (a + b);
    const double rad = 0.5 * (b - a);
    double panel = 0.0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      const double w = mid + rad * rule.nodes[k];
      const double value = g(w);
      if (!std::isfinite(value)) {
        throw NumericalFailure("q_expect: non-finite integrand");
      }
      panel += rule.weights[k] * value * std::exp(-0.5 * w * w / tau);
    }
    total += rad * panel;
  }
  return total * norm;
}

/// Tabulated H over the truncated domain for one remaining time tau; answers
/// level-set queries {w : H(w) = level} by sign scan plus bisection.
class HLevelSets {
 public:
  HLevelSets(const DerivedParams& d, double r, double tau, const QuadratureSpec& spec,
             int scan_intervals = 1024);

  /// Sorted crossings of H(w) = level inside the domain. Empty when the level
  /// is never attained.
  std::vector<double> crossings(double level) const;

  /// Maximum of H over the truncated domain.
  double max_value() const { return max_h_; }
  double argmax() const { return argmax_; }

  double tau() const { return tau_; }
  double operator()(double w) const { return h_of_w(w, tau_, d_, r_); }

 private:
  DerivedParams d_;
  double r_;
  double tau_;
  double tol_;
  std::vector<double> grid_;
  std::vector<double> values_;
  double max_h_ = 0.0;
  double argmax_ = 0.0;
};

/// All w in the truncated domain with H(w) = h_level. Throws DegenerateModel
/// when H is constant (theta_l = 0 and phi = 0).
std::vector<double> find_indicator_breakpoints(double h_level, double tau, const DerivedParams& d,
                                               double r, const QuadratureSpec& spec);

}  // namespace qvar
