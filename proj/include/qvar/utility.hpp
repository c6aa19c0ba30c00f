#pragma once

// S-shaped utility U(x) = U1(x - theta) above the reference level, -U2(theta - x)
// below it, its concave envelope with the floor reward lambda 1{x >= L}, the
// pointwise maximiser of U^c_lambda(x) - x y and the conjugate V^c_lambda.

#include <cmath>

#include "qvar/errors.hpp"

namespace qvar {

struct UtilitySpec {
  double gamma1 = 0.5;  // gain side U1(x) = x^gamma1
  double gamma2 = 0.3;  // loss side U2(x) = x^gamma2
  double theta = 1.5;
  double L = 0.9;

  void validate() const;
};

/// x -> x^gamma on [0, inf). Any replacement must be strictly increasing and
/// strictly concave with value(0) = 0, marginal(0+) = inf and marginal(inf) = 0.
struct PowerBranch {
  double gamma = 0.5;

  double value(double x) const { return std::pow(x, gamma); }
  double marginal(double x) const { return gamma * std::pow(x, gamma - 1.0); }
  double inverse_marginal(double y) const {
    if (gamma == 0.5) {
      const double q = 0.5 / y;
      return q * q;
    }
    return std::pow(gamma / y, 1.0 / (1.0 - gamma));
  }
};

/// -inf for x < 0, -U2(theta - x) on [0, theta), U1(x - theta) above.
double eval_U(double x, const UtilitySpec& spec);

/// I1 = (U1')^{-1}. Throws DomainError for y <= 0.
double inverse_marginal_I1(double y, const UtilitySpec& spec);

enum class EnvelopeTag { TwoSegment, OneSegment };

/// Shape of U^c_lambda for one multiplier.
struct EnvelopeCase {
  EnvelopeTag tag = EnvelopeTag::OneSegment;
  double lambda = 0.0;
  double k_lambda = 0.0;    // chord slope from (0, -U2(theta)) to (L, -U2(theta-L)+lambda)
  double z_tilde0 = 0.0;    // tangency knot of the one-segment envelope
  double c_z_tilde0 = 0.0;  // U1'(z_tilde0 - theta)
};

class ConcavifiedUtility {
 public:
  explicit ConcavifiedUtility(const UtilitySpec& spec);

  const UtilitySpec& spec() const { return spec_; }
  double z() const { return z_; }
  double z_tilde() const { return z_tilde_; }
  double c_z() const { return c_z_; }
  double c_z_tilde() const { return c_z_tilde_; }

  /// Multiplier at which k_lambda = c_z_tilde (switch between envelope shapes).
  double lambda_switch() const;

  double U(double x) const;
  /// U(x) + lambda 1{x >= L}.
  double U_lambda(double x, double lambda) const;
  double I1(double y) const;

  double k_lambda(double lambda) const;
  /// Tangency knot solving U1(x-theta) + U2(theta) + lambda - x U1'(x-theta) = 0 on
  /// [z_tilde, z]. Throws DomainError when k_lambda > c_z_tilde.
  double z_tilde0(double lambda) const;
  EnvelopeCase envelope_case(double lambda) const;

  double envelope(double x, double lambda) const;
  double envelope(double x, const EnvelopeCase& c) const;

  double x_star(double y, double lambda) const;
  double x_star(double y, const EnvelopeCase& c) const;

  double V_dual(double y, double lambda) const;
  double V_dual(double y, const EnvelopeCase& c) const;

  /// -x_star(y); at kinks this is the branch selected by the half-open intervals.
  double V_dual_derivative(double y, double lambda) const;
  double V_dual_derivative(double y, const EnvelopeCase& c) const;

  /// Largest y with x_star(y) >= L: k_lambda (two segments) or c_z_tilde0.
  double floor_cutoff(const EnvelopeCase& c) const;

 private:
  UtilitySpec spec_;
  PowerBranch gain_;
  PowerBranch loss_;
  double u2_theta_ = 0.0;
  double u2_theta_minus_L_ = 0.0;
  double z_ = 0.0;
  double z_tilde_ = 0.0;
  double c_z_ = 0.0;
  double c_z_tilde_ = 0.0;
};

/// Solves the two knot equations by bracketed bisection.
ConcavifiedUtility compute_knots(const UtilitySpec& spec);

}  // namespace qvar
