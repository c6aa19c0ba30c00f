#include "qvar/utility.hpp"

#include <limits>

#include "qvar/roots.hpp"

namespace qvar {

namespace {

constexpr double kKnotTol = 1e-12;

// Root of an increasing tangency equation on (theta, inf): starts from
// [theta + 1e-12, theta + 10 (theta + 1)] and doubles the upper end.
template <typename F>
double solve_knot(F&& f, double theta) {
  const double lo = theta + 1e-12;
  double span = 10.0 * (theta + 1.0);
  for (int i = 0; i < 60; ++i) {
    if (f(theta + span) > 0.0) return bisect(f, lo, theta + span, kKnotTol);
    span *= 2.0;
  }
  throw BracketError("knot equation has no sign change; utility axioms violated");
}

}  // namespace

void UtilitySpec::validate() const {
  if (!(gamma1 > 0.0 && gamma1 < 1.0)) throw InvalidParameter("gamma1 must lie in (0, 1)");
  if (!(gamma2 > 0.0 && gamma2 < 1.0)) throw InvalidParameter("gamma2 must lie in (0, 1)");
  if (!(L > 0.0 && L < theta)) throw InvalidParameter("need 0 < L < theta");
}

double eval_U(double x, const UtilitySpec& spec) {
  if (x < 0.0) return -std::numeric_limits<double>::infinity();
  if (x < spec.theta) return -std::pow(spec.theta - x, spec.gamma2);
  return std::pow(x - spec.theta, spec.gamma1);
}

double inverse_marginal_I1(double y, const UtilitySpec& spec) {
  if (!(y > 0.0)) throw DomainError("I1 requires y > 0");
  return PowerBranch{spec.gamma1}.inverse_marginal(y);
}

ConcavifiedUtility::ConcavifiedUtility(const UtilitySpec& spec)
    : spec_(spec), gain_{spec.gamma1}, loss_{spec.gamma2} {
  spec_.validate();
  const double theta = spec_.theta;
  const double L = spec_.L;
  u2_theta_ = loss_.value(theta);
  u2_theta_minus_L_ = loss_.value(theta - L);

  z_ = solve_knot(
      [&](double x) {
        return gain_.value(x - theta) + u2_theta_ - x * gain_.marginal(x - theta);
      },
      theta);
  z_tilde_ = solve_knot(
      [&](double x) {
        return gain_.value(x - theta) + u2_theta_minus_L_ - (x - L) * gain_.marginal(x - theta);
      },
      theta);
  c_z_ = gain_.marginal(z_ - theta);
  c_z_tilde_ = gain_.marginal(z_tilde_ - theta);
}

ConcavifiedUtility compute_knots(const UtilitySpec& spec) { return ConcavifiedUtility(spec); }

double ConcavifiedUtility::lambda_switch() const {
  return c_z_tilde_ * spec_.L - u2_theta_ + u2_theta_minus_L_;
}

double ConcavifiedUtility::U(double x) const {
  if (x < 0.0) return -std::numeric_limits<double>::infinity();
  if (x < spec_.theta) return -loss_.value(spec_.theta - x);
  return gain_.value(x - spec_.theta);
}

double ConcavifiedUtility::U_lambda(double x, double lambda) const {
  return U(x) + (x >= spec_.L ? lambda : 0.0);
}

double ConcavifiedUtility::I1(double y) const {
  if (!(y > 0.0)) throw DomainError("I1 requires y > 0");
  return gain_.inverse_marginal(y);
}

double ConcavifiedUtility::k_lambda(double lambda) const {
  return (u2_theta_ - u2_theta_minus_L_ + lambda) / spec_.L;
}

double ConcavifiedUtility::z_tilde0(double lambda) const {
  if (lambda < 0.0) throw DomainError("lambda must be nonnegative");
  if (k_lambda(lambda) > c_z_tilde_) {
    throw DomainError("z_tilde0 only exists for the one-segment envelope (k_lambda <= c_z_tilde)");
  }
  if (lambda == 0.0) return z_;
  const double theta = spec_.theta;
  auto f = [&](double x) {
    return gain_.value(x - theta) + u2_theta_ + lambda - x * gain_.marginal(x - theta);
  };
  // f(z_tilde) = L (k_lambda - c_z_tilde) <= 0 and f(z) = lambda > 0.
  if (f(z_tilde_) >= 0.0) return z_tilde_;
  return bisect(f, z_tilde_, z_, kKnotTol);
}

EnvelopeCase ConcavifiedUtility::envelope_case(double lambda) const {
  if (lambda < 0.0) throw DomainError("lambda must be nonnegative");
  EnvelopeCase c;
  c.lambda = lambda;
  c.k_lambda = k_lambda(lambda);
  if (c.k_lambda > c_z_tilde_) {
    c.tag = EnvelopeTag::TwoSegment;
    c.z_tilde0 = z_tilde_;
    c.c_z_tilde0 = c_z_tilde_;
  } else {
    c.tag = EnvelopeTag::OneSegment;
    c.z_tilde0 = z_tilde0(lambda);
    c.c_z_tilde0 = gain_.marginal(c.z_tilde0 - spec_.theta);
  }
  return c;
}

double ConcavifiedUtility::envelope(double x, double lambda) const {
  return envelope(x, envelope_case(lambda));
}

double ConcavifiedUtility::envelope(double x, const EnvelopeCase& c) const {
  if (x < 0.0) return -std::numeric_limits<double>::infinity();
  const double theta = spec_.theta;
  if (c.tag == EnvelopeTag::TwoSegment) {
    if (x < spec_.L) return c.k_lambda * x - u2_theta_;
    if (x < z_tilde_) return c_z_tilde_ * (x - spec_.L) - u2_theta_minus_L_ + c.lambda;
    return gain_.value(x - theta) + c.lambda;
  }
  if (x < c.z_tilde0) return c.c_z_tilde0 * x - u2_theta_;
  return gain_.value(x - theta) + c.lambda;
}

double ConcavifiedUtility::x_star(double y, double lambda) const {
  return x_star(y, envelope_case(lambda));
}

double ConcavifiedUtility::x_star(double y, const EnvelopeCase& c) const {
  if (!(y > 0.0)) throw DomainError("x_star requires y > 0");
  if (c.tag == EnvelopeTag::TwoSegment) {
    if (y < c_z_tilde_) return spec_.theta + gain_.inverse_marginal(y);
    if (y < c.k_lambda) return spec_.L;
    return 0.0;
  }
  if (y < c.c_z_tilde0) return spec_.theta + gain_.inverse_marginal(y);
  return 0.0;
}

double ConcavifiedUtility::V_dual(double y, double lambda) const {
  return V_dual(y, envelope_case(lambda));
}

double ConcavifiedUtility::V_dual(double y, const EnvelopeCase& c) const {
  const double x = x_star(y, c);
  if (x == 0.0) return -u2_theta_;
  if (x == spec_.L) return -u2_theta_minus_L_ + c.lambda - y * x;
  return gain_.value(x - spec_.theta) + c.lambda - y * x;
}

double ConcavifiedUtility::V_dual_derivative(double y, double lambda) const {
  return -x_star(y, lambda);
}

double ConcavifiedUtility::V_dual_derivative(double y, const EnvelopeCase& c) const {
  return -x_star(y, c);
}

double ConcavifiedUtility::floor_cutoff(const EnvelopeCase& c) const {
  return c.tag == EnvelopeTag::TwoSegment ? c.k_lambda : c.c_z_tilde0;
}

}  // namespace qvar
