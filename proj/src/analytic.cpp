#include "qvar/analytic.hpp"

#include <algorithm>
#include <cmath>

#include "qvar/roots.hpp"

namespace qvar {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const QuadratureSpec& validated(const QuadratureSpec& q) {
  q.validate();
  return q;
}

}  // namespace

std::string to_string(FormTag tag) {
  switch (tag) {
    case FormTag::Unconstrained: return "unconstrained";
    case FormTag::OneSegmentBinding: return "one_segment_binding";
    case FormTag::TwoSegmentBinding: return "two_segment_binding";
    case FormTag::FloorOnly: return "floor_only";
  }
  return "unknown";
}

std::string to_string(Feasibility f) {
  switch (f) {
    case Feasibility::Feasible: return "feasible";
    case Feasibility::Boundary: return "boundary";
    case Feasibility::Infeasible: return "infeasible";
  }
  return "unknown";
}

LagrangeSolver::LagrangeSolver(const ModelParams& params, const UtilitySpec& utility,
                               const QuadratureSpec& quad)
    : params_(params),
      derived_(derive_params(params)),
      utility_(utility),
      quad_(validated(quad)),
      levels_(derived_, params.r, params.T, quad_) {
  if (utility.theta != params.theta || utility.L != params.L) {
    throw InvalidParameter("utility theta/L must match the model's theta/L");
  }
}

std::vector<double> LagrangeSolver::breakpoints(std::initializer_list<double> levels) const {
  std::vector<double> out;
  for (double level : levels) {
    if (!(level > 0.0) || !std::isfinite(level)) continue;
    const auto c = levels_.crossings(level);
    out.insert(out.end(), c.begin(), c.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

double LagrangeSolver::prob_H_below(double level) const {
  if (!(level > 0.0)) return 0.0;
  const auto bp = breakpoints({level});
  const double T = params_.T;
  return q_expect(
      [&](double w) { return levels_(w) <= level ? f_weight(w, T, derived_) : 0.0; }, T, quad_,
      bp);
}

double LagrangeSolver::H_star(double eps) const {
  if (!(eps >= 0.0 && eps <= 1.0)) throw DomainError("epsilon must lie in [0, 1]");
  if (eps >= 1.0) return 0.0;
  const double hmax = levels_.max_value();
  if (eps <= 0.0) return hmax;
  const double target = 1.0 - eps;
  return bisect([&](double h) { return prob_H_below(h) - target; }, 0.0, hmax, 1e-14 * hmax);
}

double LagrangeSolver::x_hat(double eps) const {
  const double hs = H_star(eps);
  if (!(hs > 0.0)) return 0.0;
  return budget_value(make_form(FormTag::FloorOnly, kInf, hs));
}

Feasibility LagrangeSolver::classify_feasibility(double x0, double eps) const {
  if (!(x0 > 0.0)) throw DomainError("x0 must be positive");
  const double xh = x_hat(eps);
  if (std::abs(x0 - xh) <= kBoundaryTolerance) return Feasibility::Boundary;
  return x0 > xh ? Feasibility::Feasible : Feasibility::Infeasible;
}

WealthForm LagrangeSolver::make_form(FormTag tag, double y0, double H_star) const {
  WealthForm f;
  f.tag = tag;
  f.y0 = y0;
  f.H_star = H_star;
  const double scale = y0 * (1.0 + derived_.phi);
  switch (tag) {
    case FormTag::Unconstrained:
      f.continuous_cut = utility_.c_z() / scale;
      f.floor_cut = f.continuous_cut;
      break;
    case FormTag::OneSegmentBinding:
      f.continuous_cut = H_star;
      f.floor_cut = H_star;
      break;
    case FormTag::TwoSegmentBinding:
      f.continuous_cut = utility_.c_z_tilde() / scale;
      f.floor_cut = H_star;
      break;
    case FormTag::FloorOnly:
      f.continuous_cut = 0.0;
      f.floor_cut = H_star;
      break;
  }
  return f;
}

double LagrangeSolver::terminal_wealth(double H, const WealthForm& form) const {
  const double theta = params_.theta;
  if (form.tag == FormTag::Unconstrained) {
    return H <= form.continuous_cut ? theta + utility_.I1(form.y0 * (1.0 + derived_.phi) * H)
                                    : 0.0;
  }
  if (H < form.continuous_cut) return theta + utility_.I1(form.y0 * (1.0 + derived_.phi) * H);
  if (H < form.floor_cut) return params_.L;
  return 0.0;
}

double LagrangeSolver::budget_value(const WealthForm& form) const {
  const double T = params_.T;
  const double scale = 1.0 + derived_.phi;
  const auto bp = breakpoints({form.continuous_cut, form.floor_cut});
  return q_expect(
      [&](double w) {
        const double H = levels_(w);
        const double x = terminal_wealth(H, form);
        return x == 0.0 ? 0.0 : f_weight(w, T, derived_) * x * scale * H;
      },
      T, quad_, bp);
}

double LagrangeSolver::solve_y0(FormTag tag, double H_star, double x0) const {
  if (!(x0 > 0.0)) throw DomainError("x0 must be positive");
  auto f = [&](double log_y) { return budget_value(make_form(tag, std::exp(log_y), H_star)) - x0; };
  double lo = 0.0;
  double hi = 0.0;
  double flo = f(lo);
  double fhi = flo;
  for (int i = 0; flo <= 0.0; ++i) {
    if (i > 200) throw RangeError("budget equation: x0 above the form's range");
    hi = lo;
    fhi = flo;
    lo -= 0.5;
    flo = f(lo);
  }
  for (int i = 0; fhi > 0.0; ++i) {
    if (i > 200) throw RangeError("budget equation: x0 below the form's infimum");
    lo = hi;
    flo = fhi;
    hi += 0.5;
    fhi = f(hi);
  }
  const double tol = 1e-10 * std::max(1.0, x0);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (std::abs(fm) <= tol || hi - lo < 1e-15) return std::exp(mid);
    if (fm > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::exp(0.5 * (lo + hi));
}

Solution LagrangeSolver::solve(double x0, double eps) const {
  Solution s;
  s.epsilon = eps;
  s.x0 = x0;
  s.H_star = H_star(eps);
  s.x_hat = s.H_star > 0.0 ? budget_value(make_form(FormTag::FloorOnly, kInf, s.H_star)) : 0.0;
  if (std::abs(x0 - s.x_hat) <= kBoundaryTolerance) {
    s.feasibility = Feasibility::Boundary;
  } else {
    s.feasibility = x0 > s.x_hat ? Feasibility::Feasible : Feasibility::Infeasible;
  }

  if (s.feasibility == Feasibility::Infeasible) {
    s.lambda_star = kNaN;
    s.y0 = kNaN;
    s.u = s.u_c = s.p_at_L = s.p_at_0 = s.p_at_least_L = kNaN;
    s.form = make_form(FormTag::FloorOnly, kInf, s.H_star);
    return s;
  }

  double lambda = 0.0;
  std::optional<WealthForm> form;
  const double one_plus_phi = 1.0 + derived_.phi;
  constexpr double accept_slack = 1.0 - 1e-10;

  if (s.feasibility == Feasibility::Boundary) {
    form = make_form(FormTag::FloorOnly, kInf, s.H_star);
    lambda = kInf;
  } else if (s.H_star > 0.0) {
    // Step 1: two line segments, binding constraint.
    const double y3 = solve_y0(FormTag::TwoSegmentBinding, s.H_star, x0);
    if (y3 >= accept_slack * utility_.c_z_tilde() / (s.H_star * one_plus_phi)) {
      const double k = y3 * one_plus_phi * s.H_star;
      lambda = params_.L * (k - utility_.k_lambda(0.0));
      form = make_form(FormTag::TwoSegmentBinding, y3, s.H_star);
    } else {
      // Step 2: one line segment, binding constraint.
      std::optional<double> y2;
      try {
        y2 = solve_y0(FormTag::OneSegmentBinding, s.H_star, x0);
      } catch (const RangeError&) {
        y2.reset();
      }
      if (y2 && *y2 >= accept_slack * utility_.c_z() / (s.H_star * one_plus_phi)) {
        const double c = *y2 * one_plus_phi * s.H_star;
        const double zt0 = params_.theta + utility_.I1(c);
        lambda = zt0 * c - utility_.U(zt0) + utility_.U(0.0);
        form = make_form(FormTag::OneSegmentBinding, *y2, s.H_star);
      }
    }
  }
  if (!form) {
    // Step 3: constraint slack.
    const double y1 = solve_y0(FormTag::Unconstrained, s.H_star, x0);
    lambda = 0.0;
    form = make_form(FormTag::Unconstrained, y1, s.H_star);
  }

  s.form = *form;
  s.lambda_star = lambda;
  s.y0 = form->y0;
  const WealthStats st = wealth_stats(*form, lambda);
  s.u = st.u;
  s.u_c = st.u_c;
  s.p_at_L = st.p_at_L;
  s.p_at_0 = st.p_at_0;
  s.p_at_least_L = st.p_at_least_L;
  return s;
}

WealthStats LagrangeSolver::wealth_stats(const WealthForm& form, double lambda) const {
  const double T = params_.T;
  const double L = params_.L;
  const auto bp = breakpoints({form.continuous_cut, form.floor_cut});
  auto expect = [&](auto&& g) {
    return q_expect([&](double w) { return f_weight(w, T, derived_) * g(terminal_wealth(levels_(w), form)); },
                    T, quad_, bp);
  };
  WealthStats st;
  st.u = expect([&](double x) { return utility_.U(x); });
  st.p_at_L = expect([&](double x) { return x == L ? 1.0 : 0.0; });
  st.p_at_0 = expect([&](double x) { return x == 0.0 ? 1.0 : 0.0; });
  st.p_at_least_L = expect([&](double x) { return x >= L ? 1.0 : 0.0; });
  if (std::isfinite(lambda)) {
    const EnvelopeCase c = utility_.envelope_case(lambda);
    st.u_c = expect([&](double x) { return utility_.envelope(x, c); });
  } else {
    st.u_c = kInf;
  }
  return st;
}

double LagrangeSolver::dual_value(double t, double y, double mu_hat, double lambda) const {
  if (!(y > 0.0)) throw DomainError("dual_value requires y > 0");
  if (!(lambda >= 0.0)) throw DomainError("lambda must be nonnegative");
  if (!(t >= 0.0 && t <= params_.T)) throw DomainError("t must lie in [0, T]");
  const EnvelopeCase c = utility_.envelope_case(lambda);
  const double tau = params_.T - t;
  if (tau <= 0.0) return utility_.V_dual(y, c);
  const DerivedParams d = derive_params_at(params_, mu_hat);
  const HLevelSets lv(d, params_.r, tau, quad_);
  const double scale = y * (1.0 + d.phi);
  std::vector<double> bp;
  for (double kink : {utility_.c_z_tilde(), c.k_lambda, c.c_z_tilde0}) {
    const auto cr = lv.crossings(kink / scale);
    bp.insert(bp.end(), cr.begin(), cr.end());
  }
  std::sort(bp.begin(), bp.end());
  return q_expect(
      [&](double w) { return f_weight(w, tau, d) * utility_.V_dual(scale * lv(w), c); }, tau, quad_,
      bp);
}

double LagrangeSolver::dual_constraint(double t, double y, double mu_hat, double lambda) const {
  if (!(y > 0.0)) throw DomainError("dual_constraint requires y > 0");
  if (!(lambda >= 0.0)) throw DomainError("lambda must be nonnegative");
  if (!(t >= 0.0 && t <= params_.T)) throw DomainError("t must lie in [0, T]");
  const EnvelopeCase c = utility_.envelope_case(lambda);
  const double cutoff = utility_.floor_cutoff(c);
  const double tau = params_.T - t;
  if (tau <= 0.0) return y < cutoff ? 1.0 : 0.0;
  const DerivedParams d = derive_params_at(params_, mu_hat);
  const HLevelSets lv(d, params_.r, tau, quad_);
  const double scale = y * (1.0 + d.phi);
  const auto bp = lv.crossings(cutoff / scale);
  return q_expect(
      [&](double w) { return scale * lv(w) < cutoff ? f_weight(w, tau, d) : 0.0; }, tau, quad_,
      bp);
}

EpsilonThresholds LagrangeSolver::epsilon_thresholds(double y0) const {
  if (!(y0 > 0.0)) throw DomainError("y0 must be positive");
  const double scale = y0 * (1.0 + derived_.phi);
  EpsilonThresholds e;
  e.eps_star = 1.0 - prob_H_below(utility_.c_z() / scale);
  e.eps_lower = 1.0 - prob_H_below(utility_.c_z_tilde() / scale);
  return e;
}

double LagrangeSolver::dual_budget(double y, double lambda) const {
  if (!(y > 0.0)) throw DomainError("dual_budget requires y > 0");
  if (!(lambda >= 0.0)) throw DomainError("lambda must be nonnegative");
  const EnvelopeCase c = utility_.envelope_case(lambda);
  const double T = params_.T;
  const double scale = 1.0 + derived_.phi;
  const auto bp = breakpoints({utility_.c_z_tilde() / (y * scale), c.k_lambda / (y * scale),
                               c.c_z_tilde0 / (y * scale)});
  return q_expect(
      [&](double w) {
        const double H = levels_(w);
        const double x = utility_.x_star(y * scale * H, c);
        return x == 0.0 ? 0.0 : f_weight(w, T, derived_) * x * scale * H;
      },
      T, quad_, bp);
}

double LagrangeSolver::y_for_lambda(double x0, double lambda) const {
  if (!(x0 > 0.0)) throw DomainError("x0 must be positive");
  // The budget decreases in y from +inf to 0; bracket in log y.
  auto f = [&](double log_y) { return dual_budget(std::exp(log_y), lambda) - x0; };
  double lo = 0.0;
  double hi = 0.0;
  for (int i = 0; f(lo) <= 0.0; ++i) {
    if (i > 200) throw RangeError("dual budget: x0 not attained");
    hi = lo;
    lo -= 0.5;
  }
  for (int i = 0; f(hi) > 0.0; ++i) {
    if (i > 200) throw RangeError("dual budget: x0 not attained");
    lo = hi;
    hi += 0.5;
  }
  return std::exp(bisect(f, lo, hi, 1e-13));
}

WealthStats LagrangeSolver::dual_stats(double y, double lambda) const {
  if (!(y > 0.0)) throw DomainError("dual_stats requires y > 0");
  const EnvelopeCase c = utility_.envelope_case(lambda);
  const double T = params_.T;
  const double L = params_.L;
  const double scale = y * (1.0 + derived_.phi);
  const auto bp = breakpoints({utility_.c_z_tilde() / scale, c.k_lambda / scale,
                               c.c_z_tilde0 / scale});
  auto expect = [&](auto&& g) {
    return q_expect(
        [&](double w) { return f_weight(w, T, derived_) * g(utility_.x_star(scale * levels_(w), c)); },
        T, quad_, bp);
  };
  WealthStats st;
  st.u = expect([&](double x) { return utility_.U(x); });
  st.u_c = expect([&](double x) { return utility_.envelope(x, c); });
  st.p_at_L = expect([&](double x) { return x == L ? 1.0 : 0.0; });
  st.p_at_0 = expect([&](double x) { return x == 0.0 ? 1.0 : 0.0; });
  st.p_at_least_L = expect([&](double x) { return x >= L ? 1.0 : 0.0; });
  return st;
}

}  // namespace qvar
