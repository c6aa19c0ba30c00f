#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "qvar/analytic.hpp"

using namespace qvar;

namespace {

const LagrangeSolver& solver() {
  static const LagrangeSolver s(ModelParams{}, UtilitySpec{});
  return s;
}

const Solution& solution(double eps) {
  static std::vector<std::pair<double, Solution>> cache;
  for (const auto& [e, s] : cache) {
    if (e == eps) return s;
  }
  cache.emplace_back(eps, solver().solve(1.0, eps));
  return cache.back().second;
}

}  // namespace

TEST_CASE("H* limits") {
  const LagrangeSolver& s = solver();
  CHECK(s.H_star(1.0) == 0.0);
  CHECK(s.H_star(0.0) == s.level_sets().max_value());
  CHECK_THROWS_AS(s.H_star(-0.1), DomainError);
  CHECK(s.prob_H_below(s.H_star(0.3)) == doctest::Approx(0.7).epsilon(1e-10));
}

TEST_CASE("H* against a direct simulation of the hidden drift") {
  // Draw the drift from the prior, simulate the observation Brownian motion
  // under P and count how often H(T) <= H*.
  const ModelParams p;
  const DerivedParams d = derive_params(p);
  const double hs = solver().H_star(0.2);
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution high(p.p);
  const int n = 10000000;
  int below = 0;
  for (int i = 0; i < n; ++i) {
    const double mu = high(rng) ? p.mu_h : p.mu_l;
    const double w = std::sqrt(p.T) * normal(rng) + (mu - p.mu_l) / p.sigma * p.T;
    below += h_of_w(w, p.T, d, p.r) <= hs ? 1 : 0;
  }
  const double freq = static_cast<double>(below) / n;
  const double se = std::sqrt(0.8 * 0.2 / n);
  CHECK(std::abs(freq - 0.8) <= 3.0 * se);
}

TEST_CASE("feasibility threshold x_hat") {
  const LagrangeSolver& s = solver();
  const ModelParams p;
  CHECK(s.x_hat(1.0) == 0.0);
  // Floor delivered almost surely costs the discounted floor.
  CHECK(s.x_hat(0.0) == doctest::Approx(p.L * std::exp(-p.r * p.T)).epsilon(1e-10));
  CHECK(s.x_hat(0.2) == doctest::Approx(0.66).epsilon(0.02 / 0.66));
  CHECK(s.classify_feasibility(0.73, 0.2) == Feasibility::Feasible);
  CHECK(s.classify_feasibility(0.6, 0.2) == Feasibility::Infeasible);
  CHECK(s.classify_feasibility(1e-3, 1.0) == Feasibility::Feasible);
  CHECK(s.classify_feasibility(s.x_hat(0.2), 0.2) == Feasibility::Boundary);
  CHECK_THROWS_AS(s.classify_feasibility(0.0, 0.2), DomainError);
}

TEST_CASE("infeasible and boundary solves") {
  const LagrangeSolver& s = solver();
  const Solution bad = s.solve(0.6, 0.2);
  CHECK(bad.feasibility == Feasibility::Infeasible);
  CHECK_FALSE(bad.solved());
  CHECK(std::isnan(bad.lambda_star));

  const double xh = s.x_hat(0.2);
  const Solution edge = s.solve(xh, 0.2);
  CHECK(edge.feasibility == Feasibility::Boundary);
  CHECK(edge.form.tag == FormTag::FloorOnly);
  CHECK(std::isinf(edge.lambda_star));
  CHECK(edge.p_at_L == doctest::Approx(0.8).epsilon(1e-9));
  CHECK(edge.p_at_0 == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("budget function") {
  const LagrangeSolver& s = solver();
  const double hs = s.H_star(0.2);
  const double xh = s.x_hat(0.2);
  CHECK(s.budget_value(s.make_form(FormTag::FloorOnly, 0.5, hs)) == doctest::Approx(xh));
  CHECK(s.budget_value(s.make_form(FormTag::FloorOnly, 5.0, hs)) == doctest::Approx(xh));

  // Beyond y ~ 4 the continuous region lies outside the truncated domain and
  // the budget is zero to machine precision.
  double prev = std::numeric_limits<double>::infinity();
  for (double y = 0.2; y < 3.5; y += 0.05) {
    const double f = s.budget_value(s.make_form(FormTag::Unconstrained, y, hs));
    CHECK(f < prev);
    prev = f;
  }
  CHECK(s.budget_value(s.make_form(FormTag::TwoSegmentBinding, 1e8, hs)) ==
        doctest::Approx(xh).epsilon(1e-6));
  CHECK_THROWS_AS(s.solve_y0(FormTag::TwoSegmentBinding, hs, 0.6), RangeError);
}

TEST_CASE("solve_y0") {
  const LagrangeSolver& s = solver();
  const double y1 = s.solve_y0(FormTag::Unconstrained, 0.0, 1.0);
  CHECK(y1 == doctest::Approx(0.945).epsilon(0.005 / 0.945));
  CHECK(std::abs(s.budget_value(s.make_form(FormTag::Unconstrained, y1, 0.0)) - 1.0) <= 1e-9);
  CHECK(s.solve_y0(FormTag::Unconstrained, 0.0, 2.0) < y1);

  const double hs = s.H_star(0.1);
  const double y3 = s.solve_y0(FormTag::TwoSegmentBinding, hs, 1.0);
  CHECK(std::abs(s.budget_value(s.make_form(FormTag::TwoSegmentBinding, y3, hs)) - 1.0) <= 1e-9);
}

TEST_CASE("reference table rows") {
  struct Row {
    double eps, lambda, y0, u, uc, pL, p0;
    FormTag tag;
  };
  const Row rows[] = {
      {0.0, 1.659, 1.885, -0.564, 1.095, 0.751, 0.0, FormTag::TwoSegmentBinding},
      {0.1, 1.452, 1.794, -0.411, 0.896, 0.5, 0.1, FormTag::TwoSegmentBinding},
      {0.35, 0.483, 1.216, -0.095, 0.219, 0.0, 0.35, FormTag::OneSegmentBinding},
      {1.0, 0.0, 0.945, -0.085, -0.085, 0.0, 0.395, FormTag::Unconstrained},
  };
  for (const Row& r : rows) {
    CAPTURE(r.eps);
    const Solution& s = solution(r.eps);
    CHECK(s.form.tag == r.tag);
    CHECK(std::abs(s.lambda_star - r.lambda) <= 0.005);
    CHECK(std::abs(s.y0 - r.y0) <= 0.005);
    CHECK(std::abs(s.u - r.u) <= 0.005);
    CHECK(std::abs(s.u_c - r.uc) <= 0.005);
    CHECK(std::abs(s.p_at_L - r.pL) <= 0.005);
    CHECK(std::abs(s.p_at_0 - r.p0) <= 0.005);
  }
}

TEST_CASE("property: complementary slackness and monotonicity over epsilon") {
  double prev_lambda = std::numeric_limits<double>::infinity();
  double prev_u = -std::numeric_limits<double>::infinity();
  double prev_uc = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 10; ++i) {
    const double eps = i / 10.0;
    CAPTURE(eps);
    const Solution& s = solution(eps);
    REQUIRE(s.feasibility == Feasibility::Feasible);
    CHECK(s.p_at_least_L >= 1.0 - eps - 1e-8);
    CHECK(s.lambda_star * (s.p_at_least_L - 1.0 + eps) <= 1e-8);
    if (s.form.tag != FormTag::Unconstrained) CHECK(s.lambda_star > 0.0);
    CHECK(s.lambda_star <= prev_lambda);
    CHECK(s.u >= prev_u - 1e-12);
    CHECK(s.u_c <= prev_uc + 1e-12);
    // On the optimal support the envelope equals U plus the bonus.
    CHECK(std::abs(s.u_c - s.u - s.lambda_star * s.p_at_least_L) <= 1e-8);
    prev_lambda = s.lambda_star;
    prev_u = s.u;
    prev_uc = s.u_c;
  }
}

TEST_CASE("property: terminal wealth support matches the knots") {
  const LagrangeSolver& s = solver();
  const ConcavifiedUtility& cu = s.utility();
  const ModelParams p;
  for (double eps : {0.1, 0.35, 1.0}) {
    const Solution& sol = solution(eps);
    double knot = cu.z();
    if (sol.form.tag == FormTag::TwoSegmentBinding) knot = cu.z_tilde();
    if (sol.form.tag == FormTag::OneSegmentBinding) knot = cu.z_tilde0(sol.lambda_star);
    bool saw_floor = false;
    bool saw_zero = false;
    bool saw_continuous = false;
    for (double w = -8.0; w <= 8.0; w += 1e-3) {
      const double x = s.terminal_wealth(s.level_sets()(w), sol.form);
      const bool on_floor = x == p.L;
      saw_floor = saw_floor || on_floor;
      saw_zero = saw_zero || x == 0.0;
      saw_continuous = saw_continuous || x >= knot;
      CHECK((x == 0.0 || x >= knot * (1.0 - 1e-8) ||
             (on_floor && sol.form.tag == FormTag::TwoSegmentBinding)));
    }
    CHECK(saw_continuous);
    CHECK(saw_zero);
    CHECK(saw_floor == (sol.form.tag == FormTag::TwoSegmentBinding));
  }
}

TEST_CASE("epsilon thresholds agree with the solved form") {
  const LagrangeSolver& s = solver();
  for (double eps : {0.05, 0.2, 0.5, 0.9}) {
    CAPTURE(eps);
    const Solution& sol = solution(eps);
    const EpsilonThresholds th = s.epsilon_thresholds(sol.y0);
    CHECK(th.eps_lower <= th.eps_star);
    switch (sol.form.tag) {
      case FormTag::TwoSegmentBinding: CHECK(eps <= th.eps_lower + 1e-8); break;
      case FormTag::OneSegmentBinding:
        CHECK(eps > th.eps_lower - 1e-8);
        CHECK(eps <= th.eps_star + 1e-8);
        break;
      case FormTag::Unconstrained: CHECK(eps >= th.eps_star - 1e-8); break;
      case FormTag::FloorOnly: FAIL("unexpected floor-only form"); break;
    }
  }
  const EpsilonThresholds tiny = s.epsilon_thresholds(1e-8);
  CHECK(tiny.eps_star <= 1e-12);
  CHECK(tiny.eps_lower <= 1e-12);
}

TEST_CASE("dual value function") {
  const LagrangeSolver& s = solver();
  const ModelParams p;
  const double mu0 = derive_params(p).mu_hat0;
  const ConcavifiedUtility& cu = s.utility();

  CHECK(s.dual_value(p.T, 0.7, mu0, 0.4) == doctest::Approx(cu.V_dual(0.7, 0.4)));
  CHECK(s.dual_value(p.T - 1e-10, 0.7, mu0, 0.4) ==
        doctest::Approx(cu.V_dual(0.7, 0.4)).epsilon(1e-4));
  CHECK_THROWS_AS(s.dual_value(0.0, 0.7, p.mu_h + 0.01, 0.4), DomainError);
  CHECK_THROWS_AS(s.dual_value(0.0, -1.0, mu0, 0.4), DomainError);

  // At the optimum the dual is tight: u_c = v(y0) + x0 y0 and dv/dy = -x0.
  const Solution& sol = solution(0.1);
  const double v0 = s.dual_value(0.0, sol.y0, mu0, sol.lambda_star);
  CHECK(v0 + sol.y0 * sol.x0 == doctest::Approx(sol.u_c).epsilon(1e-8));
  const double h = 1e-5;
  const double dv = (s.dual_value(0.0, sol.y0 + h, mu0, sol.lambda_star) -
                     s.dual_value(0.0, sol.y0 - h, mu0, sol.lambda_star)) /
                    (2.0 * h);
  CHECK(dv == doctest::Approx(-sol.x0).epsilon(1e-5));
}

TEST_CASE("dual value collapses when the drift is known and equals the rate") {
  ModelParams p;
  p.mu_l = p.r;
  const LagrangeSolver s(p, UtilitySpec{});
  const double mu = p.mu_l + 1e-12 * (p.mu_h - p.mu_l);
  for (double y : {0.3, 1.0, 2.5}) {
    for (double lambda : {0.0, 2.0}) {
      const double expect = s.utility().V_dual(y * std::exp(-p.r * 0.6), lambda);
      CHECK(s.dual_value(0.4, y, mu, lambda) == doctest::Approx(expect).epsilon(1e-8));
    }
  }
}

TEST_CASE("dual constraint") {
  const LagrangeSolver& s = solver();
  const ModelParams p;
  const double mu0 = derive_params(p).mu_hat0;
  const Solution& sol = solution(0.1);
  CHECK(s.dual_constraint(0.0, sol.y0, mu0, sol.lambda_star) == doctest::Approx(0.9).epsilon(1e-8));

  for (double lambda : {0.0, 0.5, 1.5}) {
    double prev = 1.0;
    for (double y = 0.1; y < 4.0; y += 0.05) {
      const double g = s.dual_constraint(0.0, y, mu0, lambda);
      CHECK(g <= prev + 1e-12);
      CHECK(g >= 0.0);
      CHECK(g <= 1.0 + 1e-12);
      prev = g;
    }
  }

  // Large multipliers push the floor cutoff to k_lambda: P(H < k / (y (1+phi))).
  const double lambda = 50.0;
  const double y = 40.0;
  const double k = s.utility().k_lambda(lambda);
  const double level = k / (y * (1.0 + derive_params(p).phi));
  CHECK(s.dual_constraint(0.0, y, mu0, lambda) == doctest::Approx(s.prob_H_below(level)).epsilon(1e-10));
  CHECK(s.dual_constraint(p.T, 0.5, mu0, 0.0) == 1.0);
}

TEST_CASE("fixed-multiplier dual side agrees with the exact solution") {
  const LagrangeSolver& s = solver();
  const double mu0 = s.derived().mu_hat0;
  for (double eps : {0.1, 0.35, 1.0}) {
    const Solution& sol = solution(eps);
    CAPTURE(eps);
    CHECK(s.dual_budget(sol.y0, sol.lambda_star) == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(s.y_for_lambda(1.0, sol.lambda_star) == doctest::Approx(sol.y0).epsilon(1e-7));
    const WealthStats st = s.dual_stats(sol.y0, sol.lambda_star);
    CHECK(st.u == doctest::Approx(sol.u).epsilon(1e-7));
    CHECK(st.u_c == doctest::Approx(sol.u_c).epsilon(1e-7));
    CHECK(st.p_at_0 == doctest::Approx(sol.p_at_0).epsilon(1e-7));
    CHECK(st.p_at_least_L == doctest::Approx(sol.p_at_least_L).epsilon(1e-7));
  }
  // The budget is minus the y-slope of the dual value.
  for (double lambda : {0.0, 0.8, 2.0}) {
    for (double y : {0.5, 1.2, 2.5}) {
      const double h = 1e-5;
      const double slope = (s.dual_value(0.0, y + h, mu0, lambda) - s.dual_value(0.0, y - h, mu0, lambda)) / (2 * h);
      CHECK(s.dual_budget(y, lambda) == doctest::Approx(-slope).epsilon(1e-6));
      CHECK(s.dual_stats(y, lambda).p_at_least_L ==
            doctest::Approx(s.dual_constraint(0.0, y, mu0, lambda)).epsilon(1e-10));
    }
  }
}
