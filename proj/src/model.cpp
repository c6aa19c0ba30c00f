#include "qvar/model.hpp"

#include <limits>
#include <sstream>

#include "qvar/roots.hpp"

namespace qvar {

namespace {

[[noreturn]] void reject(const std::string& what) { throw InvalidParameter(what); }

// log(1 + exp(s)) without overflow.
double softplus(double s) {
  if (s > 35.0) return s;
  if (s < -35.0) return std::exp(s);
  return std::log1p(std::exp(s));
}

}  // namespace

void ModelParams::validate() const {
  if (!(sigma > 0.0)) reject("sigma must be positive");
  if (!(mu_l < mu_h)) reject("mu_l must be below mu_h");
  if (!(T > 0.0)) reject("T must be positive");
  if (!(p > 0.0 && p < 1.0)) reject("p must lie in (0, 1)");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) reject("epsilon must lie in [0, 1]");
  if (!(L > 0.0 && L < theta)) reject("need 0 < L < theta");
  if (!(x0 > 0.0)) reject("x0 must be positive");
  if (!std::isfinite(r)) reject("r must be finite");
}

DerivedParams derive_params(const ModelParams& params) {
  params.validate();
  return derive_params_at(params, params.p * params.mu_h + (1.0 - params.p) * params.mu_l);
}

DerivedParams derive_params_at(const ModelParams& params, double mu_hat) {
  if (!(mu_hat > params.mu_l && mu_hat < params.mu_h)) {
    throw DomainError("filtered drift must lie strictly between mu_l and mu_h");
  }
  DerivedParams d;
  d.theta_l = (params.mu_l - params.r) / params.sigma;
  d.Theta = (params.mu_h - params.mu_l) / params.sigma;
  d.mu_hat0 = mu_hat;
  d.phi = (mu_hat - params.mu_l) / (params.mu_h - mu_hat);
  return d;
}

double psi(double mu_hat, const ModelParams& params) {
  if (mu_hat < params.mu_l || mu_hat > params.mu_h) return 0.0;
  return (mu_hat - params.mu_l) * (params.mu_h - mu_hat) / params.sigma;
}

double log_h_of_w(double w, double tau, const DerivedParams& d, double r) {
  const double num = -d.theta_l * w - (r + 0.5 * d.theta_l * d.theta_l) * tau;
  if (d.phi <= 0.0) return num;
  const double s = std::log(d.phi) + d.Theta * w - 0.5 * d.Theta * d.Theta * tau;
  return num - softplus(s);
}

double h_of_w(double w, double tau, const DerivedParams& d, double r) {
  return std::exp(log_h_of_w(w, tau, d, r));
}

double f_weight(double w, double tau, const DerivedParams& d) {
  if (d.phi <= 0.0) return 1.0;
  const double s = std::log(d.phi) + d.Theta * w - 0.5 * d.Theta * d.Theta * tau;
  return std::exp(softplus(s) - std::log1p(d.phi));
}

void QuadratureSpec::validate() const {
  if (node_count < 64) reject("quadrature node_count must be >= 64");
  if (!(truncation >= 6.0)) reject("quadrature truncation must be >= 6");
  if (!(split_tolerance > 0.0)) reject("split_tolerance must be positive");
}

GaussLegendreRule make_gauss_legendre(int order) {
  if (order < 1) throw DomainError("Gauss-Legendre order must be positive");
  GaussLegendreRule rule;
  rule.nodes.resize(static_cast<std::size_t>(order));
  rule.weights.resize(static_cast<std::size_t>(order));
  const int half = (order + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (order + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= order; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      if (order == 1) p0 = 1.0;
      dp = order * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[static_cast<std::size_t>(i)] = -x;
    rule.nodes[static_cast<std::size_t>(order - 1 - i)] = x;
    rule.weights[static_cast<std::size_t>(i)] = w;
    rule.weights[static_cast<std::size_t>(order - 1 - i)] = w;
  }
  if (order % 2 == 1) rule.nodes[static_cast<std::size_t>(order / 2)] = 0.0;
  return rule;
}

const GaussLegendreRule& panel_rule() {
  static const GaussLegendreRule rule = make_gauss_legendre(kPanelOrder);
  return rule;
}

HLevelSets::HLevelSets(const DerivedParams& d, double r, double tau, const QuadratureSpec& spec,
                       int scan_intervals)
    : d_(d), r_(r), tau_(tau), tol_(spec.split_tolerance) {
  if (d.theta_l == 0.0 && d.phi <= 0.0) {
    throw DegenerateModel("H is constant: zero market price of risk and no drift uncertainty");
  }
  if (!(tau > 0.0)) throw DomainError("HLevelSets: tau must be positive");
  if (scan_intervals < 1024) scan_intervals = 1024;
  const double half = spec.truncation * std::sqrt(tau);
  grid_.resize(static_cast<std::size_t>(scan_intervals) + 1);
  values_.resize(grid_.size());
  std::size_t best = 0;
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    grid_[i] = -half + 2.0 * half * static_cast<double>(i) / scan_intervals;
    values_[i] = h_of_w(grid_[i], tau_, d_, r_);
    if (values_[i] > values_[best]) best = i;
  }
  // Golden-section refinement of the maximum inside the neighbouring cells.
  double a = grid_[best == 0 ? 0 : best - 1];
  double b = grid_[std::min(best + 1, grid_.size() - 1)];
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a);
  double e = a + g * (b - a);
  double fc = h_of_w(c, tau_, d_, r_);
  double fe = h_of_w(e, tau_, d_, r_);
  for (int it = 0; it < 200 && b - a > 1e-14; ++it) {
    if (fc > fe) {
      b = e;
      e = c;
      fe = fc;
      c = b - g * (b - a);
      fc = h_of_w(c, tau_, d_, r_);
    } else {
      a = c;
      c = e;
      fc = fe;
      e = a + g * (b - a);
      fe = h_of_w(e, tau_, d_, r_);
    }
  }
  argmax_ = 0.5 * (a + b);
  max_h_ = std::max(values_[best], h_of_w(argmax_, tau_, d_, r_));

  // The maximiser joins the scan grid so levels just below the peak are not
  // missed when both crossings fall inside one scan cell.
  const auto pos = std::upper_bound(grid_.begin(), grid_.end(), argmax_);
  const auto idx = pos - grid_.begin();
  grid_.insert(pos, argmax_);
  values_.insert(values_.begin() + idx, max_h_);
}

std::vector<double> HLevelSets::crossings(double level) const {
  std::vector<double> roots;
  if (!(level > 0.0) || level >= max_h_) return roots;
  const double log_level = std::log(level);
  auto f = [&](double w) { return log_h_of_w(w, tau_, d_, r_) - log_level; };
  for (std::size_t i = 0; i + 1 < grid_.size(); ++i) {
    const bool below0 = values_[i] < level;
    const bool below1 = values_[i + 1] < level;
    if (below0 != below1) {
      roots.push_back(bisect(f, grid_[i], grid_[i + 1], tol_));
    }
  }
  return roots;
}

std::vector<double> find_indicator_breakpoints(double h_level, double tau, const DerivedParams& d,
                                               double r, const QuadratureSpec& spec) {
  return HLevelSets(d, r, tau, spec).crossings(h_level);
}

}  // namespace qvar
