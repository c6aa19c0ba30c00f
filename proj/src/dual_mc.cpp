#include "qvar/dual_mc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "qvar/parallel.hpp"

namespace qvar {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct StepCounts {
  std::size_t zeta_floor = 0;
  std::size_t mu_clamp = 0;
};

// One Euler path. next_normal() supplies Z_0 .. Z_{N-1}.
template <typename Normal>
void euler_path(Normal&& next_normal, int N, double h, const ModelParams& p, double mu0,
                double& zeta_out, double& mu_out, StepCounts& counts) {
  const double sqrt_h = std::sqrt(h);
  double zeta = 1.0;
  double mu = mu0;
  for (int n = 0; n < N; ++n) {
    const double z = next_normal();
    const double kappa = (mu - p.r) / p.sigma;
    const double vol = psi(mu, p);
    zeta *= 1.0 - h * p.r - sqrt_h * kappa * z;
    if (!(zeta >= kZetaFloor)) {
      zeta = kZetaFloor;
      ++counts.zeta_floor;
    }
    mu += sqrt_h * vol * z;
    if (mu < p.mu_l || mu > p.mu_h) {
      mu = std::clamp(mu, p.mu_l, p.mu_h);
      ++counts.mu_clamp;
    }
  }
  zeta_out = zeta;
  mu_out = mu;
}

}  // namespace

void SimConfig::validate() const {
  if (M < 1) throw InvalidParameter("M must be at least 1");
  if (N < 1) throw InvalidParameter("N must be at least 1");
  if (!(delta > 0.0)) throw InvalidParameter("delta must be positive");
  if (descent_steps < 0) throw InvalidParameter("descent_steps must be nonnegative");
  if (lambda_grid_size < 2) throw InvalidParameter("lambda grid needs at least 2 points");
  if (!(lambda_max > 0.0)) throw InvalidParameter("lambda_max must be positive");
  if (!(y_init > 0.0)) throw InvalidParameter("y_init must be positive");
}

SamplePool simulate_paths(const SimConfig& cfg, const ModelParams& params) {
  cfg.validate();
  params.validate();
  const double mu0 = derive_params(params).mu_hat0;
  SamplePool pool;
  pool.seed = cfg.seed;
  pool.N = cfg.N;
  pool.h = params.T / cfg.N;
  pool.zeta_terminal.resize(cfg.M);
  pool.mu_terminal.resize(cfg.M);

  const std::size_t blocks = (cfg.M + kSampleBlock - 1) / kSampleBlock;
  std::vector<StepCounts> counts(blocks);
  parallel_for(blocks, [&](std::size_t b) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed),
                      static_cast<std::uint32_t>(cfg.seed >> 32), static_cast<std::uint32_t>(b)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal;
    const std::size_t end = std::min(cfg.M, (b + 1) * kSampleBlock);
    for (std::size_t i = b * kSampleBlock; i < end; ++i) {
      euler_path([&] { return normal(rng); }, cfg.N, pool.h, params, mu0, pool.zeta_terminal[i],
                 pool.mu_terminal[i], counts[b]);
    }
  });
  for (const StepCounts& c : counts) {
    pool.zeta_floor_hits += c.zeta_floor;
    pool.mu_clamp_hits += c.mu_clamp;
  }
  return pool;
}

SamplePool simulate_paths_from(const std::vector<std::vector<double>>& normals, double T,
                               const ModelParams& params) {
  if (normals.empty() || normals.front().empty()) {
    throw InvalidParameter("need at least one path with one step");
  }
  const int N = static_cast<int>(normals.front().size());
  const double mu0 = derive_params(params).mu_hat0;
  SamplePool pool;
  pool.N = N;
  pool.h = T / N;
  StepCounts counts;
  for (const auto& path : normals) {
    if (static_cast<int>(path.size()) != N) throw InvalidParameter("ragged normal matrix");
    std::size_t k = 0;
    double zeta = 0.0;
    double mu = 0.0;
    euler_path([&] { return path[k++]; }, N, pool.h, params, mu0, zeta, mu, counts);
    pool.zeta_terminal.push_back(zeta);
    pool.mu_terminal.push_back(mu);
  }
  pool.zeta_floor_hits = counts.zeta_floor;
  pool.mu_clamp_hits = counts.mu_clamp;
  return pool;
}

McEstimate mc_dual_value(double y, double lambda, const SamplePool& pool,
                         const ConcavifiedUtility& utility) {
  if (!(y > 0.0)) throw DomainError("mc_dual_value requires y > 0");
  const EnvelopeCase c = utility.envelope_case(lambda);
  const std::size_t M = pool.size();
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double zeta : pool.zeta_terminal) {
    const double v = utility.V_dual(y * zeta, c);
    sum += v;
    sum_sq += v * v;
  }
  McEstimate e;
  e.mean = sum / M;
  const double var = M > 1 ? std::max(0.0, (sum_sq - M * e.mean * e.mean) / (M - 1)) : 0.0;
  e.std_error = std::sqrt(var / M);
  return e;
}

double dual_gradient(double y, const EnvelopeCase& c, double x0, const SamplePool& pool,
                     const ConcavifiedUtility& utility) {
  double sum = 0.0;
  for (double zeta : pool.zeta_terminal) sum += zeta * utility.x_star(y * zeta, c);
  return x0 - sum / pool.size();
}

DescentResult optimize_y(double lambda, double x0, const SamplePool& pool, const SimConfig& cfg,
                         const ConcavifiedUtility& utility) {
  if (!(x0 > 0.0)) throw DomainError("x0 must be positive");
  const EnvelopeCase c = utility.envelope_case(lambda);
  double y = cfg.y_init;
  for (int k = 0; k < cfg.descent_steps; ++k) {
    y -= cfg.delta * dual_gradient(y, c, x0, pool, utility);
    if (!(y > 1e-6 && y < 1e6)) {
      throw NumericalFailure("dual descent diverged (y = " + std::to_string(y) +
                             "); reduce delta");
    }
  }
  return {y, std::abs(dual_gradient(y, c, x0, pool, utility))};
}

PrimalEstimates primal_estimates(double lambda, double y_star, const SamplePool& pool,
                                 const ConcavifiedUtility& utility) {
  if (!(y_star > 0.0)) throw DomainError("y_star must be positive");
  const EnvelopeCase c = utility.envelope_case(lambda);
  const double L = utility.spec().L;
  const std::size_t M = pool.size();
  double uc = 0.0;
  double uc_sq = 0.0;
  double u = 0.0;
  std::size_t above = 0;
  std::size_t at_L = 0;
  std::size_t at_0 = 0;
  for (double zeta : pool.zeta_terminal) {
    const double x = utility.x_star(y_star * zeta, c);
    const double e = utility.envelope(x, c);
    uc += e;
    uc_sq += e * e;
    u += utility.U(x);
    above += x >= L ? 1 : 0;
    at_L += x == L ? 1 : 0;
    at_0 += x == 0.0 ? 1 : 0;
  }
  PrimalEstimates est;
  est.u_c = uc / M;
  const double var = M > 1 ? std::max(0.0, (uc_sq - M * est.u_c * est.u_c) / (M - 1)) : 0.0;
  est.u_c_se = std::sqrt(var / M);
  est.u = u / M;
  est.h = static_cast<double>(above) / M;
  est.p_at_L = static_cast<double>(at_L) / M;
  est.p_at_0 = static_cast<double>(at_0) / M;
  return est;
}

LambdaGrid lambda_grid(double x0, const SamplePool& pool, const SimConfig& cfg,
                       const ConcavifiedUtility& utility) {
  cfg.validate();
  const int J = cfg.lambda_grid_size;
  LambdaGrid grid;
  grid.x0 = x0;
  grid.points.resize(J);
  parallel_for(J, [&](std::size_t j) {
    SweepPoint& pt = grid.points[j];
    pt.lambda = cfg.lambda_max * static_cast<double>(j) / (J - 1);
    const DescentResult d = optimize_y(pt.lambda, x0, pool, cfg, utility);
    pt.y_star = d.y_star;
    pt.residual = d.residual;
    pt.est = primal_estimates(pt.lambda, pt.y_star, pool, utility);
  });
  for (int j = 1; j < J; ++j) {
    if (grid.points[j].est.h < grid.points[j - 1].est.h) grid.h_monotone = false;
  }
  return grid;
}

McSolution invert_grid(const LambdaGrid& grid, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw DomainError("epsilon must lie in [0, 1]");
  if (grid.points.empty()) throw InvalidParameter("empty lambda grid");
  McSolution s;
  s.epsilon = epsilon;
  s.x0 = grid.x0;
  const double target = 1.0 - epsilon;
  auto take = [&](const SweepPoint& a, const SweepPoint& b, double w) {
    auto mix = [w](double lo, double hi) { return lo + w * (hi - lo); };
    s.lambda_star = mix(a.lambda, b.lambda);
    s.y_star = mix(a.y_star, b.y_star);
    s.u_c = mix(a.est.u_c, b.est.u_c);
    s.u_c_se = mix(a.est.u_c_se, b.est.u_c_se);
    s.u = mix(a.est.u, b.est.u);
    s.h = mix(a.est.h, b.est.h);
    s.p_at_L = mix(a.est.p_at_L, b.est.p_at_L);
    s.p_at_0 = mix(a.est.p_at_0, b.est.p_at_0);
  };
  const auto& pts = grid.points;
  if (pts.front().est.h >= target) {
    take(pts.front(), pts.front(), 0.0);
    return s;
  }
  for (std::size_t j = 1; j < pts.size(); ++j) {
    if (pts[j].est.h >= target) {
      const double lo = pts[j - 1].est.h;
      const double hi = pts[j].est.h;
      take(pts[j - 1], pts[j], (target - lo) / (hi - lo));
      return s;
    }
  }
  s.feasible = false;
  s.lambda_star = s.y_star = s.u_c = s.u_c_se = s.u = s.h = s.p_at_L = s.p_at_0 = kNaN;
  return s;
}

McSolution lambda_sweep(double x0, double epsilon, const SamplePool& pool, const SimConfig& cfg,
                        const ConcavifiedUtility& utility) {
  return invert_grid(lambda_grid(x0, pool, cfg, utility), epsilon);
}

}  // namespace qvar
