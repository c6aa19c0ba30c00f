#include "qvar/pinn.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "qvar/roots.hpp"

namespace qvar {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Input index of each first-order channel and the input pair of each
// second-order channel.
constexpr int kFirst[3] = {kDt, kDy, kDmu};
struct Pair {
  int channel;
  int a;  // index into z1k (0 = t, 1 = y, 2 = mu)
  int b;
};
constexpr Pair kSecond[3] = {{kDyy, 1, 1}, {kDmumu, 2, 2}, {kDymu, 1, 2}};

// sigma, sigma', sigma'', sigma''' evaluated at Z.
void activate(Activation act, const MatrixXd& Z, MatrixXd& H, MatrixXd& S, MatrixXd& Q,
              MatrixXd& R) {
  if (act == Activation::Identity) {
    H = Z;
    S = MatrixXd::Ones(Z.rows(), Z.cols());
    Q = MatrixXd::Zero(Z.rows(), Z.cols());
    R = MatrixXd::Zero(Z.rows(), Z.cols());
    return;
  }
  // tanh through the vectorized exp; Eigen's double tanh is scalar and ~10x slower
  H = (1.0 - 2.0 / ((2.0 * Z.array()).exp() + 1.0)).matrix();
  S = (1.0 - H.array().square()).matrix();
  Q = (-2.0 * H.array() * S.array()).matrix();
  R = (-2.0 * S.array().square() + 4.0 * H.array().square() * S.array()).matrix();
}

struct Views {
  Eigen::Map<const MatrixXd> W1, W2;
  Eigen::Map<const VectorXd> b1, b2, w3;
  double b3;
};

Views views(const VectorXd& theta, int n) {
  const double* p = theta.data();
  return {Eigen::Map<const MatrixXd>(p, n, 4),
          Eigen::Map<const MatrixXd>(p + 5 * n, n, n),
          Eigen::Map<const VectorXd>(p + 4 * n, n),
          Eigen::Map<const VectorXd>(p + 5 * n + n * n, n),
          Eigen::Map<const VectorXd>(p + 6 * n + n * n, n),
          p[7 * n + n * n]};
}

struct GradViews {
  Eigen::Map<MatrixXd> W1, W2;
  Eigen::Map<VectorXd> b1, b2, w3;
  double& b3;
};

GradViews grad_views(VectorXd& g, int n) {
  double* p = g.data();
  return {Eigen::Map<MatrixXd>(p, n, 4),
          Eigen::Map<MatrixXd>(p + 5 * n, n, n),
          Eigen::Map<VectorXd>(p + 4 * n, n),
          Eigen::Map<VectorXd>(p + 5 * n + n * n, n),
          Eigen::Map<VectorXd>(p + 6 * n + n * n, n),
          p[7 * n + n * n]};
}

// FNV-1a over the serialized config, stable across platforms.
std::string config_hash(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

nlohmann::json config_json(const PinnConfig& c) {
  return {{"nodes", c.nodes},
          {"collocation", c.collocation},
          {"boundary", c.boundary},
          {"delta", c.delta},
          {"max_steps", c.max_steps},
          {"loss_tol", c.loss_tol},
          {"y", {c.y.lo, c.y.hi}},
          {"mu", {c.mu.lo, c.mu.hi}},
          {"lambda", {c.lambda.lo, c.lambda.hi}},
          {"seed", c.seed},
          {"resample", c.resample},
          {"log_every", c.log_every}};
}

PinnConfig config_from_json(const nlohmann::json& j) {
  PinnConfig c;
  c.nodes = j.at("nodes");
  c.collocation = j.at("collocation");
  c.boundary = j.at("boundary");
  c.delta = j.at("delta");
  c.max_steps = j.at("max_steps");
  c.loss_tol = j.at("loss_tol");
  c.y = {j.at("y")[0], j.at("y")[1]};
  c.mu = {j.at("mu")[0], j.at("mu")[1]};
  c.lambda = {j.at("lambda")[0], j.at("lambda")[1]};
  c.seed = j.at("seed");
  c.resample = j.at("resample");
  c.log_every = j.at("log_every");
  return c;
}

nlohmann::json params_json(const ModelParams& p) {
  return {{"r", p.r},         {"sigma", p.sigma}, {"mu_l", p.mu_l}, {"mu_h", p.mu_h},
          {"p", p.p},         {"T", p.T},         {"x0", p.x0},     {"theta", p.theta},
          {"L", p.L},         {"epsilon", p.epsilon}};
}

ModelParams params_from_json(const nlohmann::json& j) {
  ModelParams p;
  p.r = j.at("r");
  p.sigma = j.at("sigma");
  p.mu_l = j.at("mu_l");
  p.mu_h = j.at("mu_h");
  p.p = j.at("p");
  p.T = j.at("T");
  p.x0 = j.at("x0");
  p.theta = j.at("theta");
  p.L = j.at("L");
  p.epsilon = j.at("epsilon");
  return p;
}

}  // namespace

void PinnConfig::validate() const {
  if (nodes < 1) throw InvalidParameter("nodes must be positive");
  if (collocation < 1 || boundary < 1) throw InvalidParameter("point counts must be positive");
  if (!(delta > 0.0)) throw InvalidParameter("delta must be positive");
  if (max_steps < 0) throw InvalidParameter("max_steps must be nonnegative");
  if (!(loss_tol > 0.0)) throw InvalidParameter("loss_tol must be positive");
  for (const Interval& d : {y, mu, lambda}) {
    if (!(d.hi > d.lo)) throw InvalidParameter("PINN domains must be nonempty");
  }
  if (!(y.lo > 0.0)) throw InvalidParameter("y domain must be positive");
  if (log_every < 1) throw InvalidParameter("log_every must be positive");
}

PinnNetwork::PinnNetwork(int nodes, double T, const PinnConfig& cfg, Activation act)
    : n_(nodes), act_(act), domains_{Interval{0.0, T}, cfg.y, cfg.mu, cfg.lambda} {
  if (nodes < 1) throw InvalidParameter("nodes must be positive");
  if (!(T > 0.0)) throw InvalidParameter("T must be positive");
  for (int k = 0; k < 4; ++k) {
    const Interval& d = domains_[k];
    if (!(d.hi > d.lo)) throw InvalidParameter("PINN domains must be nonempty");
    scale_[k] = 2.0 / (d.hi - d.lo);
    shift_[k] = -(d.hi + d.lo) / (d.hi - d.lo);
  }
  theta_ = VectorXd::Zero(parameter_count(nodes));
}

void PinnNetwork::init_glorot(std::mt19937_64& rng) {
  const int n = n_;
  auto fill = [&](Index offset, Index count, int fan_in, int fan_out) {
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-a, a);
    for (Index i = 0; i < count; ++i) theta_[offset + i] = u(rng);
  };
  theta_.setZero();
  fill(0, 4 * n, 4, n);
  fill(5 * n, n * n, n, n);
  fill(6 * n + n * n, n, n, 1);
}

Eigen::MatrixXd PinnNetwork::forward(const Eigen::Matrix<double, 4, Eigen::Dynamic>& x,
                                     bool with_derivatives, Tape& tape) const {
  const Views w = views(theta_, n_);
  const Index P = x.cols();
  const Index C = with_derivatives ? kChannels : 1;
  tape.derivs = with_derivatives;
  tape.P = P;
  tape.U = (scale_.asDiagonal() * x).colwise() + shift_;

  tape.Z1.noalias() = w.W1 * tape.U;
  tape.Z1.colwise() += w.b1;
  activate(act_, tape.Z1, tape.H1, tape.S1, tape.Q1, tape.R1);

  tape.H1c.resize(n_, C * P);
  tape.H1c.leftCols(P) = tape.H1;
  if (with_derivatives) {
    for (int k = 0; k < 3; ++k) {
      tape.z1k[k] = scale_[k] * w.W1.col(k);
      tape.H1c.middleCols(kFirst[k] * P, P) =
          (tape.S1.array().colwise() * tape.z1k[k].array()).matrix();
    }
    for (const Pair& s : kSecond) {
      const VectorXd zz = tape.z1k[s.a].cwiseProduct(tape.z1k[s.b]);
      tape.H1c.middleCols(s.channel * P, P) = (tape.Q1.array().colwise() * zz.array()).matrix();
    }
  }

  tape.Z2c.noalias() = w.W2 * tape.H1c;
  tape.Z2c.leftCols(P).colwise() += w.b2;
  activate(act_, tape.Z2c.leftCols(P), tape.H2, tape.S2, tape.Q2, tape.R2);

  tape.H2c.resize(n_, C * P);
  tape.H2c.leftCols(P) = tape.H2;
  if (with_derivatives) {
    for (int ch : kFirst) {
      tape.H2c.middleCols(ch * P, P) =
          tape.S2.cwiseProduct(tape.Z2c.middleCols(ch * P, P));
    }
    for (const Pair& s : kSecond) {
      const int ca = kFirst[s.a];
      const int cb = kFirst[s.b];
      tape.H2c.middleCols(s.channel * P, P) =
          (tape.S2.array() * tape.Z2c.middleCols(s.channel * P, P).array() +
           tape.Q2.array() * tape.Z2c.middleCols(ca * P, P).array() *
               tape.Z2c.middleCols(cb * P, P).array())
              .matrix();
    }
  }

  const Eigen::RowVectorXd flat = w.w3.transpose() * tape.H2c;
  MatrixXd out(C, P);
  for (Index c = 0; c < C; ++c) out.row(c) = flat.segment(c * P, P);
  out.row(kValue).array() += w.b3;
  return out;
}

void PinnNetwork::backward(Tape& tape, const Eigen::MatrixXd& upstream,
                           Eigen::VectorXd& grad) const {
  const Views w = views(theta_, n_);
  if (grad.size() != theta_.size()) grad = VectorXd::Zero(theta_.size());
  GradViews g = grad_views(grad, n_);
  const Index P = tape.P;
  const Index C = tape.derivs ? kChannels : 1;
  if (upstream.rows() != C || upstream.cols() != P) {
    throw InvalidParameter("upstream gradient shape does not match the forward pass");
  }

  Eigen::RowVectorXd flat(C * P);
  for (Index c = 0; c < C; ++c) flat.segment(c * P, P) = upstream.row(c);

  g.w3 += tape.H2c * flat.transpose();
  g.b3 += upstream.row(kValue).sum();

  // Adjoint of the layer-2 activation channels.
  MatrixXd& A = tape.A;
  A.noalias() = w.w3 * flat;
  auto Ablk = [&](int ch) { return A.middleCols(ch * P, P).array(); };
  auto Z2 = [&](int ch) { return tape.Z2c.middleCols(ch * P, P).array(); };
  const auto S2 = tape.S2.array();
  const auto Q2 = tape.Q2.array();
  const auto R2 = tape.R2.array();

  MatrixXd& AZ2c = tape.AZ2c;
  AZ2c.resize(n_, C * P);
  AZ2c.leftCols(P) = (Ablk(kValue) * S2).matrix();
  if (tape.derivs) {
    for (int ch : kFirst) {
      AZ2c.middleCols(ch * P, P) = (Ablk(ch) * S2).matrix();
      AZ2c.leftCols(P).array() += Ablk(ch) * Z2(ch) * Q2;
    }
    for (const Pair& s : kSecond) {
      const int ca = kFirst[s.a];
      const int cb = kFirst[s.b];
      AZ2c.middleCols(s.channel * P, P) = (Ablk(s.channel) * S2).matrix();
      AZ2c.leftCols(P).array() +=
          Ablk(s.channel) * (Z2(s.channel) * Q2 + Z2(ca) * Z2(cb) * R2);
      AZ2c.middleCols(ca * P, P).array() += Ablk(s.channel) * Q2 * Z2(cb);
      AZ2c.middleCols(cb * P, P).array() += Ablk(s.channel) * Q2 * Z2(ca);
    }
  }

  g.W2.noalias() += AZ2c * tape.H1c.transpose();
  g.b2 += AZ2c.leftCols(P).rowwise().sum();
  MatrixXd& A1 = tape.A1;
  A1.noalias() = w.W2.transpose() * AZ2c;
  auto A1blk = [&](int ch) { return A1.middleCols(ch * P, P).array(); };
  const auto S1 = tape.S1.array();
  const auto Q1 = tape.Q1.array();
  const auto R1 = tape.R1.array();

  MatrixXd& AZ1 = tape.AZ1;
  AZ1 = (A1blk(kValue) * S1).matrix();
  if (tape.derivs) {
    std::array<VectorXd, 3> Az1k;
    for (int k = 0; k < 3; ++k) {
      const int ch = kFirst[k];
      AZ1.array() += (A1blk(ch) * Q1).colwise() * tape.z1k[k].array();
      Az1k[k] = (A1blk(ch) * S1).rowwise().sum().matrix();
    }
    for (const Pair& s : kSecond) {
      const VectorXd zz = tape.z1k[s.a].cwiseProduct(tape.z1k[s.b]);
      AZ1.array() += (A1blk(s.channel) * R1).colwise() * zz.array();
      const VectorXd q = (A1blk(s.channel) * Q1).rowwise().sum().matrix();
      Az1k[s.a] += q.cwiseProduct(tape.z1k[s.b]);
      Az1k[s.b] += q.cwiseProduct(tape.z1k[s.a]);
    }
    for (int k = 0; k < 3; ++k) g.W1.col(k) += scale_[k] * Az1k[k];
  }
  g.W1.noalias() += AZ1 * tape.U.transpose();
  g.b1 += AZ1.rowwise().sum();
}

double PinnNetwork::value(const NetInput& x) const {
  Eigen::Matrix<double, 4, 1> col(x.t, x.y, x.mu, x.lambda);
  Tape tape;
  return forward(col, false, tape)(0, 0);
}

NetDerivatives PinnNetwork::eval(const NetInput& x) const {
  Eigen::Matrix<double, 4, 1> col(x.t, x.y, x.mu, x.lambda);
  Tape tape;
  const MatrixXd out = forward(col, true, tape);
  return {out(kValue, 0), out(kDt, 0),    out(kDy, 0),   out(kDmu, 0),
          out(kDyy, 0),   out(kDmumu, 0), out(kDymu, 0)};
}

std::array<double, kChannels> residual_coefficients(const NetInput& x, const ModelParams& p) {
  const double kappa = (x.mu - p.r) / p.sigma;
  const double ps = psi(x.mu, p);
  std::array<double, kChannels> c{};
  c[kDt] = 1.0;
  c[kDy] = -p.r * x.y;
  c[kDyy] = 0.5 * x.y * x.y * kappa * kappa;
  c[kDmumu] = 0.5 * ps * ps;
  c[kDymu] = -x.y * kappa * ps;
  return c;
}

double pde_residual(const NetInput& x, const NetDerivatives& d, const ModelParams& params) {
  const auto c = residual_coefficients(x, params);
  return c[kDt] * d.v_t + c[kDy] * d.v_y + c[kDyy] * d.v_yy + c[kDmumu] * d.v_mumu +
         c[kDymu] * d.v_ymu;
}

double pde_residual(const NetInput& x, const PinnNetwork& net, const ModelParams& params) {
  return pde_residual(x, net.eval(x), params);
}

PointSets sample_points(const PinnConfig& cfg, const ModelParams& params,
                        const ConcavifiedUtility& utility, std::mt19937_64& rng) {
  auto draw = [&](const Interval& d) {
    return std::uniform_real_distribution<double>(d.lo, d.hi)(rng);
  };
  PointSets s;
  s.collocation.resize(4, cfg.collocation);
  s.coefficients.resize(kChannels, cfg.collocation);
  for (int i = 0; i < cfg.collocation; ++i) {
    const NetInput x{draw({0.0, params.T}), draw(cfg.y), draw(cfg.mu), draw(cfg.lambda)};
    s.collocation.col(i) << x.t, x.y, x.mu, x.lambda;
    const auto c = residual_coefficients(x, params);
    for (int ch = 0; ch < kChannels; ++ch) s.coefficients(ch, i) = c[ch];
  }
  s.boundary.resize(4, cfg.boundary);
  s.targets.resize(cfg.boundary);
  for (int j = 0; j < cfg.boundary; ++j) {
    const double y = draw(cfg.y);
    const double mu = draw(cfg.mu);
    const double lambda = draw(cfg.lambda);
    s.boundary.col(j) << params.T, y, mu, lambda;
    s.targets[j] = utility.V_dual(y, lambda);
  }
  return s;
}

LossTerms loss(const PinnNetwork& net, const PointSets& pts, Eigen::VectorXd* grad,
               LossWorkspace* ws) {
  LossWorkspace local;
  LossWorkspace& work = ws ? *ws : local;
  LossTerms out;
  const Index Kc = pts.collocation.cols();
  const Index Kb = pts.boundary.cols();
  if (grad) *grad = VectorXd::Zero(net.parameters().size());

  if (Kc > 0) {
    PinnNetwork::Tape& tape = work.collocation;
    const MatrixXd ch = net.forward(pts.collocation, true, tape);
    const Eigen::RowVectorXd res = (ch.array() * pts.coefficients.array()).colwise().sum();
    out.residual = res.squaredNorm() / Kc;
    if (grad) {
      const MatrixXd up = (pts.coefficients.array().rowwise() * (2.0 / Kc * res).array()).matrix();
      net.backward(tape, up, *grad);
    }
  }
  if (Kb > 0) {
    PinnNetwork::Tape& tape = work.boundary;
    const MatrixXd v = net.forward(pts.boundary, false, tape);
    const Eigen::RowVectorXd err = v.row(0) - pts.targets.transpose();
    out.boundary = err.squaredNorm() / Kb;
    if (grad) net.backward(tape, (2.0 / Kb) * err, *grad);
  }
  out.total = out.residual + out.boundary;
  return out;
}

PinnModel train(const PinnConfig& cfg, const ModelParams& params, const UtilitySpec& utility_spec,
                const std::function<void(const TrainRecord&)>& on_log,
                const std::filesystem::path& snapshot_path) {
  cfg.validate();
  params.validate();
  const ConcavifiedUtility utility(utility_spec);
  PinnModel model{PinnNetwork(cfg.nodes, params.T, cfg), cfg, params, {}, 0, false};
  std::mt19937_64 init_rng(cfg.seed);
  model.net.init_glorot(init_rng);
  std::seed_seq point_seq{static_cast<std::uint32_t>(cfg.seed),
                          static_cast<std::uint32_t>(cfg.seed >> 32), 1u};
  std::mt19937_64 point_rng(point_seq);
  PointSets pts = sample_points(cfg, params, utility, point_rng);

  VectorXd& theta = model.net.parameters();
  VectorXd m = VectorXd::Zero(theta.size());
  VectorXd v = VectorXd::Zero(theta.size());
  VectorXd grad;
  LossWorkspace work;
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;
  double b1t = 1.0;
  double b2t = 1.0;

  auto log = [&](int step, const LossTerms& l) {
    model.history.push_back({step, l});
    if (on_log) on_log(model.history.back());
  };

  for (int step = 0;; ++step) {
    if (cfg.resample && step > 0) pts = sample_points(cfg, params, utility, point_rng);
    const LossTerms l = loss(model.net, pts, &grad, &work);
    if (!std::isfinite(l.total) || !grad.allFinite()) {
      if (!snapshot_path.empty()) {
        model.steps = step;
        save_checkpoint(model, snapshot_path);
      }
      throw NumericalFailure("PINN loss became non-finite at step " + std::to_string(step) +
                             (snapshot_path.empty() ? std::string()
                                                    : "; snapshot at " + snapshot_path.string()));
    }
    const bool done = l.total <= cfg.loss_tol || step >= cfg.max_steps;
    if (step % cfg.log_every == 0 || done) log(step, l);
    if (done) {
      model.steps = step;
      model.converged = l.total <= cfg.loss_tol;
      break;
    }
    b1t *= beta1;
    b2t *= beta2;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    theta.array() -= cfg.delta * (m.array() / (1.0 - b1t)) /
                     ((v.array() / (1.0 - b2t)).sqrt() + eps);
  }
  return model;
}

void save_checkpoint(const PinnModel& model, const std::filesystem::path& path) {
  const nlohmann::json cfg = config_json(model.config);
  nlohmann::json j;
  j["format"] = "qvar-pinn";
  j["version"] = 1;
  j["config"] = cfg;
  j["config_hash"] = config_hash(cfg.dump());
  j["params"] = params_json(model.params);
  j["activation"] = model.net.activation() == Activation::Tanh ? "tanh" : "identity";
  j["layers"] = {{4, model.net.nodes()}, {model.net.nodes(), model.net.nodes()},
                 {model.net.nodes(), 1}};
  nlohmann::json doms = nlohmann::json::array();
  for (const Interval& d : model.net.domains()) doms.push_back({d.lo, d.hi});
  j["input_domains"] = doms;
  j["steps"] = model.steps;
  j["converged"] = model.converged;
  const VectorXd& th = model.net.parameters();
  j["parameters"] = std::vector<double>(th.data(), th.data() + th.size());
  nlohmann::json hist = nlohmann::json::array();
  for (const TrainRecord& r : model.history) {
    hist.push_back({r.step, r.loss.total, r.loss.residual, r.loss.boundary});
  }
  j["history"] = hist;
  std::ofstream out(path);
  if (!out) throw InvalidParameter("cannot write checkpoint " + path.string());
  out << std::setprecision(17) << j.dump(1) << '\n';
}

PinnModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidParameter("cannot read checkpoint " + path.string());
  const nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("format", "") != "qvar-pinn" || j.value("version", 0) != 1) {
    throw InvalidParameter("unrecognized checkpoint format in " + path.string());
  }
  const PinnConfig cfg = config_from_json(j.at("config"));
  if (j.at("config_hash") != config_hash(j.at("config").dump())) {
    throw InvalidParameter("checkpoint config hash mismatch");
  }
  const ModelParams params = params_from_json(j.at("params"));
  const Activation act = j.at("activation") == "tanh" ? Activation::Tanh : Activation::Identity;
  PinnModel model{PinnNetwork(cfg.nodes, params.T, cfg, act), cfg, params, {}, 0, false};
  const std::vector<double> th = j.at("parameters");
  if (static_cast<Index>(th.size()) != model.net.parameters().size()) {
    throw InvalidParameter("checkpoint parameter count does not match its layer shapes");
  }
  model.net.parameters() = Eigen::Map<const VectorXd>(th.data(), th.size());
  model.steps = j.at("steps");
  model.converged = j.at("converged");
  for (const auto& r : j.at("history")) {
    model.history.push_back({r[0].get<int>(), {r[1], r[2], r[3]}});
  }
  return model;
}

void write_training_log(const PinnModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidParameter("cannot write training log " + path.string());
  out << "step,loss,residual_term,boundary_term\n";
  char buf[160];
  for (const TrainRecord& r : model.history) {
    std::snprintf(buf, sizeof buf, "%d,%.6g,%.6g,%.6g\n", r.step, r.loss.total, r.loss.residual,
                  r.loss.boundary);
    out << buf;
  }
}

YStar solve_y_star(double lambda, double x0, const PinnModel& model) {
  const Interval dom = model.config.y;
  const double mu0 = derive_params(model.params).mu_hat0;
  auto f = [&](double y) { return model.net.eval({0.0, y, mu0, lambda}).v_y + x0; };
  constexpr int kScan = 200;
  YStar out;
  double prev_y = dom.lo;
  double prev_f = f(prev_y);
  bool found = false;
  for (int i = 1; i <= kScan; ++i) {
    const double y = dom.lo + (dom.hi - dom.lo) * i / kScan;
    const double fy = f(y);
    if ((prev_f < 0.0) != (fy < 0.0)) {
      if (!found) {
        out.y = bisect(f, prev_y, y, 1e-12 * (dom.hi - dom.lo));
        found = true;
      } else {
        out.multiple_roots = true;
      }
    }
    prev_y = y;
    prev_f = fy;
  }
  if (!found) {
    // d_y v + x0 > 0 everywhere: the optimum lies below the domain, and vice versa.
    out.on_boundary = true;
    out.y = f(dom.lo) > 0.0 ? dom.lo : dom.hi;
  }
  return out;
}

PinnSolution coupled_solve(double x0, double epsilon, const PinnModel& model,
                           const SamplePool& pool, const ConcavifiedUtility& utility,
                           int grid_size) {
  if (grid_size < 2) throw InvalidParameter("lambda grid needs at least 2 points");
  const Interval dom = model.config.lambda;
  const double mu0 = derive_params(model.params).mu_hat0;
  PinnSolution out;
  out.grid.x0 = x0;
  out.grid.points.resize(grid_size);
  for (int j = 0; j < grid_size; ++j) {
    SweepPoint& pt = out.grid.points[j];
    pt.lambda = dom.lo + (dom.hi - dom.lo) * j / (grid_size - 1);
    const YStar ys = solve_y_star(pt.lambda, x0, model);
    out.y_boundary_hit = out.y_boundary_hit || ys.on_boundary;
    pt.y_star = ys.y;
    pt.residual = std::abs(model.net.eval({0.0, ys.y, mu0, pt.lambda}).v_y + x0);
    pt.est = primal_estimates(pt.lambda, pt.y_star, pool, utility);
    pt.est.u_c = model.net.value({0.0, ys.y, mu0, pt.lambda}) + x0 * ys.y;
    pt.est.u_c_se = 0.0;
    if (j > 0 && pt.est.h < out.grid.points[j - 1].est.h) out.grid.h_monotone = false;
  }
  out.sol = invert_grid(out.grid, epsilon);
  out.lambda_at_top = !out.sol.feasible || out.sol.lambda_star >= dom.hi;
  return out;
}

}  // namespace qvar
