#pragma once

// Dual PINN solver: a two-hidden-layer tanh network v(t, y, mu_hat, lambda)
// trained on the dual HJB residual plus the terminal condition V^c_lambda,
// followed by the coupled search for (y*, lambda*).
//
// Input derivatives are propagated forward in closed form for the fixed
// architecture; parameter gradients run the exact reverse pass through all of
// them, so the loss gradient is exact up to rounding.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qvar/dual_mc.hpp"
#include "qvar/model.hpp"
#include "qvar/utility.hpp"

namespace qvar {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

struct PinnConfig {
  int nodes = 50;          // desk profile; the full profile uses 100
  int collocation = 2000;  // K_c
  int boundary = 200;      // K_b
  double delta = 0.01;     // Adam step size
  int max_steps = 20000;   // desk profile; the full profile uses 100000
  double loss_tol = 5e-5;
  Interval y{0.2, 2.0};
  Interval mu{0.03, 0.1};
  Interval lambda{0.0, 2.5};
  std::uint64_t seed = 7;
  bool resample = false;  // redraw point sets every step
  int log_every = 100;

  void validate() const;
};

enum class Activation { Tanh, Identity };

struct NetInput {
  double t = 0.0;
  double y = 0.0;
  double mu = 0.0;
  double lambda = 0.0;
};

struct NetDerivatives {
  double v = 0.0;
  double v_t = 0.0;
  double v_y = 0.0;
  double v_mu = 0.0;
  double v_yy = 0.0;
  double v_mumu = 0.0;
  double v_ymu = 0.0;
};

/// Output channels of a batched evaluation, one row each.
enum Channel : int { kValue = 0, kDt, kDy, kDmu, kDyy, kDmumu, kDymu, kChannels };

class PinnNetwork {
 public:
  /// Inputs are affinely mapped from their domains onto [-1, 1].
  PinnNetwork(int nodes, double T, const PinnConfig& domains, Activation act = Activation::Tanh);

  int nodes() const { return n_; }
  Activation activation() const { return act_; }
  const std::array<Interval, 4>& domains() const { return domains_; }

  /// Flat parameters: A1 (n x 4, column-major), b1, A2 (n x n), b2, A3, b3.
  Eigen::VectorXd& parameters() { return theta_; }
  const Eigen::VectorXd& parameters() const { return theta_; }
  static Eigen::Index parameter_count(int nodes) { return 7 * nodes + nodes * nodes + 1; }

  /// Uniform in +-sqrt(6 / (fan_in + fan_out)) per layer, zero biases.
  void init_glorot(std::mt19937_64& rng);

  double value(const NetInput& x) const;
  NetDerivatives eval(const NetInput& x) const;

  /// Batched forward pass over the columns of x (4 x P). Returns kChannels x P
  /// when with_derivatives, else 1 x P. The tape is kept for backward().
  struct Tape;
  Eigen::MatrixXd forward(const Eigen::Matrix<double, 4, Eigen::Dynamic>& x,
                          bool with_derivatives, Tape& tape) const;

  /// Accumulates dLoss/dtheta into grad given dLoss/d(output) (same shape as
  /// the forward result). Reuses the tape's scratch buffers.
  void backward(Tape& tape, const Eigen::MatrixXd& upstream, Eigen::VectorXd& grad) const;

  struct Tape {
    bool derivs = false;
    Eigen::Index P = 0;
    Eigen::MatrixXd U;             // normalized inputs
    Eigen::MatrixXd Z1, H1;
    Eigen::MatrixXd S1, Q1, R1;    // activation derivatives, layer 1
    Eigen::MatrixXd H1c;           // stacked layer-1 channels
    Eigen::MatrixXd Z2c;           // stacked layer-2 pre-activation channels
    Eigen::MatrixXd H2, S2, Q2, R2;
    Eigen::MatrixXd H2c;
    std::array<Eigen::VectorXd, 3> z1k;  // d z1 / d input k (t, y, mu)
    // backward scratch, kept to avoid reallocating every step
    Eigen::MatrixXd A, AZ2c, A1, AZ1;
  };

 private:
  int n_;
  Activation act_;
  std::array<Interval, 4> domains_;
  Eigen::Vector4d scale_;
  Eigen::Vector4d shift_;
  Eigen::VectorXd theta_;
};

/// Coefficients of the dual HJB operator at one point, ordered by Channel
/// (value and d/dmu carry zero).
std::array<double, kChannels> residual_coefficients(const NetInput& x, const ModelParams& params);

/// v_t - r y v_y + y^2 kappa^2 v_yy / 2 + psi^2 v_mumu / 2 - y kappa psi v_ymu,
/// kappa = (mu - r) / sigma.
double pde_residual(const NetInput& x, const NetDerivatives& d, const ModelParams& params);
double pde_residual(const NetInput& x, const PinnNetwork& net, const ModelParams& params);

struct PointSets {
  Eigen::Matrix<double, 4, Eigen::Dynamic> collocation;
  Eigen::Matrix<double, kChannels, Eigen::Dynamic> coefficients;
  Eigen::Matrix<double, 4, Eigen::Dynamic> boundary;
  Eigen::VectorXd targets;  // V^c_lambda(y) at the boundary points
};

PointSets sample_points(const PinnConfig& cfg, const ModelParams& params,
                        const ConcavifiedUtility& utility, std::mt19937_64& rng);

struct LossTerms {
  double total = 0.0;
  double residual = 0.0;  // mean squared residual over collocation points
  double boundary = 0.0;  // mean squared terminal error over boundary points
};

struct LossWorkspace {
  PinnNetwork::Tape collocation;
  PinnNetwork::Tape boundary;
};

/// Mean-squared loss; fills grad (resized) when non-null.
LossTerms loss(const PinnNetwork& net, const PointSets& pts, Eigen::VectorXd* grad = nullptr,
               LossWorkspace* ws = nullptr);

struct TrainRecord {
  int step = 0;
  LossTerms loss;
};

struct PinnModel {
  PinnNetwork net;
  PinnConfig config;
  ModelParams params;
  std::vector<TrainRecord> history;
  int steps = 0;
  bool converged = false;  // loss reached loss_tol
};

/// Adam training from a seeded initialization. Throws NumericalFailure on a
/// non-finite loss, writing a diagnostic snapshot next to snapshot_path when
/// one is given. on_log is called at every logged step.
PinnModel train(const PinnConfig& cfg, const ModelParams& params, const UtilitySpec& utility,
                const std::function<void(const TrainRecord&)>& on_log = {},
                const std::filesystem::path& snapshot_path = {});

void save_checkpoint(const PinnModel& model, const std::filesystem::path& path);
PinnModel load_checkpoint(const std::filesystem::path& path);
void write_training_log(const PinnModel& model, const std::filesystem::path& path);

struct YStar {
  double y = 0.0;
  bool on_boundary = false;   // no sign change inside the y domain
  bool multiple_roots = false;
};

/// Smallest root of d_y v(0, y, mu0, lambda) + x0 over the y domain.
YStar solve_y_star(double lambda, double x0, const PinnModel& model);

struct PinnSolution {
  McSolution sol;
  LambdaGrid grid;
  bool y_boundary_hit = false;  // some grid lambda had its root on the y boundary
  bool lambda_at_top = false;   // lambda* at the top of the lambda domain
};

/// y*(lambda) over J grid multipliers, g_lambda by simulation on the pool,
/// u_c = v(0, y*, mu0, lambda) + x0 y*, lambda* by interpolation of g.
PinnSolution coupled_solve(double x0, double epsilon, const PinnModel& model,
                           const SamplePool& pool, const ConcavifiedUtility& utility,
                           int grid_size = 51);

}  // namespace qvar
