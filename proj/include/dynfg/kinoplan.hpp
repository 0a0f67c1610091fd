#pragma once

#include <functional>
#include <memory>

#include "dynfg/dyn.hpp"

namespace dynfg {

struct NonSpdSigma : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DivergedNaN : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GpPriorParams {
  Eigen::MatrixXd q_c;  // n x n power-spectral density, SPD

  static GpPriorParams Isotropic(int n, double scale) {
    return {Eigen::MatrixXd::Identity(n, n) * scale};
  }
};

/// Constant-acceleration transition Phi and covariance Sigma over one interval,
/// for the stacked state (q, qd, qdd). Each 3x3 scalar pattern is expanded by
/// the n x n blocks of Q_C.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> gp_transition(double dt, const GpPriorParams& p);

/// Whitened residual Sigma^{-1/2} (x_next - Phi x_prev).
Eigen::VectorXd gp_factor_residual(const Eigen::VectorXd& x_prev,
                                   const Eigen::VectorXd& x_next, double dt,
                                   const GpPriorParams& p);

/// Two-sided hinge: alpha*max(0, lower - q + eps) + alpha*max(0, q - upper + eps).
double hinge_limit_residual(double q, double lower, double upper, double alpha, double eps);
double hinge_limit_gradient(double q, double lower, double upper, double alpha, double eps);

double min_torque_residual(double tau, double sigma_tau);

/// max(0, ||f - (f.n)n|| - mu*(f.n)); zero inside the friction cone.
double friction_cone_residual(const Vec3& f, const Vec3& normal, double mu);
Vec3 friction_cone_gradient(const Vec3& f, const Vec3& normal, double mu);

struct GoalSpec {
  int step = 0;
  Eigen::VectorXd q_target;
  double position_weight = 1.0;
  double velocity_weight = 1.0;  // "come to rest": velocities pulled to zero
};

/// Weighted stacked (q - q*, qd) residual of one goal.
Eigen::VectorXd goal_residual(const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                              const GoalSpec& goal);

// ---------------------------------------------------------------------------
// Nonlinear factor graph for trajectory optimization.

using Values = std::map<VariableKey, Eigen::VectorXd>;

class NonlinearFactor {
 public:
  virtual ~NonlinearFactor() = default;
  virtual std::vector<VariableKey> keys() const = 0;
  virtual Eigen::VectorXd residual(const Values& values) const = 0;
  virtual std::map<VariableKey, Eigen::MatrixXd> jacobians(const Values& values) const = 0;
  virtual double weight() const { return 1.0; }
  virtual std::string category() const = 0;

  double cost(const Values& values) const {
    const double w = weight();
    return w * w * residual(values).squaredNorm();
  }
  LinearFactor linearize(const Values& values) const;
};

struct PlanConfig {
  int horizon = 2;      // number of timesteps
  double dt = 0.05;     // seconds between steps
  bool gp_prior = true;
  bool min_torque = false;
  bool joint_limits = false;
  double q_c_scale = 1.0;
  double sigma_tau = 1.0;
  double hinge_alpha = 10.0;
  double hinge_eps = 0.05;
  double hard_weight = 1e6;  // dynamics / equality factors
  std::vector<GoalSpec> goals;
  std::vector<bool> actuated;         // per joint; unactuated get zero-torque factors
  Eigen::VectorXd initial_q;          // initial-state prior (rest)
};

struct PlanGraph {
  RobotModel model;
  PlanConfig config;
  std::vector<std::unique_ptr<NonlinearFactor>> factors;
  std::map<VariableKey, int> variable_dims;

  double total_cost(const Values& values) const;
  std::map<std::string, double> cost_breakdown(const Values& values) const;
};

PlanGraph build_plan_graph(const RobotModel& model, const PlanConfig& config);

/// Linear-interpolation seed: q from initial_q to the last goal, zeros for the
/// joint rates and torques, link variables from the matching recursions.
Values initialize_trajectory(const PlanGraph& graph);

/// Penalty-continuation refinement of a seed: re-optimizes under reduced
/// equality weights (fixed small iteration budgets) so that the full-weight
/// solve starts near the constraint manifold instead of crawling along it.
Values warm_start_trajectory(const PlanGraph& graph, const Values& seed);

struct OptimizeOptions {
  int max_iterations = 500;
  double relative_cost_tol = 1e-8;
  double step_norm_tol = 1e-10;
  double lambda_init = 1e-4;
  double lambda_factor = 10.0;
  double lambda_max = 1e12;
};

struct OptimizeReport {
  int iterations = 0;
  double final_cost = 0;
  bool converged = false;
  bool max_iterations_hit = false;
  std::map<std::string, double> cost_breakdown;
};

/// Damped Gauss-Newton; the inner linear solves run through the elimination
/// machinery on a per-timestep banded ordering.
Values optimize(const PlanGraph& graph, const Values& initial, const OptimizeOptions& opts,
                OptimizeReport* report = nullptr);

// ---------------------------------------------------------------------------
// Trajectory output.

struct Trajectory {
  std::vector<double> times;
  Eigen::MatrixXd q, qd, qdd, tau;  // horizon x n each
};

Trajectory extract_trajectory(const PlanGraph& graph, const Values& values);
std::string trajectory_csv(const Trajectory& traj);
std::string report_json(const OptimizeReport& report);

/// Cart on a prismatic x rail with an unactuated pendulum about y; the pole
/// hangs down (-z) at q2 = 0 and is upright at q2 = +-pi.
RobotModel make_cartpole(double cart_mass = 1.0, double pole_mass = 0.3,
                         double pole_length = 0.5);

}  // namespace dynfg
