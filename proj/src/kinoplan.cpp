#include "dynfg/kinoplan.hpp"

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <cmath>
#include <sstream>

namespace dynfg {

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> gp_transition(double dt, const GpPriorParams& p) {
  const int n = static_cast<int>(p.q_c.rows());
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(3 * n, 3 * n);
  phi.block(0, 0, n, n) = id;
  phi.block(0, n, n, n) = dt * id;
  phi.block(0, 2 * n, n, n) = 0.5 * dt * dt * id;
  phi.block(n, n, n, n) = id;
  phi.block(n, 2 * n, n, n) = dt * id;
  phi.block(2 * n, 2 * n, n, n) = id;

  const double d2 = dt * dt, d3 = d2 * dt, d4 = d3 * dt, d5 = d4 * dt;
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(3 * n, 3 * n);
  sigma.block(0, 0, n, n) = 0.5 * d5 * p.q_c;
  sigma.block(0, n, n, n) = 0.125 * d4 * p.q_c;
  sigma.block(0, 2 * n, n, n) = (d3 / 6.0) * p.q_c;
  sigma.block(n, 0, n, n) = 0.125 * d4 * p.q_c;
  sigma.block(n, n, n, n) = (d3 / 3.0) * p.q_c;
  sigma.block(n, 2 * n, n, n) = 0.5 * d2 * p.q_c;
  sigma.block(2 * n, 0, n, n) = (d3 / 6.0) * p.q_c;
  sigma.block(2 * n, n, n, n) = 0.5 * d2 * p.q_c;
  sigma.block(2 * n, 2 * n, n, n) = dt * p.q_c;
  return {phi, sigma};
}

namespace {

/// Lower-triangular whitener W with W = L^{-1}, Sigma = L L^T.
Eigen::MatrixXd sigma_whitener(const Eigen::MatrixXd& sigma) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw NonSpdSigma("GP covariance is not symmetric positive definite");
  }
  const int d = static_cast<int>(sigma.rows());
  return llt.matrixL().solve(Eigen::MatrixXd::Identity(d, d));
}

}  // namespace

Eigen::VectorXd gp_factor_residual(const Eigen::VectorXd& x_prev,
                                   const Eigen::VectorXd& x_next, double dt,
                                   const GpPriorParams& p) {
  const auto [phi, sigma] = gp_transition(dt, p);
  return sigma_whitener(sigma) * (x_next - phi * x_prev);
}

double hinge_limit_residual(double q, double lower, double upper, double alpha, double eps) {
  return alpha * std::max(0.0, lower - q + eps) + alpha * std::max(0.0, q - upper + eps);
}

double hinge_limit_gradient(double q, double lower, double upper, double alpha, double eps) {
  double g = 0;
  if (lower - q + eps > 0) g -= alpha;
  if (q - upper + eps > 0) g += alpha;
  return g;
}

double min_torque_residual(double tau, double sigma_tau) { return tau / sigma_tau; }

double friction_cone_residual(const Vec3& f, const Vec3& normal, double mu) {
  const Vec3 n = normal.normalized();
  const double fn = f.dot(n);
  const Vec3 tangential = f - fn * n;
  return std::max(0.0, tangential.norm() - mu * fn);
}

Vec3 friction_cone_gradient(const Vec3& f, const Vec3& normal, double mu) {
  const Vec3 n = normal.normalized();
  const double fn = f.dot(n);
  const Vec3 tangential = f - fn * n;
  const double tn = tangential.norm();
  if (tn - mu * fn <= 0) return Vec3::Zero();
  Vec3 g = -mu * n;
  if (tn > 1e-12) {
    const Vec3 that = tangential / tn;
    g += that - that.dot(n) * n;
  }
  return g;
}

Eigen::VectorXd goal_residual(const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                              const GoalSpec& goal) {
  const int n = static_cast<int>(q.size());
  Eigen::VectorXd r(2 * n);
  r.head(n) = goal.position_weight * (q - goal.q_target);
  r.tail(n) = goal.velocity_weight * qd;
  return r;
}

LinearFactor NonlinearFactor::linearize(const Values& values) const {
  LinearFactor f;
  f.noise_scale = weight();
  f.rhs = -residual(values);
  for (auto& [key, jac] : jacobians(values)) f.blocks[key] = jac;
  return f;
}

namespace {

// Slices of the stacked plan state x = (q, qd, qdd).
double q_of(const Eigen::VectorXd& x, int n, int i) { return x[i - 1]; }
double qd_of(const Eigen::VectorXd& x, int n, int i) { return x[n + i - 1]; }
double qdd_of(const Eigen::VectorXd& x, int n, int i) { return x[2 * n + i - 1]; }

class TwistFactor : public NonlinearFactor {
 public:
  TwistFactor(const RobotModel* model, int i, int k, double w)
      : model_(model), i_(i), k_(k), w_(w) {}

  std::vector<VariableKey> keys() const override {
    std::vector<VariableKey> ks{twist_key(i_, k_), plan_state_key(k_)};
    if (i_ > 1) ks.push_back(twist_key(i_ - 1, k_));
    return ks;
  }

  Eigen::VectorXd residual(const Values& v) const override {
    const int n = model_->dof();
    const Eigen::VectorXd& x = v.at(plan_state_key(k_));
    const Vec6& a = model_->joints[static_cast<size_t>(i_ - 1)].axis.axis;
    const Mat6 xf = adjoint(model_->parent_to_child(i_, q_of(x, n, i_)).inverse());
    Vec6 r = v.at(twist_key(i_, k_)) - a * qd_of(x, n, i_);
    if (i_ > 1) r -= xf * v.at(twist_key(i_ - 1, k_));
    return r;
  }

  std::map<VariableKey, Eigen::MatrixXd> jacobians(const Values& v) const override {
    const int n = model_->dof();
    const Eigen::VectorXd& x = v.at(plan_state_key(k_));
    const Vec6& a = model_->joints[static_cast<size_t>(i_ - 1)].axis.axis;
    const Mat6 xf = adjoint(model_->parent_to_child(i_, q_of(x, n, i_)).inverse());
    std::map<VariableKey, Eigen::MatrixXd> jac;
    jac[twist_key(i_, k_)] = Mat6::Identity();
    Eigen::MatrixXd jx = Eigen::MatrixXd::Zero(6, 3 * n);
    jx.col(n + i_ - 1) = -a;
    if (i_ > 1) {
      jac[twist_key(i_ - 1, k_)] = -xf;
      jx.col(i_ - 1) = ad(Twist(a)) * xf * v.at(twist_key(i_ - 1, k_));
    }
    jac[plan_state_key(k_)] = jx;
    return jac;
  }

  double weight() const override { return w_; }
  std::string category() const override { return "dynamics"; }

 private:
  const RobotModel* model_;
  int i_, k_;
  double w_;
};

class AccelFactor : public NonlinearFactor {
 public:
  AccelFactor(const RobotModel* model, int i, int k, double w)
      : model_(model), i_(i), k_(k), w_(w) {}

  std::vector<VariableKey> keys() const override {
    std::vector<VariableKey> ks{twist_accel_key(i_, k_), twist_key(i_, k_),
                                plan_state_key(k_)};
    if (i_ > 1) ks.push_back(twist_accel_key(i_ - 1, k_));
    return ks;
  }

  Eigen::VectorXd residual(const Values& v) const override {
    const int n = model_->dof();
    const Eigen::VectorXd& x = v.at(plan_state_key(k_));
    const Vec6& a = model_->joints[static_cast<size_t>(i_ - 1)].axis.axis;
    const Mat6 xf = adjoint(model_->parent_to_child(i_, q_of(x, n, i_)).inverse());
    const Vec6 vdot_prev = i_ > 1 ? Vec6(v.at(twist_accel_key(i_ - 1, k_)))
                                  : model_->base_acceleration.vec;
    return Vec6(v.at(twist_accel_key(i_, k_))) - xf * vdot_prev -
           ad(Twist(Vec6(v.at(twist_key(i_, k_))))) * a * qd_of(x, n, i_) -
           a * qdd_of(x, n, i_);
  }

  std::map<VariableKey, Eigen::MatrixXd> jacobians(const Values& v) const override {
    const int n = model_->dof();
    const Eigen::VectorXd& x = v.at(plan_state_key(k_));
    const Vec6& a = model_->joints[static_cast<size_t>(i_ - 1)].axis.axis;
    const Mat6 xf = adjoint(model_->parent_to_child(i_, q_of(x, n, i_)).inverse());
    const Vec6 vdot_prev = i_ > 1 ? Vec6(v.at(twist_accel_key(i_ - 1, k_)))
                                  : model_->base_acceleration.vec;
    std::map<VariableKey, Eigen::MatrixXd> jac;
    jac[twist_accel_key(i_, k_)] = Mat6::Identity();
    if (i_ > 1) jac[twist_accel_key(i_ - 1, k_)] = -xf;
    // -ad_V (A qd) is linear in V with matrix +ad(A qd) by bracket antisymmetry.
    jac[twist_key(i_, k_)] = ad(Twist(a)) * qd_of(x, n, i_);
    Eigen::MatrixXd jx = Eigen::MatrixXd::Zero(6, 3 * n);
    jx.col(i_ - 1) = ad(Twist(a)) * xf * vdot_prev;
    jx.col(n + i_ - 1) = -ad(Twist(Vec6(v.at(twist_key(i_, k_))))) * a;
    jx.col(2 * n + i_ - 1) = -a;
    jac[plan_state_key(k_)] = jx;
    return jac;
  }

  double weight() const override { return w_; }
  std::string category() const override { return "dynamics"; }

 private:
  const RobotModel* model_;
  int i_, k_;
  double w_;
};

class WrenchFactor : public NonlinearFactor {
 public:
  WrenchFactor(const RobotModel* model, int i, int k, double w)
      : model_(model), i_(i), k_(k), w_(w) {}

  std::vector<VariableKey> keys() const override {
    std::vector<VariableKey> ks{wrench_key(i_, k_), twist_accel_key(i_, k_),
                                twist_key(i_, k_)};
    if (i_ < model_->dof()) {
      ks.push_back(wrench_key(i_ + 1, k_));
      ks.push_back(plan_state_key(k_));
    }
    return ks;
  }

  Eigen::VectorXd residual(const Values& v) const override {
    const int n = model_->dof();
    const Mat6& g = model_->links[static_cast<size_t>(i_ - 1)].inertia.matrix;
    const Vec6 vi = v.at(twist_key(i_, k_));
    Vec6 r = Vec6(v.at(wrench_key(i_, k_))) - g * Vec6(v.at(twist_accel_key(i_, k_))) +
             ad(Twist(vi)).transpose() * (g * vi);
    if (i_ < n) {
      const Eigen::VectorXd& x = v.at(plan_state_key(k_));
      const Mat6 xn = adjoint(model_->parent_to_child(i_ + 1, q_of(x, n, i_ + 1)).inverse());
      r -= xn.transpose() * Vec6(v.at(wrench_key(i_ + 1, k_)));
    } else {
      r -= adjoint(model_->tool_offset.inverse()).transpose() * model_->tool_wrench.vec;
    }
    return r;
  }

  std::map<VariableKey, Eigen::MatrixXd> jacobians(const Values& v) const override {
    const int n = model_->dof();
    const Mat6& g = model_->links[static_cast<size_t>(i_ - 1)].inertia.matrix;
    const Vec6 vi = v.at(twist_key(i_, k_));
    std::map<VariableKey, Eigen::MatrixXd> jac;
    jac[wrench_key(i_, k_)] = Mat6::Identity();
    jac[twist_accel_key(i_, k_)] = -g;
    jac[twist_key(i_, k_)] =
        ad(Twist(vi)).transpose() * g + ad_transpose_by_arg(Wrench(Vec6(g * vi)));
    if (i_ < n) {
      const Eigen::VectorXd& x = v.at(plan_state_key(k_));
      const Vec6& an = model_->joints[static_cast<size_t>(i_)].axis.axis;
      const Mat6 xn = adjoint(model_->parent_to_child(i_ + 1, q_of(x, n, i_ + 1)).inverse());
      const Vec6 fn = v.at(wrench_key(i_ + 1, k_));
      jac[wrench_key(i_ + 1, k_)] = -xn.transpose();
      Eigen::MatrixXd jx = Eigen::MatrixXd::Zero(6, 3 * n);
      jx.col(i_) = xn.transpose() * ad(Twist(an)).transpose() * fn;
      jac[plan_state_key(k_)] = jx;
    }
    return jac;
  }

  double weight() const override { return w_; }
  std::string category() const override { return "dynamics"; }

 private:
  const RobotModel* model_;
  int i_, k_;
  double w_;
};

class TorqueFactor : public NonlinearFactor {
 public:
  TorqueFactor(const RobotModel* model, int i, int k, double w)
      : model_(model), i_(i), k_(k), w_(w) {}

  std::vector<VariableKey> keys() const override {
    return {wrench_key(i_, k_), joint_torque_key(i_, k_)};
  }

  Eigen::VectorXd residual(const Values& v) const override {
    const Vec6& a = model_->joints[static_cast<size_t>(i_ - 1)].axis.axis;
    Eigen::VectorXd r(1);
    r[0] = a.dot(v.at(wrench_key(i_, k_))) - v.at(joint_torque_key(i_, k_))[0];
    return r;
  }

  std::map<VariableKey, Eigen::MatrixXd> jacobians(const Values&) const override {
    const Vec6& a = model_->joints[static_cast<size_t>(i_ - 1)].axis.axis;
    std::map<VariableKey, Eigen::MatrixXd> jac;
    jac[wrench_key(i_, k_)] = a.transpose();
    jac[joint_torque_key(i_, k_)] = -Eigen::MatrixXd::Ones(1, 1);
    return jac;
  }

  double weight() const override { return w_; }
  std::string category() const override { return "dynamics"; }

 private:
  const RobotModel* model_;
  int i_, k_;
  double w_;
};

class GpFactor : public NonlinearFactor {
 public:
  GpFactor(int k, double dt, const GpPriorParams& params) : k_(k) {
    auto [phi, sigma] = gp_transition(dt, params);
    const Eigen::MatrixXd w = sigma_whitener(sigma);
    j_next_ = w;
    j_prev_ = -w * phi;
  }

  std::vector<VariableKey> keys() const override {
    return {plan_state_key(k_ - 1), plan_state_key(k_)};
  }

  Eigen::VectorXd residual(const Values& v) const override {
    return j_next_ * v.at(plan_state_key(k_)) + j_prev_ * v.at(plan_state_key(k_ - 1));
  }

  std::map<VariableKey, Eigen::MatrixXd> jacobians(const Values&) const override {
    return {{plan_state_key(k_ - 1), j_prev_}, {plan_state_key(k_), j_next_}};
  }

  std::string category() const override { return "gp"; }

 private:
  int k_;
  Eigen::MatrixXd j_prev_, j_next_;
};

class StatePriorFactor : public NonlinearFactor {
 public:
  StatePriorFactor(int k, Eigen::VectorXd target, double w)
      : k_(k), target_(std::move(target)), w_(w) {}

  std::vector<VariableKey> keys() const override { return {plan_state_key(k_)}; }

  Eigen::VectorXd residual(const Values& v) const override {
    return v.at(plan_state_key(k_)) - target_;
  }

  std::map<VariableKey, Eigen::MatrixXd> jacobians(const Values&) const override {
    const int d = static_cast<int>(target_.size());
    return {{plan_state_key(k_), Eigen::MatrixXd::Identity(d, d)}};
  }

  double weight() const override { return w_; }
  std::string category() const override { return "prior"; }

 private:
  int k_;
  Eigen::VectorXd target_;
  double w_;
};

class TorquePriorFactor : public NonlinearFactor {
 public:
  // scale = 1/sigma_tau for the soft minimum-torque objective; weight carries
  // the hard zero-torque case for unactuated joints.
  TorquePriorFactor(int i, int k, double scale, double w, std::string category)
      : i_(i), k_(k), scale_(scale), w_(w), category_(std::move(category)) {}

  std::vector<VariableKey> keys() const override { return {joint_torque_key(i_, k_)}; }

  Eigen::VectorXd residual(const Values& v) const override {
    return scale_ * v.at(joint_torque_key(i_, k_));
  }

  std::map<VariableKey, Eigen::MatrixXd> jacobians(const Values&) const override {
    return {{joint_torque_key(i_, k_), scale_ * Eigen::MatrixXd::Ones(1, 1)}};
  }

  double weight() const override { return w_; }
  std::string category() const override { return category_; }

 private:
  int i_, k_;
  double scale_, w_;
  std::string category_;
};

class GoalFactor : public NonlinearFactor {
 public:
  GoalFactor(int n, GoalSpec goal) : n_(n), goal_(std::move(goal)) {}

  std::vector<VariableKey> keys() const override { return {plan_state_key(goal_.step)}; }

  Eigen::VectorXd residual(const Values& v) const override {
    const Eigen::VectorXd& x = v.at(plan_state_key(goal_.step));
    return goal_residual(x.head(n_), x.segment(n_, n_), goal_);
  }

  std::map<VariableKey, Eigen::MatrixXd> jacobians(const Values&) const override {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2 * n_, 3 * n_);
    j.topLeftCorner(n_, n_) =
        goal_.position_weight * Eigen::MatrixXd::Identity(n_, n_);
    j.block(n_, n_, n_, n_) =
        goal_.velocity_weight * Eigen::MatrixXd::Identity(n_, n_);
    return {{plan_state_key(goal_.step), j}};
  }

  std::string category() const override { return "goal"; }

 private:
  int n_;
  GoalSpec goal_;
};

class HingeFactor : public NonlinearFactor {
 public:
  HingeFactor(const RobotModel* model, int i, int k, double alpha, double eps)
      : model_(model), i_(i), k_(k), alpha_(alpha), eps_(eps) {}

  std::vector<VariableKey> keys() const override { return {plan_state_key(k_)}; }

  Eigen::VectorXd residual(const Values& v) const override {
    const Joint& joint = model_->joints[static_cast<size_t>(i_ - 1)];
    const double q = q_of(v.at(plan_state_key(k_)), model_->dof(), i_);
    Eigen::VectorXd r(1);
    r[0] = hinge_limit_residual(q, joint.lower_limit, joint.upper_limit, alpha_, eps_);
    return r;
  }

  std::map<VariableKey, Eigen::MatrixXd> jacobians(const Values& v) const override {
    const Joint& joint = model_->joints[static_cast<size_t>(i_ - 1)];
    const int n = model_->dof();
    const double q = q_of(v.at(plan_state_key(k_)), n, i_);
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(1, 3 * n);
    j(0, i_ - 1) =
        hinge_limit_gradient(q, joint.lower_limit, joint.upper_limit, alpha_, eps_);
    return {{plan_state_key(k_), j}};
  }

  std::string category() const override { return "limit"; }

 private:
  const RobotModel* model_;
  int i_, k_;
  double alpha_, eps_;
};

}  // namespace

double PlanGraph::total_cost(const Values& values) const {
  double c = 0;
  for (const auto& f : factors) c += f->cost(values);
  return c;
}

std::map<std::string, double> PlanGraph::cost_breakdown(const Values& values) const {
  std::map<std::string, double> out;
  for (const auto& f : factors) out[f->category()] += f->cost(values);
  return out;
}

PlanGraph build_plan_graph(const RobotModel& model, const PlanConfig& config) {
  const int n = model.dof();
  PlanGraph graph;
  graph.model = model;
  graph.config = config;
  const double hard = config.hard_weight;
  const GpPriorParams gp = GpPriorParams::Isotropic(n, config.q_c_scale);

  for (int k = 0; k < config.horizon; ++k) {
    graph.variable_dims[plan_state_key(k)] = 3 * n;
    for (int i = 1; i <= n; ++i) {
      graph.variable_dims[twist_key(i, k)] = 6;
      graph.variable_dims[twist_accel_key(i, k)] = 6;
      graph.variable_dims[wrench_key(i, k)] = 6;
      graph.variable_dims[joint_torque_key(i, k)] = 1;
    }
  }

  auto& fs = graph.factors;
  for (int k = 0; k < config.horizon; ++k) {
    for (int i = 1; i <= n; ++i) {
      fs.push_back(std::make_unique<TwistFactor>(&graph.model, i, k, hard));
      fs.push_back(std::make_unique<AccelFactor>(&graph.model, i, k, hard));
      fs.push_back(std::make_unique<WrenchFactor>(&graph.model, i, k, hard));
      fs.push_back(std::make_unique<TorqueFactor>(&graph.model, i, k, hard));
      const bool actuated =
          config.actuated.empty() || config.actuated[static_cast<size_t>(i - 1)];
      if (!actuated) {
        fs.push_back(std::make_unique<TorquePriorFactor>(i, k, 1.0, hard, "torque"));
      } else if (config.min_torque) {
        fs.push_back(std::make_unique<TorquePriorFactor>(i, k, 1.0 / config.sigma_tau,
                                                         1.0, "torque"));
      }
      if (config.joint_limits &&
          std::isfinite(model.joints[static_cast<size_t>(i - 1)].lower_limit) &&
          std::isfinite(model.joints[static_cast<size_t>(i - 1)].upper_limit)) {
        fs.push_back(std::make_unique<HingeFactor>(&graph.model, i, k,
                                                   config.hinge_alpha, config.hinge_eps));
      }
    }
    if (config.gp_prior && k > 0) {
      fs.push_back(std::make_unique<GpFactor>(k, config.dt, gp));
    }
  }

  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(3 * n);
  if (config.initial_q.size() == n) x0.head(n) = config.initial_q;
  fs.push_back(std::make_unique<StatePriorFactor>(0, std::move(x0), hard));
  for (const GoalSpec& goal : config.goals) {
    fs.push_back(std::make_unique<GoalFactor>(n, goal));
  }
  return graph;
}

Values initialize_trajectory(const PlanGraph& graph) {
  const RobotModel& model = graph.model;
  const PlanConfig& cfg = graph.config;
  const int n = model.dof();
  const int horizon = cfg.horizon;
  Eigen::VectorXd q0 = Eigen::VectorXd::Zero(n);
  if (cfg.initial_q.size() == n) q0 = cfg.initial_q;

  // Piecewise-linear seed through every goal in step order, held constant
  // after the last one; rates, accelerations and torques start at zero.
  std::vector<std::pair<int, Eigen::VectorXd>> knots{{0, q0}};
  std::vector<GoalSpec> goals = cfg.goals;
  std::sort(goals.begin(), goals.end(),
            [](const GoalSpec& a, const GoalSpec& b) { return a.step < b.step; });
  for (const GoalSpec& goal : goals) {
    if (goal.step > knots.back().first) knots.emplace_back(goal.step, goal.q_target);
  }

  Values values;
  for (int k = 0; k < horizon; ++k) {
    Eigen::VectorXd qk = knots.back().second;
    for (size_t seg = 1; seg < knots.size(); ++seg) {
      if (k <= knots[seg].first) {
        const double s = static_cast<double>(k - knots[seg - 1].first) /
                         (knots[seg].first - knots[seg - 1].first);
        qk = (1 - s) * knots[seg - 1].second + s * knots[seg].second;
        break;
      }
    }
    Eigen::VectorXd x = Eigen::VectorXd::Zero(3 * n);
    x.head(n) = qk;
    values[plan_state_key(k)] = x;

    // Link variables from the recursions at (q, 0, 0): rest twists, gravity
    // propagating through the accelerations, matching static wrenches.
    std::vector<Vec6> vdot(static_cast<size_t>(n));
    Vec6 prev = model.base_acceleration.vec;
    for (int i = 1; i <= n; ++i) {
      const Mat6 xf = adjoint(model.parent_to_child(i, x[i - 1]).inverse());
      vdot[static_cast<size_t>(i - 1)] = xf * prev;
      prev = vdot[static_cast<size_t>(i - 1)];
      values[twist_key(i, k)] = Vec6::Zero();
    }
    Vec6 f_next = adjoint(model.tool_offset.inverse()).transpose() * model.tool_wrench.vec;
    for (int i = n; i >= 1; --i) {
      const Mat6& g = model.links[static_cast<size_t>(i - 1)].inertia.matrix;
      Vec6 f = g * vdot[static_cast<size_t>(i - 1)] + f_next;
      values[twist_accel_key(i, k)] = vdot[static_cast<size_t>(i - 1)];
      values[wrench_key(i, k)] = f;
      values[joint_torque_key(i, k)] =
          Eigen::VectorXd::Zero(1);
      if (i > 1) {
        const Mat6 xf = adjoint(model.parent_to_child(i, x[i - 1]).inverse());
        f_next = xf.transpose() * f;
      }
    }
  }
  return values;
}

namespace {

/// Per-timestep banded elimination order. Within a step the order is chosen so
/// that every variable still owns an unconsumed factor with a unit block on it:
/// tau_1..tau_n, F_1..F_n, Vdot_n..Vdot_1, V_n..V_1, then the plan state,
/// whose elimination couples only into the next step.
Ordering plan_ordering(const DynFactorGraph& graph, int horizon, int n) {
  Ordering ordering;
  ordering.tag = OrderingTag::Custom;
  auto push = [&](const VariableKey& key) {
    if (graph.variable_dims.count(key)) ordering.sequence.push_back(key);
  };
  for (int k = 0; k < horizon; ++k) {
    for (int i = 1; i <= n; ++i) push(joint_torque_key(i, k));
    for (int i = 1; i <= n; ++i) push(wrench_key(i, k));
    for (int i = n; i >= 1; --i) push(twist_accel_key(i, k));
    for (int i = n; i >= 1; --i) push(twist_key(i, k));
    push(plan_state_key(k));
  }
  return ordering;
}

}  // namespace

Values optimize(const PlanGraph& graph, const Values& initial, const OptimizeOptions& opts,
                OptimizeReport* report) {
  const int n = graph.model.dof();
  Values values = initial;
  double cost = graph.total_cost(values);
  if (!std::isfinite(cost)) throw DivergedNaN("initial cost is not finite");
  double lambda = opts.lambda_init;
  OptimizeReport rep;
  bool converged = false;

  for (int iter = 0; iter < opts.max_iterations && !converged; ++iter) {
    rep.iterations = iter + 1;
    std::vector<LinearFactor> linearized;
    linearized.reserve(graph.factors.size());
    for (const auto& f : graph.factors) linearized.push_back(f->linearize(values));

    // Marquardt scaling: damp each coordinate proportionally to its Jacobian
    // column norm, so lambda acts uniformly across differently scaled blocks.
    std::map<VariableKey, Eigen::VectorXd> col_scale;
    for (const auto& [key, d] : graph.variable_dims) {
      col_scale[key] = Eigen::VectorXd::Zero(d);
    }
    for (const LinearFactor& f : linearized) {
      for (const auto& [key, block] : f.blocks) {
        col_scale[key] += (f.noise_scale * f.noise_scale) *
                          block.colwise().squaredNorm().transpose();
      }
    }
    for (auto& [key, s] : col_scale) {
      s = s.cwiseMax(1e-12).cwiseSqrt();
    }

    bool accepted = false;
    while (!accepted) {
      DynFactorGraph damped;
      damped.variable_dims = graph.variable_dims;
      damped.factors = linearized;
      for (const auto& [key, d] : graph.variable_dims) {
        LinearFactor prior;
        prior.rhs = Eigen::VectorXd::Zero(d);
        prior.blocks[key] =
            (std::sqrt(lambda) * col_scale.at(key)).asDiagonal().toDenseMatrix();
        damped.factors.push_back(std::move(prior));
      }
      const Solution sol =
          solve(damped, plan_ordering(damped, graph.config.horizon, n));

      Values candidate = values;
      double step_sq = 0;
      for (const auto& [key, delta] : sol.values) {
        candidate[key] += delta;
        step_sq += delta.squaredNorm();
      }
      const double new_cost = graph.total_cost(candidate);

      if (std::getenv("DYNFG_OPT_TRACE")) {
        std::cerr << "iter " << iter << " lambda " << lambda << " cost " << cost
                  << " -> " << new_cost << " step " << std::sqrt(step_sq) << "\n";
      }
      if (std::isfinite(new_cost) && new_cost < cost) {
        const double rel = (cost - new_cost) / std::max(cost, 1e-300);
        values = std::move(candidate);
        cost = new_cost;
        lambda = std::max(lambda / opts.lambda_factor, 1e-12);
        accepted = true;
        if (rel < opts.relative_cost_tol || std::sqrt(step_sq) < opts.step_norm_tol) {
          converged = true;
        }
      } else {
        lambda *= opts.lambda_factor;
        if (lambda > opts.lambda_max) {
          if (!std::isfinite(new_cost)) {
            throw DivergedNaN("optimization produced a non-finite cost");
          }
          converged = true;  // no further progress possible at any damping
          accepted = true;
        }
      }
    }
  }

  rep.final_cost = cost;
  rep.converged = converged;
  rep.max_iterations_hit = !converged && rep.iterations >= opts.max_iterations;
  rep.cost_breakdown = graph.cost_breakdown(values);
  if (report) *report = rep;
  return values;
}

Values warm_start_trajectory(const PlanGraph& graph, const Values& seed) {
  // Equality constraints enter as large-weight soft factors, which makes the
  // cost landscape a steep-walled valley along the dynamics manifold; damped
  // Gauss-Newton steps there are capped by the constraint curvature times the
  // squared weight. Solving two relaxed problems first (weights 1e-4 and 1e-2
  // of the configured one) walks the seed onto the manifold cheaply, after
  // which the full-weight solve converges in a handful of iterations.
  struct Stage {
    double weight_scale;
    int budget;
  };
  const Stage stages[] = {{1e-4, 150}, {1e-2, 80}};
  Values values = seed;
  for (const Stage& stage : stages) {
    PlanConfig cfg = graph.config;
    cfg.hard_weight = std::max(graph.config.hard_weight * stage.weight_scale, 1.0);
    const PlanGraph relaxed = build_plan_graph(graph.model, cfg);
    OptimizeOptions opts;
    opts.max_iterations = stage.budget;
    values = optimize(relaxed, values, opts, nullptr);
  }
  return values;
}

Trajectory extract_trajectory(const PlanGraph& graph, const Values& values) {
  const int n = graph.model.dof();
  const int horizon = graph.config.horizon;
  Trajectory traj;
  traj.q.resize(horizon, n);
  traj.qd.resize(horizon, n);
  traj.qdd.resize(horizon, n);
  traj.tau.resize(horizon, n);
  for (int k = 0; k < horizon; ++k) {
    traj.times.push_back(k * graph.config.dt);
    const Eigen::VectorXd& x = values.at(plan_state_key(k));
    traj.q.row(k) = x.head(n);
    traj.qd.row(k) = x.segment(n, n);
    traj.qdd.row(k) = x.tail(n);
    for (int i = 1; i <= n; ++i) {
      traj.tau(k, i - 1) = values.at(joint_torque_key(i, k))[0];
    }
  }
  return traj;
}

std::string trajectory_csv(const Trajectory& traj) {
  const int n = static_cast<int>(traj.q.cols());
  std::ostringstream out;
  out.precision(12);
  out << "t";
  for (const char* field : {"q", "qd", "qdd", "tau"}) {
    for (int i = 1; i <= n; ++i) out << "," << field << i;
  }
  out << "\n";
  for (size_t k = 0; k < traj.times.size(); ++k) {
    out << traj.times[k];
    for (const Eigen::MatrixXd* m : {&traj.q, &traj.qd, &traj.qdd, &traj.tau}) {
      for (int i = 0; i < n; ++i) out << "," << (*m)(static_cast<int>(k), i);
    }
    out << "\n";
  }
  return out.str();
}

std::string report_json(const OptimizeReport& report) {
  std::ostringstream out;
  out.precision(12);
  out << "{\n";
  out << "  \"iterations\": " << report.iterations << ",\n";
  out << "  \"final_cost\": " << report.final_cost << ",\n";
  out << "  \"converged\": " << (report.converged ? "true" : "false") << ",\n";
  out << "  \"max_iterations_hit\": " << (report.max_iterations_hit ? "true" : "false")
      << ",\n";
  out << "  \"cost_breakdown\": {";
  bool first = true;
  for (const auto& [name, value] : report.cost_breakdown) {
    if (!first) out << ",";
    out << "\n    \"" << name << "\": " << value;
    first = false;
  }
  out << "\n  }\n}\n";
  return out.str();
}

RobotModel make_cartpole(double cart_mass, double pole_mass, double pole_length) {
  RobotModel model;

  Link cart;
  cart.name = "cart";
  cart.inertia = SpatialInertia::FromMassInertia(cart_mass, 1e-3 * Mat3::Identity());
  Joint rail;
  rail.name = "rail";
  rail.kind = JointKind::Prismatic;
  rail.axis = ScrewAxis::Prismatic(Vec3::UnitX());
  model.links.push_back(cart);
  model.joints.push_back(rail);

  // Pole pivots about y at the cart; its COM hangs a pole length below, so the
  // screw axis seen from the COM passes through the point (0, 0, +l).
  Link pole;
  pole.name = "pole";
  pole.inertia = SpatialInertia::FromMassInertia(pole_mass, 1e-6 * Mat3::Identity());
  Joint pivot;
  pivot.name = "pivot";
  pivot.kind = JointKind::Revolute;
  pivot.axis = ScrewAxis::Revolute(Vec3::UnitY(), Vec3(0, 0, pole_length));
  pivot.offset = Pose::FromTranslation(Vec3(0, 0, -pole_length));
  model.links.push_back(pole);
  model.joints.push_back(pivot);

  model.base_acceleration = gravity_base_acceleration(Vec3(0, 0, -9.81));
  return model;
}

}  // namespace dynfg
