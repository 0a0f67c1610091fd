#pragma once

#include "dynfg/elim.hpp"
#include "dynfg/robot.hpp"

namespace dynfg {

enum class ProblemClass { Inverse, Forward, Hybrid };

struct DynamicsProblem {
  RobotModel model;
  JointState state;
  Vec3 gravity = Vec3(0, 0, -9.81);
  Wrench tool_wrench;

  ProblemClass classify() const;
};

enum class HybridMethod { Elimination, Featherstone };

struct DynamicsResult {
  JointState state;  // all four vectors filled
  Solution solution;
  EliminationDag dag;
};

/// Build the conditioned linear graph for a problem (gravity and tool wrench
/// applied to the model boundaries first).
DynFactorGraph problem_graph(const DynamicsProblem& p);

DynamicsResult inverse_dynamics(const DynamicsProblem& p,
                                OrderingTag ordering = OrderingTag::Rnea);
DynamicsResult forward_dynamics(const DynamicsProblem& p,
                                OrderingTag ordering = OrderingTag::Aba);
DynamicsResult hybrid_dynamics(const DynamicsProblem& p,
                               HybridMethod method = HybridMethod::Elimination,
                               OrderingTag ordering = OrderingTag::MinDegree);
DynamicsResult solve_with_ordering(const DynamicsProblem& p, const Ordering& ordering);

// Classical recursions, implemented directly on the model so that agreement
// with the factor-graph path is an independent check.

Eigen::VectorXd rnea_oracle(const RobotModel& model, const Eigen::VectorXd& q,
                            const Eigen::VectorXd& qd, const Eigen::VectorXd& qdd,
                            const Vec3& gravity, const Wrench& tool_wrench = Wrench::Zero());

Eigen::MatrixXd crba_oracle(const RobotModel& model, const Eigen::VectorXd& q);

/// Forward dynamics through the composite mass matrix: M qdd = tau - bias.
Eigen::VectorXd crba_forward(const RobotModel& model, const Eigen::VectorXd& q,
                             const Eigen::VectorXd& qd, const Eigen::VectorXd& tau,
                             const Vec3& gravity, const Wrench& tool_wrench = Wrench::Zero());

Eigen::VectorXd aba_oracle(const RobotModel& model, const Eigen::VectorXd& q,
                           const Eigen::VectorXd& qd, const Eigen::VectorXd& tau,
                           const Vec3& gravity, const Wrench& tool_wrench = Wrench::Zero());

/// Three-pass hybrid scheme: zero-acceleration torques, forward solve on the
/// forward-dynamics joints, final inverse pass.
JointState featherstone_hybrid_oracle(const DynamicsProblem& p);

/// Kinetic energy 0.5 * sum V_i^T G_i V_i.
double kinetic_energy(const RobotModel& model, const Eigen::VectorXd& q,
                      const Eigen::VectorXd& qd);

}  // namespace dynfg
