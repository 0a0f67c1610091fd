#pragma once

#include <map>
#include <string>
#include <vector>

#include "dynfg/robot.hpp"
#include "dynfg/spatial.hpp"

namespace dynfg {

// Kind order doubles as the deterministic tie-break used by the ordering
// heuristics: lowest (kind, index, step) wins.
enum class VarKind : int {
  JointAccel = 0,
  JointTorque = 1,
  TwistAccel = 2,
  WrenchVar = 3,
  TwistVar = 4,   // pre-solved; only present in the full DOT-export graph
  PlanState = 5,  // stacked (q, qd, qdd) of one trajectory step
};

struct VariableKey {
  VarKind kind = VarKind::TwistAccel;
  int index = 0;  // link / joint number
  int step = 0;   // trajectory timestep; 0 for single-configuration graphs

  auto operator<=>(const VariableKey&) const = default;
};

std::string to_string(const VariableKey& key);
VariableKey parse_variable_key(const std::string& text);

inline VariableKey twist_accel_key(int i, int step = 0) {
  return {VarKind::TwistAccel, i, step};
}
inline VariableKey wrench_key(int i, int step = 0) { return {VarKind::WrenchVar, i, step}; }
inline VariableKey joint_accel_key(int i, int step = 0) {
  return {VarKind::JointAccel, i, step};
}
inline VariableKey joint_torque_key(int i, int step = 0) {
  return {VarKind::JointTorque, i, step};
}
inline VariableKey twist_key(int i, int step = 0) { return {VarKind::TwistVar, i, step}; }
inline VariableKey plan_state_key(int step) { return {VarKind::PlanState, 0, step}; }

enum class FactorLabel { Acceleration, WrenchBalance, Torque, Prior };

/// One linear constraint row block: sum_k A_k x_k = b, uniformly weighted by
/// noise_scale (1 for hard constraints).
struct LinearFactor {
  std::map<VariableKey, Eigen::MatrixXd> blocks;
  Eigen::VectorXd rhs;
  FactorLabel label = FactorLabel::Prior;
  double noise_scale = 1.0;

  int rows() const { return static_cast<int>(rhs.size()); }
};

struct DimensionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnknownKey : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bipartite graph of unknown variables and linear factors. Known variables
/// have been folded into factor right-hand sides.
struct DynFactorGraph {
  std::map<VariableKey, int> variable_dims;  // unknowns only
  std::vector<LinearFactor> factors;

  int dim(const VariableKey& key) const;
  void add_variable(const VariableKey& key, int dim);
  void add_factor(LinearFactor factor);

  /// Residual A x - b stacked over all factors (noise-weighted).
  Eigen::VectorXd residual(const std::map<VariableKey, Eigen::VectorXd>& values) const;
};

/// Assembled block-sparse system: one row block per factor, one column block
/// per unknown, block pattern equal to the factor-variable incidence.
struct BlockSparseSystem {
  std::vector<VariableKey> column_keys;          // sorted
  std::map<VariableKey, int> column_offsets;     // scalar column start
  std::vector<const LinearFactor*> row_factors;  // one per row block
  int total_rows = 0;
  int total_cols = 0;

  Eigen::MatrixXd dense() const;
  Eigen::VectorXd dense_rhs() const;
};

/// Transcribe the dynamics constraints at configuration (q, qd) into a linear
/// graph over Vdot_i, F_i, qdd_i, tau_i. Twists are pre-solved and folded into
/// the coefficients.
DynFactorGraph build_dynamics_graph(const RobotModel& model, const Eigen::VectorXd& q,
                                    const Eigen::VectorXd& qd);

/// Fold known values into right-hand sides and drop those variables.
DynFactorGraph condition(const DynFactorGraph& graph,
                         const std::map<VariableKey, Eigen::VectorXd>& known);

BlockSparseSystem assemble(const DynFactorGraph& graph);

/// DOT rendering of the bipartite graph. Knowns (if given) appear as boxes,
/// factors as filled dots. With include_twists, the pre-solved V_i nodes are
/// drawn as well.
std::string export_graph_dot(const DynFactorGraph& graph,
                             const std::vector<VariableKey>& known_vars = {});

/// Full-graph DOT export including the pre-solved twist nodes and Eq.(1)
/// factors, for visualization only.
std::string export_full_graph_dot(const RobotModel& model);

}  // namespace dynfg
