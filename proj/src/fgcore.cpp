#include "dynfg/fgcore.hpp"

#include <sstream>

namespace dynfg {

std::string to_string(const VariableKey& key) {
  std::string name;
  switch (key.kind) {
    case VarKind::JointAccel: name = "qdd"; break;
    case VarKind::JointTorque: name = "tau"; break;
    case VarKind::TwistAccel: name = "Vdot"; break;
    case VarKind::WrenchVar: name = "F"; break;
    case VarKind::TwistVar: name = "V"; break;
    case VarKind::PlanState: name = "x"; break;
  }
  name += ":" + std::to_string(key.index);
  if (key.step != 0) name += "@" + std::to_string(key.step);
  return name;
}

VariableKey parse_variable_key(const std::string& text) {
  auto colon = text.find(':');
  if (colon == std::string::npos) throw UnknownKey("bad variable key: " + text);
  const std::string kind = text.substr(0, colon);
  std::string rest = text.substr(colon + 1);
  int step = 0;
  if (auto at = rest.find('@'); at != std::string::npos) {
    step = std::stoi(rest.substr(at + 1));
    rest = rest.substr(0, at);
  }
  const int index = std::stoi(rest);
  VariableKey key{VarKind::TwistAccel, index, step};
  if (kind == "qdd") key.kind = VarKind::JointAccel;
  else if (kind == "tau") key.kind = VarKind::JointTorque;
  else if (kind == "Vdot") key.kind = VarKind::TwistAccel;
  else if (kind == "F") key.kind = VarKind::WrenchVar;
  else if (kind == "V") key.kind = VarKind::TwistVar;
  else if (kind == "x") key.kind = VarKind::PlanState;
  else throw UnknownKey("bad variable kind: " + kind);
  return key;
}

int DynFactorGraph::dim(const VariableKey& key) const {
  auto it = variable_dims.find(key);
  if (it == variable_dims.end()) throw UnknownKey("unknown variable " + to_string(key));
  return it->second;
}

void DynFactorGraph::add_variable(const VariableKey& key, int d) {
  variable_dims[key] = d;
}

void DynFactorGraph::add_factor(LinearFactor factor) {
  for (const auto& [key, block] : factor.blocks) {
    const int d = dim(key);
    if (block.cols() != d || block.rows() != factor.rows()) {
      throw DimensionMismatch("factor block shape mismatch on " + to_string(key));
    }
  }
  factors.push_back(std::move(factor));
}

Eigen::VectorXd DynFactorGraph::residual(
    const std::map<VariableKey, Eigen::VectorXd>& values) const {
  int rows = 0;
  for (const auto& f : factors) rows += f.rows();
  Eigen::VectorXd r(rows);
  int at = 0;
  for (const auto& f : factors) {
    Eigen::VectorXd row = -f.rhs;
    for (const auto& [key, block] : f.blocks) {
      row += block * values.at(key);
    }
    r.segment(at, f.rows()) = f.noise_scale * row;
    at += f.rows();
  }
  return r;
}

Eigen::MatrixXd BlockSparseSystem::dense() const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(total_rows, total_cols);
  int at = 0;
  for (const LinearFactor* f : row_factors) {
    for (const auto& [key, block] : f->blocks) {
      a.block(at, column_offsets.at(key), block.rows(), block.cols()) =
          f->noise_scale * block;
    }
    at += f->rows();
  }
  return a;
}

Eigen::VectorXd BlockSparseSystem::dense_rhs() const {
  Eigen::VectorXd b(total_rows);
  int at = 0;
  for (const LinearFactor* f : row_factors) {
    b.segment(at, f->rows()) = f->noise_scale * f->rhs;
    at += f->rows();
  }
  return b;
}

DynFactorGraph build_dynamics_graph(const RobotModel& model, const Eigen::VectorXd& q,
                                    const Eigen::VectorXd& qd) {
  const int n = model.dof();
  if (q.size() != n || qd.size() != n) {
    throw DimensionMismatch("build_dynamics_graph: state dimension mismatch");
  }
  const std::vector<Twist> twists = compute_twists(model, q, qd);

  DynFactorGraph graph;
  for (int i = 1; i <= n; ++i) {
    graph.add_variable(twist_accel_key(i), 6);
    graph.add_variable(wrench_key(i), 6);
    graph.add_variable(joint_accel_key(i), 1);
    graph.add_variable(joint_torque_key(i), 1);
  }

  for (int i = 1; i <= n; ++i) {
    const Joint& joint = model.joints[static_cast<size_t>(i - 1)];
    const Mat6 x = adjoint(model.parent_to_child(i, q[i - 1]).inverse());

    // Acceleration constraint:
    //   Vdot_i - Ad*Vdot_{i-1} - A_i*qdd_i = ad_{V_i} A_i qd_i  (+ Ad*Vdot_0 for i=1)
    LinearFactor accel;
    accel.label = FactorLabel::Acceleration;
    accel.rhs = ad(twists[static_cast<size_t>(i - 1)]) * joint.axis.axis * qd[i - 1];
    accel.blocks[twist_accel_key(i)] = Mat6::Identity();
    if (i > 1) {
      accel.blocks[twist_accel_key(i - 1)] = -x;
    } else {
      accel.rhs += x * model.base_acceleration.vec;
    }
    accel.blocks[joint_accel_key(i)] = -joint.axis.axis;
    graph.add_factor(std::move(accel));

    // Wrench balance:
    //   F_i - Ad^T*F_{i+1} - G_i*Vdot_i = -ad_{V_i}^T G_i V_i  (+ tool term for i=n)
    const Mat6& g = model.links[static_cast<size_t>(i - 1)].inertia.matrix;
    const Vec6 v = twists[static_cast<size_t>(i - 1)].vec;
    LinearFactor wrench;
    wrench.label = FactorLabel::WrenchBalance;
    wrench.rhs = -ad(Twist(v)).transpose() * (g * v);
    wrench.blocks[wrench_key(i)] = Mat6::Identity();
    wrench.blocks[twist_accel_key(i)] = -g;
    if (i < n) {
      const Mat6 x_next = adjoint(model.parent_to_child(i + 1, q[i]).inverse());
      wrench.blocks[wrench_key(i + 1)] = -x_next.transpose();
    } else {
      wrench.rhs += adjoint(model.tool_offset.inverse()).transpose() * model.tool_wrench.vec;
    }
    graph.add_factor(std::move(wrench));

    // Torque projection: A_i^T F_i - tau_i = 0
    LinearFactor torque;
    torque.label = FactorLabel::Torque;
    torque.rhs = Eigen::VectorXd::Zero(1);
    torque.blocks[wrench_key(i)] = joint.axis.axis.transpose();
    torque.blocks[joint_torque_key(i)] = -Eigen::MatrixXd::Ones(1, 1);
    graph.add_factor(std::move(torque));
  }
  return graph;
}

DynFactorGraph condition(const DynFactorGraph& graph,
                         const std::map<VariableKey, Eigen::VectorXd>& known) {
  for (const auto& [key, value] : known) {
    if (value.size() != graph.dim(key)) {
      throw DimensionMismatch("condition: value dimension mismatch on " + to_string(key));
    }
  }
  DynFactorGraph out;
  for (const auto& [key, d] : graph.variable_dims) {
    if (!known.count(key)) out.add_variable(key, d);
  }
  for (const auto& factor : graph.factors) {
    LinearFactor f;
    f.label = factor.label;
    f.noise_scale = factor.noise_scale;
    f.rhs = factor.rhs;
    for (const auto& [key, block] : factor.blocks) {
      auto it = known.find(key);
      if (it != known.end()) {
        f.rhs -= block * it->second;
      } else {
        f.blocks[key] = block;
      }
    }
    out.add_factor(std::move(f));
  }
  return out;
}

BlockSparseSystem assemble(const DynFactorGraph& graph) {
  BlockSparseSystem sys;
  int col = 0;
  for (const auto& [key, d] : graph.variable_dims) {
    sys.column_keys.push_back(key);
    sys.column_offsets[key] = col;
    col += d;
  }
  sys.total_cols = col;
  for (const auto& f : graph.factors) {
    sys.row_factors.push_back(&f);
    sys.total_rows += f.rows();
  }
  return sys;
}

namespace {

std::string dot_id(const VariableKey& key) {
  std::string s = to_string(key);
  for (char& c : s) {
    if (c == ':' || c == '@') c = '_';
  }
  return s;
}

}  // namespace

std::string export_graph_dot(const DynFactorGraph& graph,
                             const std::vector<VariableKey>& known_vars) {
  std::ostringstream out;
  out << "graph factor_graph {\n";
  for (const auto& [key, d] : graph.variable_dims) {
    (void)d;
    out << "  " << dot_id(key) << " [shape=ellipse, label=\"" << to_string(key) << "\"];\n";
  }
  for (const auto& key : known_vars) {
    out << "  " << dot_id(key) << " [shape=box, label=\"" << to_string(key) << "\"];\n";
  }
  int idx = 0;
  for (const auto& f : graph.factors) {
    std::string fname = "f" + std::to_string(idx++);
    out << "  " << fname << " [shape=point];\n";
    for (const auto& [key, block] : f.blocks) {
      (void)block;
      out << "  " << fname << " -- " << dot_id(key) << ";\n";
    }
  }
  out << "}\n";
  return out.str();
}

std::string export_full_graph_dot(const RobotModel& model) {
  const int n = model.dof();
  std::ostringstream out;
  out << "graph dynamics_graph {\n";
  for (int i = 1; i <= n; ++i) {
    for (VariableKey key : {twist_key(i), twist_accel_key(i), wrench_key(i),
                            joint_accel_key(i), joint_torque_key(i)}) {
      out << "  " << dot_id(key) << " [shape=ellipse, label=\"" << to_string(key) << "\"];\n";
    }
  }
  int idx = 0;
  auto factor = [&](std::initializer_list<VariableKey> keys) {
    std::string fname = "f" + std::to_string(idx++);
    out << "  " << fname << " [shape=point];\n";
    for (const auto& key : keys) out << "  " << fname << " -- " << dot_id(key) << ";\n";
  };
  for (int i = 1; i <= n; ++i) {
    if (i > 1) {
      factor({twist_key(i), twist_key(i - 1)});
      factor({twist_accel_key(i), twist_accel_key(i - 1), joint_accel_key(i), twist_key(i)});
    } else {
      factor({twist_key(i)});
      factor({twist_accel_key(i), joint_accel_key(i), twist_key(i)});
    }
    if (i < n) {
      factor({wrench_key(i), wrench_key(i + 1), twist_accel_key(i), twist_key(i)});
    } else {
      factor({wrench_key(i), twist_accel_key(i), twist_key(i)});
    }
    factor({wrench_key(i), joint_torque_key(i)});
  }
  out << "}\n";
  return out.str();
}

}  // namespace dynfg
