#include "dynfg/dyn.hpp"

namespace dynfg {

ProblemClass DynamicsProblem::classify() const {
  const size_t n = state.qdd_known.size();
  bool all_qdd = true, all_tau = true;
  for (size_t i = 0; i < n; ++i) {
    if (!state.qdd_known[i]) all_qdd = false;
    if (!state.tau_known[i]) all_tau = false;
    if (state.qdd_known[i] == state.tau_known[i]) {
      throw std::invalid_argument("exactly one of {qdd, tau} must be known per joint");
    }
  }
  if (all_qdd) return ProblemClass::Inverse;
  if (all_tau) return ProblemClass::Forward;
  return ProblemClass::Hybrid;
}

namespace {

RobotModel with_boundaries(const DynamicsProblem& p) {
  RobotModel model = p.model;
  model.base_acceleration = gravity_base_acceleration(p.gravity);
  model.tool_wrench = p.tool_wrench;
  return model;
}

}  // namespace

DynFactorGraph problem_graph(const DynamicsProblem& p) {
  const RobotModel model = with_boundaries(p);
  DynFactorGraph graph = build_dynamics_graph(model, p.state.q, p.state.qd);
  std::map<VariableKey, Eigen::VectorXd> known;
  for (int i = 1; i <= model.dof(); ++i) {
    if (p.state.qdd_known[static_cast<size_t>(i - 1)]) {
      known[joint_accel_key(i)] = Eigen::VectorXd::Constant(1, p.state.qdd[i - 1]);
    }
    if (p.state.tau_known[static_cast<size_t>(i - 1)]) {
      known[joint_torque_key(i)] = Eigen::VectorXd::Constant(1, p.state.tau[i - 1]);
    }
  }
  return condition(graph, known);
}

DynamicsResult solve_with_ordering(const DynamicsProblem& p, const Ordering& ordering) {
  DynFactorGraph graph = problem_graph(p);
  DynamicsResult res;
  res.dag = symbolic_eliminate(graph, ordering);
  res.solution = back_substitute(res.dag);
  res.state = p.state;
  for (int i = 1; i <= p.model.dof(); ++i) {
    if (auto it = res.solution.values.find(joint_accel_key(i));
        it != res.solution.values.end()) {
      res.state.qdd[i - 1] = it->second[0];
      res.state.qdd_known[static_cast<size_t>(i - 1)] = true;
    }
    if (auto it = res.solution.values.find(joint_torque_key(i));
        it != res.solution.values.end()) {
      res.state.tau[i - 1] = it->second[0];
      res.state.tau_known[static_cast<size_t>(i - 1)] = true;
    }
  }
  return res;
}

DynamicsResult inverse_dynamics(const DynamicsProblem& p, OrderingTag ordering) {
  if (p.classify() != ProblemClass::Inverse) {
    throw WrongProblemClass("inverse_dynamics needs all qdd known");
  }
  return solve_with_ordering(p, make_ordering(problem_graph(p), ordering));
}

DynamicsResult forward_dynamics(const DynamicsProblem& p, OrderingTag ordering) {
  if (p.classify() != ProblemClass::Forward) {
    throw WrongProblemClass("forward_dynamics needs all tau known");
  }
  return solve_with_ordering(p, make_ordering(problem_graph(p), ordering));
}

DynamicsResult hybrid_dynamics(const DynamicsProblem& p, HybridMethod method,
                               OrderingTag ordering) {
  p.classify();  // validates the flag pattern
  if (method == HybridMethod::Featherstone) {
    DynamicsResult res;
    res.state = featherstone_hybrid_oracle(p);
    DynamicsProblem full = p;
    full.state = res.state;
    // Residual bookkeeping against the factor graph, solved for the spatial
    // intermediates with everything at the joints known.
    DynFactorGraph graph = problem_graph(full);
    std::map<VariableKey, Eigen::VectorXd> extra;
    for (int i = 1; i <= p.model.dof(); ++i) {
      if (graph.variable_dims.count(joint_accel_key(i))) {
        extra[joint_accel_key(i)] = Eigen::VectorXd::Constant(1, res.state.qdd[i - 1]);
      }
      if (graph.variable_dims.count(joint_torque_key(i))) {
        extra[joint_torque_key(i)] = Eigen::VectorXd::Constant(1, res.state.tau[i - 1]);
      }
    }
    graph = condition(graph, extra);
    res.dag = symbolic_eliminate(graph, order_colamd_like(graph));
    res.solution = back_substitute(res.dag);
    return res;
  }
  return solve_with_ordering(p, make_ordering(problem_graph(p), ordering));
}

Eigen::VectorXd rnea_oracle(const RobotModel& model_in, const Eigen::VectorXd& q,
                            const Eigen::VectorXd& qd, const Eigen::VectorXd& qdd,
                            const Vec3& gravity, const Wrench& tool_wrench) {
  const int n = model_in.dof();
  RobotModel model = model_in;
  model.base_acceleration = gravity_base_acceleration(gravity);
  model.tool_wrench = tool_wrench;

  std::vector<Mat6> x(static_cast<size_t>(n));  // Ad_{T_{i,i-1}}
  std::vector<Vec6> v(static_cast<size_t>(n)), a(static_cast<size_t>(n));
  Vec6 v_prev = Vec6::Zero();
  Vec6 a_prev = model.base_acceleration.vec;
  for (int i = 1; i <= n; ++i) {
    const Joint& joint = model.joints[static_cast<size_t>(i - 1)];
    x[i - 1] = adjoint(model.parent_to_child(i, q[i - 1]).inverse());
    v[i - 1] = x[i - 1] * v_prev + joint.axis.axis * qd[i - 1];
    a[i - 1] = x[i - 1] * a_prev + ad(Twist(v[i - 1])) * joint.axis.axis * qd[i - 1] +
               joint.axis.axis * qdd[i - 1];
    v_prev = v[i - 1];
    a_prev = a[i - 1];
  }

  Eigen::VectorXd tau(n);
  Vec6 f_next = adjoint(model.tool_offset.inverse()).transpose() * model.tool_wrench.vec;
  Mat6 x_next = Mat6::Identity();
  bool tool = true;
  for (int i = n; i >= 1; --i) {
    const Mat6& g = model.links[static_cast<size_t>(i - 1)].inertia.matrix;
    Vec6 f = (tool ? f_next : x_next.transpose() * f_next) + g * a[i - 1] -
             ad(Twist(v[i - 1])).transpose() * (g * v[i - 1]);
    tau[i - 1] = model.joints[static_cast<size_t>(i - 1)].axis.axis.dot(f);
    f_next = f;
    x_next = x[i - 1];
    tool = false;
  }
  return tau;
}

Eigen::MatrixXd crba_oracle(const RobotModel& model, const Eigen::VectorXd& q) {
  const int n = model.dof();
  std::vector<Mat6> x(static_cast<size_t>(n));
  for (int i = 1; i <= n; ++i) {
    x[i - 1] = adjoint(model.parent_to_child(i, q[i - 1]).inverse());
  }
  // Composite inertias, tip to base.
  std::vector<Mat6> composite(static_cast<size_t>(n));
  for (int i = n; i >= 1; --i) {
    composite[i - 1] = model.links[static_cast<size_t>(i - 1)].inertia.matrix;
    if (i < n) {
      composite[i - 1] += x[i].transpose() * composite[i] * x[i];
    }
  }
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i <= n; ++i) {
    Vec6 f = composite[i - 1] * model.joints[static_cast<size_t>(i - 1)].axis.axis;
    m(i - 1, i - 1) = model.joints[static_cast<size_t>(i - 1)].axis.axis.dot(f);
    for (int j = i - 1; j >= 1; --j) {
      f = x[j].transpose() * f;  // move the wrench one frame towards the base
      m(j - 1, i - 1) = model.joints[static_cast<size_t>(j - 1)].axis.axis.dot(f);
      m(i - 1, j - 1) = m(j - 1, i - 1);
    }
  }
  return m;
}

Eigen::VectorXd crba_forward(const RobotModel& model, const Eigen::VectorXd& q,
                             const Eigen::VectorXd& qd, const Eigen::VectorXd& tau,
                             const Vec3& gravity, const Wrench& tool_wrench) {
  const Eigen::VectorXd bias =
      rnea_oracle(model, q, qd, Eigen::VectorXd::Zero(model.dof()), gravity, tool_wrench);
  const Eigen::MatrixXd m = crba_oracle(model, q);
  return m.ldlt().solve(tau - bias);
}

Eigen::VectorXd aba_oracle(const RobotModel& model_in, const Eigen::VectorXd& q,
                           const Eigen::VectorXd& qd, const Eigen::VectorXd& tau,
                           const Vec3& gravity, const Wrench& tool_wrench) {
  const int n = model_in.dof();
  RobotModel model = model_in;
  model.base_acceleration = gravity_base_acceleration(gravity);
  model.tool_wrench = tool_wrench;

  std::vector<Mat6> x(static_cast<size_t>(n));
  std::vector<Vec6> v(static_cast<size_t>(n)), c(static_cast<size_t>(n));
  Vec6 v_prev = Vec6::Zero();
  for (int i = 1; i <= n; ++i) {
    const Vec6& s = model.joints[static_cast<size_t>(i - 1)].axis.axis;
    x[i - 1] = adjoint(model.parent_to_child(i, q[i - 1]).inverse());
    v[i - 1] = x[i - 1] * v_prev + s * qd[i - 1];
    c[i - 1] = ad(Twist(v[i - 1])) * s * qd[i - 1];
    v_prev = v[i - 1];
  }

  // Inward sweep: articulated inertias and bias wrenches. Child contributions
  // land on the parent before the parent is processed.
  std::vector<Mat6> ia(static_cast<size_t>(n));
  std::vector<Vec6> pa(static_cast<size_t>(n));
  for (int i = n; i >= 1; --i) {
    const Mat6& g = model.links[static_cast<size_t>(i - 1)].inertia.matrix;
    ia[i - 1] = g;
    pa[i - 1] = -ad(Twist(v[i - 1])).transpose() * (g * v[i - 1]);
    if (i == n) {
      pa[i - 1] += adjoint(model.tool_offset.inverse()).transpose() * model.tool_wrench.vec;
    }
  }
  for (int i = n; i >= 2; --i) {
    const Vec6& s = model.joints[static_cast<size_t>(i - 1)].axis.axis;
    const Vec6 u = ia[i - 1] * s;
    const double dd = s.dot(u);
    const double uu = tau[i - 1] - s.dot(pa[i - 1]);
    const Mat6 ia_proj = ia[i - 1] - u * (u.transpose() / dd);
    const Vec6 pa_proj = pa[i - 1] + ia_proj * c[i - 1] + u * (uu / dd);
    ia[i - 2] += x[i - 1].transpose() * ia_proj * x[i - 1];
    pa[i - 2] += x[i - 1].transpose() * pa_proj;
  }

  Eigen::VectorXd qdd(n);
  Vec6 a_prev = model.base_acceleration.vec;
  for (int i = 1; i <= n; ++i) {
    const Vec6& s = model.joints[static_cast<size_t>(i - 1)].axis.axis;
    const Vec6 u = ia[i - 1] * s;
    const double dd = s.dot(u);
    const double uu = tau[i - 1] - s.dot(pa[i - 1]);
    const Vec6 a_in = x[i - 1] * a_prev + c[i - 1];
    qdd[i - 1] = (uu - u.dot(a_in)) / dd;
    a_prev = a_in + s * qdd[i - 1];
  }
  return qdd;
}

JointState featherstone_hybrid_oracle(const DynamicsProblem& p) {
  const int n = p.model.dof();
  // Pass 1: inverse dynamics with the given accelerations on the
  // inverse-dynamics joints and zero on the forward-dynamics joints.
  Eigen::VectorXd qdd0 = Eigen::VectorXd::Zero(n);
  std::vector<int> fd_joints;
  for (int i = 0; i < n; ++i) {
    if (p.state.qdd_known[static_cast<size_t>(i)]) {
      qdd0[i] = p.state.qdd[i];
    } else {
      fd_joints.push_back(i);
    }
  }
  const Eigen::VectorXd tau0 =
      rnea_oracle(p.model, p.state.q, p.state.qd, qdd0, p.gravity, p.tool_wrench);

  // Pass 2: forward solve of the residual torques on the FD-joint submatrix.
  JointState out = p.state;
  if (!fd_joints.empty()) {
    const Eigen::MatrixXd m = crba_oracle(p.model, p.state.q);
    const int k = static_cast<int>(fd_joints.size());
    Eigen::MatrixXd m_ff(k, k);
    Eigen::VectorXd rhs(k);
    for (int a = 0; a < k; ++a) {
      rhs[a] = p.state.tau[fd_joints[static_cast<size_t>(a)]] -
               tau0[fd_joints[static_cast<size_t>(a)]];
      for (int b = 0; b < k; ++b) {
        m_ff(a, b) = m(fd_joints[static_cast<size_t>(a)], fd_joints[static_cast<size_t>(b)]);
      }
    }
    const auto ldlt = m_ff.ldlt();
    Eigen::VectorXd qdd_f = ldlt.solve(rhs);
    qdd_f += ldlt.solve(rhs - m_ff * qdd_f);  // refinement for stiff submatrices
    for (int a = 0; a < k; ++a) {
      out.qdd[fd_joints[static_cast<size_t>(a)]] = qdd_f[a];
    }
  }

  // Pass 3: final inverse pass with the complete accelerations.
  const Eigen::VectorXd tau_full =
      rnea_oracle(p.model, p.state.q, p.state.qd, out.qdd, p.gravity, p.tool_wrench);
  for (int i = 0; i < n; ++i) {
    if (!p.state.tau_known[static_cast<size_t>(i)]) out.tau[i] = tau_full[i];
    out.qdd_known[static_cast<size_t>(i)] = true;
    out.tau_known[static_cast<size_t>(i)] = true;
  }
  return out;
}

double kinetic_energy(const RobotModel& model, const Eigen::VectorXd& q,
                      const Eigen::VectorXd& qd) {
  const std::vector<Twist> twists = compute_twists(model, q, qd);
  double ke = 0;
  for (int i = 0; i < model.dof(); ++i) {
    const Vec6& v = twists[static_cast<size_t>(i)].vec;
    ke += 0.5 * v.dot(model.links[static_cast<size_t>(i)].inertia.matrix * v);
  }
  return ke;
}

}  // namespace dynfg
