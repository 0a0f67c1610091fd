// Acceptance suite: one pass/fail line per criterion, exit 0 iff all pass.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "dynfg/kinoplan.hpp"

using namespace dynfg;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail = "") {
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << number << ": " << name;
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << "\n";
  if (!pass) ++failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

RobotModel make_chain(int n) {
  RobotModel model;
  for (int i = 0; i < n; ++i) {
    Link link;
    link.name = "l" + std::to_string(i + 1);
    link.inertia = SpatialInertia::FromMassInertia(1.0, 0.01 * Mat3::Identity());
    model.links.push_back(link);
    Joint joint;
    joint.name = "j" + std::to_string(i + 1);
    joint.kind = JointKind::Revolute;
    joint.axis = ScrewAxis::Revolute(Vec3::UnitZ());
    joint.offset = Pose::FromTranslation(Vec3(1, 0, 0));
    joint.lower_limit = -3.1;
    joint.upper_limit = 3.1;
    model.joints.push_back(joint);
  }
  return model;
}

Eigen::VectorXd rand_vec(int n, std::mt19937& gen, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = dist(gen);
  return v;
}

DynamicsProblem inverse_problem(const RobotModel& m, const Eigen::VectorXd& q,
                                const Eigen::VectorXd& qd, const Eigen::VectorXd& qdd,
                                const Vec3& gravity) {
  DynamicsProblem p;
  p.model = m;
  p.state = JointState::Zero(m.dof());
  p.state.q = q;
  p.state.qd = qd;
  p.state.qdd = qdd;
  p.state.qdd_known.assign(static_cast<size_t>(m.dof()), true);
  p.state.tau_known.assign(static_cast<size_t>(m.dof()), false);
  p.gravity = gravity;
  return p;
}

DynamicsProblem forward_problem(const RobotModel& m, const Eigen::VectorXd& q,
                                const Eigen::VectorXd& qd, const Eigen::VectorXd& tau,
                                const Vec3& gravity) {
  DynamicsProblem p;
  p.model = m;
  p.state = JointState::Zero(m.dof());
  p.state.q = q;
  p.state.qd = qd;
  p.state.tau = tau;
  p.state.qdd_known.assign(static_cast<size_t>(m.dof()), false);
  p.state.tau_known.assign(static_cast<size_t>(m.dof()), true);
  p.gravity = gravity;
  return p;
}

std::vector<RobotModel> test_robots() {
  std::vector<RobotModel> robots = {make_chain(1), make_chain(2), make_chain(3)};
  robots.push_back(load_urdf_file(std::string(DYNFG_DATA_DIR) + "/puma6.urdf"));
  return robots;
}

// --- criterion 1 ---------------------------------------------------------
void criterion_1() {
  const auto t0 = Clock::now();
  std::mt19937 gen(1001);
  double worst = 0;
  for (const RobotModel& m : test_robots()) {
    const int n = m.dof();
    for (int trial = 0; trial < 250; ++trial) {
      const Eigen::VectorXd q = rand_vec(n, gen, -M_PI, M_PI);
      const Eigen::VectorXd qd = rand_vec(n, gen);
      const Eigen::VectorXd qdd = rand_vec(n, gen);
      const auto res = inverse_dynamics(inverse_problem(m, q, qd, qdd, Vec3(0, 0, -9.81)));
      const Eigen::VectorXd tau = rnea_oracle(m, q, qd, qdd, Vec3(0, 0, -9.81));
      worst = std::max(worst, (res.state.tau - tau).lpNorm<Eigen::Infinity>());
    }
  }
  const double elapsed = seconds_since(t0);
  std::ostringstream d;
  d << "max |dtau| = " << worst << ", " << elapsed << " s";
  report(1, "inverse dynamics equals RNEA oracle to 1e-10 over 1000 states",
         worst < 1e-10 && elapsed < 10.0, d.str());
}

// --- criterion 2 ---------------------------------------------------------
void criterion_2() {
  const auto t0 = Clock::now();
  std::mt19937 gen(1002);
  double worst = 0;
  for (const RobotModel& m : test_robots()) {
    const int n = m.dof();
    for (int trial = 0; trial < 250; ++trial) {
      const Eigen::VectorXd q = rand_vec(n, gen, -M_PI, M_PI);
      const Eigen::VectorXd qd = rand_vec(n, gen);
      const Eigen::VectorXd tau = rand_vec(n, gen, -5, 5);
      const auto fg = forward_dynamics(forward_problem(m, q, qd, tau, Vec3(0, 0, -9.81)));
      const Eigen::VectorXd aba = aba_oracle(m, q, qd, tau, Vec3(0, 0, -9.81));
      const Eigen::VectorXd crba = crba_forward(m, q, qd, tau, Vec3(0, 0, -9.81));
      worst = std::max({worst, (fg.state.qdd - aba).lpNorm<Eigen::Infinity>(),
                        (fg.state.qdd - crba).lpNorm<Eigen::Infinity>(),
                        (aba - crba).lpNorm<Eigen::Infinity>()});
    }
  }
  const double elapsed = seconds_since(t0);
  std::ostringstream d;
  d << "max |dqdd| = " << worst << ", " << elapsed << " s";
  report(2, "forward dynamics, ABA, CRBA mutually agree to 1e-8 over 1000 states",
         worst < 1e-8 && elapsed < 20.0, d.str());
}

// --- criterion 3 ---------------------------------------------------------
void criterion_3() {
  std::mt19937 gen(1003);
  const RobotModel r3 = make_chain(3);
  const RobotModel puma = load_urdf_file(std::string(DYNFG_DATA_DIR) + "/puma6.urdf");
  double worst = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const RobotModel& m = (trial % 2 == 0) ? r3 : puma;
    const int n = m.dof();
    const Eigen::VectorXd q = rand_vec(n, gen, -M_PI, M_PI);
    const Eigen::VectorXd qd = rand_vec(n, gen);

    const Eigen::VectorXd tau = rand_vec(n, gen, -5, 5);
    const auto fwd = forward_dynamics(forward_problem(m, q, qd, tau, Vec3(0, 0, -9.81)));
    const auto back =
        inverse_dynamics(inverse_problem(m, q, qd, fwd.state.qdd, Vec3(0, 0, -9.81)));
    worst = std::max(worst, (back.state.tau - tau).lpNorm<Eigen::Infinity>());

    const Eigen::VectorXd qdd = rand_vec(n, gen, -5, 5);
    const auto inv = inverse_dynamics(inverse_problem(m, q, qd, qdd, Vec3(0, 0, -9.81)));
    const auto fwd2 =
        forward_dynamics(forward_problem(m, q, qd, inv.state.tau, Vec3(0, 0, -9.81)));
    worst = std::max(worst, (fwd2.state.qdd - qdd).lpNorm<Eigen::Infinity>());
  }
  std::ostringstream d;
  d << "max round-trip error = " << worst;
  report(3, "inverse/forward round-trips to 1e-8 over 500 states each", worst < 1e-8, d.str());
}

// --- criterion 4 ---------------------------------------------------------
void criterion_4() {
  std::mt19937 gen(1004);
  double worst = 0;
  for (const RobotModel& m : {make_chain(3),
                              load_urdf_file(std::string(DYNFG_DATA_DIR) + "/puma6.urdf")}) {
    const int n = m.dof();
    for (int trial = 0; trial < 10; ++trial) {
      const Eigen::VectorXd q = rand_vec(n, gen, -M_PI, M_PI);
      const Eigen::VectorXd qd = rand_vec(n, gen);

      auto p_inv = inverse_problem(m, q, qd, rand_vec(n, gen), Vec3(0, 0, -9.81));
      const Eigen::VectorXd tau_ref = inverse_dynamics(p_inv, OrderingTag::Rnea).state.tau;
      for (OrderingTag tag : {OrderingTag::MinDegree, OrderingTag::ColamdLike,
                              OrderingTag::NestedDissection, OrderingTag::ReverseIndex}) {
        worst = std::max(worst, (inverse_dynamics(p_inv, tag).state.tau - tau_ref)
                                    .lpNorm<Eigen::Infinity>());
      }

      auto p_fwd = forward_problem(m, q, qd, rand_vec(n, gen, -5, 5), Vec3(0, 0, -9.81));
      const Eigen::VectorXd qdd_ref = forward_dynamics(p_fwd, OrderingTag::Aba).state.qdd;
      for (OrderingTag tag : {OrderingTag::Crba, OrderingTag::MinDegree, OrderingTag::ColamdLike,
                              OrderingTag::NestedDissection, OrderingTag::ReverseIndex}) {
        worst = std::max(worst, (forward_dynamics(p_fwd, tag).state.qdd - qdd_ref)
                                    .lpNorm<Eigen::Infinity>());
      }

      DynamicsProblem p_hyb;
      p_hyb.model = m;
      p_hyb.state = JointState::Zero(n);
      p_hyb.state.q = q;
      p_hyb.state.qd = qd;
      p_hyb.state.qdd_known.assign(static_cast<size_t>(n), false);
      p_hyb.state.tau_known.assign(static_cast<size_t>(n), false);
      for (int i = 0; i < n; ++i) {
        if (i % 2 == 0) {
          p_hyb.state.qdd_known[static_cast<size_t>(i)] = true;
          p_hyb.state.qdd[i] = rand_vec(1, gen)[0];
        } else {
          p_hyb.state.tau_known[static_cast<size_t>(i)] = true;
          p_hyb.state.tau[i] = rand_vec(1, gen, -5, 5)[0];
        }
      }
      const auto hyb_ref = hybrid_dynamics(p_hyb, HybridMethod::Elimination,
                                           OrderingTag::MinDegree);
      for (OrderingTag tag : {OrderingTag::ColamdLike, OrderingTag::NestedDissection,
                              OrderingTag::ReverseIndex}) {
        const auto hyb = hybrid_dynamics(p_hyb, HybridMethod::Elimination, tag);
        worst = std::max({worst,
                          (hyb.state.tau - hyb_ref.state.tau).lpNorm<Eigen::Infinity>(),
                          (hyb.state.qdd - hyb_ref.state.qdd).lpNorm<Eigen::Infinity>()});
      }
    }
  }
  std::ostringstream d;
  d << "max cross-ordering deviation = " << worst;
  report(4, "solutions invariant across orderings to 1e-9", worst < 1e-9, d.str());
}

// --- criterion 5 ---------------------------------------------------------
void criterion_5() {
  const RobotModel m = make_chain(3);
  std::mt19937 gen(1005);
  std::map<VariableKey, Eigen::VectorXd> known;
  for (int i = 1; i <= 3; ++i) known[joint_accel_key(i)] = rand_vec(1, gen);
  const DynFactorGraph g =
      condition(build_dynamics_graph(m, rand_vec(3, gen, -M_PI, M_PI), rand_vec(3, gen)), known);
  const EliminationDag dag = symbolic_eliminate(g, order_rnea(g));

  bool ok = dag.nodes.size() == 9;
  std::map<VariableKey, std::vector<VariableKey>> parents;
  for (const auto& node : dag.nodes) parents[node.variable] = node.parents;
  for (int i = 1; i <= 3 && ok; ++i) {
    ok = parents.at(joint_torque_key(i)) == std::vector<VariableKey>{wrench_key(i)};
  }
  ok = ok && parents.at(wrench_key(3)) == std::vector<VariableKey>{twist_accel_key(3)};
  for (int i = 1; i <= 2 && ok; ++i) {
    ok = parents.at(wrench_key(i)) ==
         std::vector<VariableKey>{twist_accel_key(i), wrench_key(i + 1)};
  }
  ok = ok && parents.at(twist_accel_key(1)).empty();
  for (int i = 2; i <= 3 && ok; ++i) {
    ok = parents.at(twist_accel_key(i)) == std::vector<VariableKey>{twist_accel_key(i - 1)};
  }

  const std::string dot = export_dag_dot(dag);
  std::ifstream golden_in(std::string(DYNFG_DATA_DIR) + "/golden/rnea_dag_3r.dot");
  std::stringstream golden;
  golden << golden_in.rdbuf();
  const bool golden_ok = golden_in.good() && golden.str() == dot;
  report(5, "3R RNEA DAG parent sets and golden DOT file", ok && golden_ok,
         ok ? (golden_ok ? "structure and DOT match" : "DOT differs from golden file")
            : "parent sets differ");
}

// --- criterion 6 ---------------------------------------------------------
void criterion_6() {
  std::mt19937 gen(1006);
  bool ok = true;
  for (int n = 3; n <= 8; ++n) {
    const RobotModel m = make_chain(n);
    std::map<VariableKey, Eigen::VectorXd> known;
    for (int i = 1; i <= n; ++i) known[joint_torque_key(i)] = rand_vec(1, gen);
    const DynFactorGraph g = condition(
        build_dynamics_graph(m, rand_vec(n, gen, -M_PI, M_PI), rand_vec(n, gen)), known);
    ok = ok && symbolic_fill(g, order_aba(g).sequence) < symbolic_fill(g, order_crba(g).sequence);
  }
  {
    const RobotModel m = load_urdf_file(std::string(DYNFG_DATA_DIR) + "/puma6.urdf");
    std::map<VariableKey, Eigen::VectorXd> known;
    for (int i = 1; i <= 6; ++i) known[joint_accel_key(i)] = rand_vec(1, gen);
    const DynFactorGraph g = condition(
        build_dynamics_graph(m, rand_vec(6, gen, -M_PI, M_PI), rand_vec(6, gen)), known);
    ok = ok && symbolic_fill(g, order_colamd_like(g).sequence) <=
                   symbolic_fill(g, order_rnea(g).sequence);
  }
  report(6, "fill trends: ABA < CRBA (n=3..8), colamd_like <= RNEA on 6R inverse", ok);
}

// --- criterion 7 ---------------------------------------------------------
void criterion_7() {
  std::mt19937 gen(1007);
  double worst = 0;

  // Reference 3R configuration: qdd_1 known, tau_2 and tau_3 known.
  const RobotModel r3 = make_chain(3);
  {
    DynamicsProblem p;
    p.model = r3;
    p.state = JointState::Zero(3);
    p.state.q = rand_vec(3, gen, -M_PI, M_PI);
    p.state.qd = rand_vec(3, gen);
    p.state.qdd[0] = 0.7;
    p.state.tau[1] = -1.1;
    p.state.tau[2] = 0.4;
    p.state.qdd_known = {true, false, false};
    p.state.tau_known = {false, true, true};
    const auto elim = hybrid_dynamics(p, HybridMethod::Elimination);
    const JointState feather = featherstone_hybrid_oracle(p);
    worst = std::max({worst, (elim.state.tau - feather.tau).lpNorm<Eigen::Infinity>(),
                      (elim.state.qdd - feather.qdd).lpNorm<Eigen::Infinity>()});
  }

  const RobotModel puma = load_urdf_file(std::string(DYNFG_DATA_DIR) + "/puma6.urdf");
  for (int trial = 0; trial < 200; ++trial) {
    const RobotModel& m = (trial % 2 == 0) ? r3 : puma;
    const int n = m.dof();
    DynamicsProblem p;
    p.model = m;
    p.state = JointState::Zero(n);
    p.state.q = rand_vec(n, gen, -M_PI, M_PI);
    p.state.qd = rand_vec(n, gen);
    p.state.qdd_known.assign(static_cast<size_t>(n), false);
    p.state.tau_known.assign(static_cast<size_t>(n), false);
    for (int i = 0; i < n; ++i) {
      if (gen() % 2 == 0) {
        p.state.qdd_known[static_cast<size_t>(i)] = true;
        p.state.qdd[i] = rand_vec(1, gen, -5, 5)[0];
      } else {
        p.state.tau_known[static_cast<size_t>(i)] = true;
        p.state.tau[i] = rand_vec(1, gen, -5, 5)[0];
      }
    }
    const auto elim = hybrid_dynamics(p, HybridMethod::Elimination);
    const JointState feather = featherstone_hybrid_oracle(p);
    worst = std::max({worst, (elim.state.tau - feather.tau).lpNorm<Eigen::Infinity>(),
                      (elim.state.qdd - feather.qdd).lpNorm<Eigen::Infinity>()});
  }
  std::ostringstream d;
  d << "max deviation = " << worst;
  report(7, "hybrid elimination equals three-pass oracle to 1e-9 (3R config + 200 patterns)",
         worst < 1e-9, d.str());
}

// --- criterion 8 ---------------------------------------------------------
void criterion_8() {
  std::mt19937 gen(1008);
  const RobotModel m = make_chain(2);
  std::map<VariableKey, Eigen::VectorXd> known;
  for (int i = 1; i <= 2; ++i) known[joint_accel_key(i)] = rand_vec(1, gen);
  const DynFactorGraph g = condition(
      build_dynamics_graph(m, rand_vec(2, gen, -M_PI, M_PI), rand_vec(2, gen)), known);

  std::vector<VariableKey> keys;
  for (const auto& [key, dim] : g.variable_dims) keys.push_back(key);
  std::sort(keys.begin(), keys.end());
  int brute = 1 << 30;
  do {
    brute = std::min(brute, symbolic_fill(g, keys));
  } while (std::next_permutation(keys.begin(), keys.end()));

  // Minimum fill across the shipped orderings, as the bench harness reports.
  int shipped = 1 << 30;
  for (OrderingTag tag : {OrderingTag::Rnea, OrderingTag::MinDegree, OrderingTag::ColamdLike,
                          OrderingTag::NestedDissection, OrderingTag::ReverseIndex}) {
    shipped = std::min(shipped, symbolic_fill(g, make_ordering(g, tag).sequence));
  }
  std::ostringstream d;
  d << "brute force " << brute << ", best shipped ordering " << shipped;
  report(8, "exhaustive 2R ordering search matches the reported minimum fill",
         keys.size() == 6 && brute == shipped, d.str());
}

// --- criterion 9 ---------------------------------------------------------
void criterion_9() {
  const RobotModel pend = load_urdf_file(std::string(DYNFG_DATA_DIR) + "/pend.urdf");
  const auto hold = inverse_dynamics(inverse_problem(pend, Eigen::VectorXd::Zero(1),
                                                     Eigen::VectorXd::Zero(1),
                                                     Eigen::VectorXd::Zero(1),
                                                     Vec3(0, 0, -9.81)));
  const bool mgl_ok = std::abs(hold.state.tau[0] - 9.81) < 1e-9;

  // Power balance along a 1 s gravity-free 3R trajectory (RK4, dt = 1e-3),
  // checking tau' qd against a central difference of the kinetic energy.
  const RobotModel m = make_chain(3);
  Eigen::VectorXd q = (Eigen::VectorXd(3) << 0.3, -0.2, 0.5).finished();
  Eigen::VectorXd qd = (Eigen::VectorXd(3) << 0.4, 0.1, -0.3).finished();
  const auto tau_of = [](double t) {
    return (Eigen::VectorXd(3) << std::sin(t), 0.5 * std::cos(2 * t), -0.2).finished();
  };
  const auto accel = [&](const Eigen::VectorXd& qq, const Eigen::VectorXd& vv, double t) {
    return aba_oracle(m, qq, vv, tau_of(t), Vec3::Zero());
  };
  const double h = 1e-3;
  double worst_rel = 0;
  for (int step = 0; step < 1000; ++step) {
    const double t = step * h;
    if (step % 50 == 0) {
      const Eigen::VectorXd qdd = accel(q, qd, t);
      const double power = tau_of(t).dot(qd);
      const double eps = 1e-6;
      const double dke = (kinetic_energy(m, q + eps * qd, qd + eps * qdd) -
                          kinetic_energy(m, q - eps * qd, qd - eps * qdd)) /
                         (2 * eps);
      worst_rel = std::max(worst_rel,
                           std::abs(dke - power) / std::max(1.0, std::abs(power)));
    }
    const Eigen::VectorXd k1q = qd, k1v = accel(q, qd, t);
    const Eigen::VectorXd k2q = qd + 0.5 * h * k1v,
                          k2v = accel(q + 0.5 * h * k1q, qd + 0.5 * h * k1v, t + 0.5 * h);
    const Eigen::VectorXd k3q = qd + 0.5 * h * k2v,
                          k3v = accel(q + 0.5 * h * k2q, qd + 0.5 * h * k2v, t + 0.5 * h);
    const Eigen::VectorXd k4q = qd + h * k3v, k4v = accel(q + h * k3q, qd + h * k3v, t + h);
    q += h / 6 * (k1q + 2 * k2q + 2 * k3q + k4q);
    qd += h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
  }
  std::ostringstream d;
  d << "pendulum tau = " << hold.state.tau[0] << ", worst power-balance rel err = " << worst_rel;
  report(9, "pendulum holding torque m*g*l to 1e-9 and power balance to 1e-4",
         mgl_ok && worst_rel < 1e-4, d.str());
}

// --- criterion 10 --------------------------------------------------------
double jacobian_error(const NonlinearFactor& factor, const std::map<VariableKey, int>& dims,
                      Values values, double h = 1e-6) {
  const auto jac = factor.jacobians(values);
  double worst = 0;
  for (const VariableKey& key : factor.keys()) {
    const int d = dims.at(key);
    Eigen::MatrixXd fd(factor.residual(values).size(), d);
    for (int c = 0; c < d; ++c) {
      const double saved = values[key][c];
      values[key][c] = saved + h;
      const Eigen::VectorXd hi = factor.residual(values);
      values[key][c] = saved - h;
      const Eigen::VectorXd lo = factor.residual(values);
      values[key][c] = saved;
      fd.col(c) = (hi - lo) / (2 * h);
    }
    const double scale = std::max(1.0, fd.norm());
    worst = std::max(worst, (jac.at(key) - fd).norm() / scale);
  }
  return worst;
}

void criterion_10() {
  RobotModel model = make_cartpole();
  model.joints[0].lower_limit = -2.0;
  model.joints[0].upper_limit = 2.0;
  model.joints[1].lower_limit = -4.0;
  model.joints[1].upper_limit = 4.0;
  PlanConfig cfg;
  cfg.horizon = 3;
  cfg.dt = 0.1;
  cfg.min_torque = true;
  cfg.sigma_tau = 2.0;
  cfg.joint_limits = true;
  cfg.actuated = {true, false};
  cfg.initial_q = Eigen::VectorXd::Zero(2);
  const PlanGraph graph = build_plan_graph(model, cfg);

  std::mt19937 gen(1010);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  double worst = 0;
  int points = 0;
  while (points < 100) {
    Values values;
    for (const auto& [key, d] : graph.variable_dims) {
      Eigen::VectorXd x(d);
      for (int i = 0; i < d; ++i) x[i] = dist(gen);
      values[key] = x;
    }
    bool near_kink = false;
    for (int i = 1; i <= 2 && !near_kink; ++i) {
      for (int k = 0; k < cfg.horizon && !near_kink; ++k) {
        const double qv = values.at(plan_state_key(k))[i - 1];
        const Joint& joint = model.joints[static_cast<size_t>(i - 1)];
        if (std::abs(qv - (joint.lower_limit + cfg.hinge_eps)) < 1e-3 ||
            std::abs(qv - (joint.upper_limit - cfg.hinge_eps)) < 1e-3) {
          near_kink = true;
        }
      }
    }
    if (near_kink) continue;
    ++points;
    for (const auto& factor : graph.factors) {
      worst = std::max(worst, jacobian_error(*factor, graph.variable_dims, values));
    }
  }
  std::ostringstream d;
  d << "max relative Jacobian error = " << worst;
  report(10, "plan factor Jacobians match central differences to 1e-5 at 100 points",
         worst < 1e-5, d.str());
}

// --- criterion 11 --------------------------------------------------------
PlanConfig cartpole_config() {
  PlanConfig cfg;
  cfg.horizon = 201;
  cfg.dt = 0.05;
  cfg.gp_prior = true;
  cfg.q_c_scale = 100.0;
  cfg.hard_weight = 1e6;
  cfg.actuated = {true, false};
  cfg.initial_q = Eigen::VectorXd::Zero(2);
  GoalSpec g1;
  g1.step = 60;  // t = 3 s
  g1.q_target = (Eigen::VectorXd(2) << 1.0, M_PI).finished();
  g1.position_weight = 1000;
  g1.velocity_weight = 1000;
  GoalSpec g2 = g1;
  g2.step = 120;  // t = 6 s
  g2.q_target = (Eigen::VectorXd(2) << -1.0, -M_PI).finished();
  cfg.goals = {g1, g2};
  return cfg;
}

void criterion_11() {
  const auto t0 = Clock::now();
  const RobotModel model = make_cartpole();
  const PlanConfig cfg = cartpole_config();
  const PlanGraph graph = build_plan_graph(model, cfg);
  OptimizeOptions opts;
  OptimizeReport rep;
  const Values solution =
      optimize(graph, warm_start_trajectory(graph, initialize_trajectory(graph)), opts, &rep);
  const double elapsed = seconds_since(t0);
  const Trajectory traj = extract_trajectory(graph, solution);

  bool goals_ok = true;
  for (const GoalSpec& goal : cfg.goals) {
    goals_ok = goals_ok &&
               (traj.q.row(goal.step).transpose() - goal.q_target).cwiseAbs().maxCoeff() < 0.01 &&
               traj.qd.row(goal.step).cwiseAbs().maxCoeff() < 0.01;
  }
  const double max_tau_pole = traj.tau.col(1).cwiseAbs().maxCoeff();
  std::ostringstream d;
  d << rep.iterations << " iterations, " << elapsed << " s, max |tau_pole| = " << max_tau_pole;
  report(11, "cart-pole two-goal plan converges <= 500 iters, goals within 0.01, < 60 s",
         rep.converged && rep.iterations <= 500 && goals_ok && elapsed < 60.0 &&
             max_tau_pole < 1e-6,
         d.str());
}

// --- criterion 12 --------------------------------------------------------
void criterion_12() {
  const GpPriorParams p1 = GpPriorParams::Isotropic(1, 1.0);
  const auto [phi1, sigma1] = gp_transition(1.0, p1);
  Eigen::MatrixXd phi_expected(3, 3);
  phi_expected << 1, 1, 0.5, 0, 1, 1, 0, 0, 1;
  bool ok = (phi1 - phi_expected).norm() == 0.0;

  Eigen::MatrixXd sigma_expected(3, 3);
  sigma_expected << 0.5, 0.125, 1.0 / 6, 0.125, 1.0 / 3, 0.5, 1.0 / 6, 0.5, 1;
  ok = ok && (sigma1 - sigma_expected).norm() < 1e-15;

  // Semigroup to machine precision.
  const GpPriorParams p2 = GpPriorParams::Isotropic(2, 3.0);
  const auto [phi_a, sig_a] = gp_transition(0.3, p2);
  const auto [phi_b, sig_b] = gp_transition(0.45, p2);
  const auto [phi_ab, sig_ab] = gp_transition(0.75, p2);
  ok = ok && (phi_b * phi_a - phi_ab).norm() < 1e-14;

  // SPD over the dt range.
  for (double dt = 0.01; dt <= 2.0 + 1e-12; dt += 0.01) {
    const auto [phi, sigma] = gp_transition(dt, p2);
    ok = ok && sigma.llt().info() == Eigen::Success;
  }
  report(12, "GP kernel: printed Phi(1), semigroup, Sigma SPD on dt in [0.01, 2]", ok);
}

// --- criterion 13 --------------------------------------------------------
std::string deterministic_artifacts(unsigned seed) {
  std::ostringstream out;
  std::mt19937 gen(seed);

  // Solve artifacts over seeded random states.
  const RobotModel m = make_chain(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto res = inverse_dynamics(inverse_problem(m, rand_vec(3, gen, -M_PI, M_PI),
                                                      rand_vec(3, gen), rand_vec(3, gen),
                                                      Vec3(0, 0, -9.81)));
    out.precision(17);
    out << res.state.tau.transpose() << "\n";
  }

  // Graph and DAG exports.
  std::map<VariableKey, Eigen::VectorXd> known;
  for (int i = 1; i <= 3; ++i) known[joint_accel_key(i)] = rand_vec(1, gen);
  const DynFactorGraph g =
      condition(build_dynamics_graph(m, rand_vec(3, gen), rand_vec(3, gen)), known);
  out << export_graph_dot(g);
  out << export_dag_dot(symbolic_eliminate(g, order_rnea(g)));

  // Fill statistics (the timing columns of the bench CSV are excluded from
  // determinism by design; fill counts and frontal sizes are not).
  for (OrderingTag tag : {OrderingTag::Rnea, OrderingTag::MinDegree, OrderingTag::ColamdLike,
                          OrderingTag::NestedDissection, OrderingTag::ReverseIndex}) {
    const EliminationDag dag = symbolic_eliminate(g, make_ordering(g, tag));
    out << to_string(tag) << "," << dag.fill_edges() << "," << dag.max_frontal() << "\n";
  }

  // A small trajectory optimization.
  const RobotModel cartpole = make_cartpole();
  PlanConfig cfg = cartpole_config();
  cfg.horizon = 21;
  cfg.goals[0].step = 6;
  cfg.goals[1].step = 12;
  const PlanGraph graph = build_plan_graph(cartpole, cfg);
  OptimizeOptions opts;
  opts.max_iterations = 30;
  OptimizeReport rep;
  const Values sol = optimize(graph, initialize_trajectory(graph), opts, &rep);
  out << trajectory_csv(extract_trajectory(graph, sol));
  return out.str();
}

void criterion_13() {
  const std::string run1 = deterministic_artifacts(777);
  const std::string run2 = deterministic_artifacts(777);
  const size_t h1 = std::hash<std::string>{}(run1);
  const size_t h2 = std::hash<std::string>{}(run2);
  std::ostringstream d;
  d << "artifact hash " << std::hex << h1;
  report(13, "same-seed runs produce byte-identical artifacts", run1 == run2 && h1 == h2,
         d.str());
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  criterion_11();
  criterion_12();
  criterion_13();
  if (failures == 0) {
    std::cout << "ALL 13 CRITERIA PASSED\n";
    return 0;
  }
  std::cout << failures << " CRITERIA FAILED\n";
  return 1;
}
