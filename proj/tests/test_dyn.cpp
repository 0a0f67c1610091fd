#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dynfg/dyn.hpp"

using namespace dynfg;

namespace {

RobotModel r3() { return load_urdf_file(std::string(DYNFG_DATA_DIR) + "/r3.urdf"); }
RobotModel pend() { return load_urdf_file(std::string(DYNFG_DATA_DIR) + "/pend.urdf"); }
RobotModel puma() { return load_urdf_file(std::string(DYNFG_DATA_DIR) + "/puma6.urdf"); }

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

}  // namespace

TEST_CASE("inverse dynamics of a resting chain without gravity is torque free") {
  const RobotModel m = r3();
  const auto res = inverse_dynamics(inverse_problem(m, Eigen::VectorXd::Constant(3, 0.3),
                                                    Eigen::VectorXd::Zero(3),
                                                    Eigen::VectorXd::Zero(3), Vec3::Zero()));
  CHECK(res.state.tau.lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("pendulum holding torque is m g l") {
  const RobotModel m = pend();
  const auto res = inverse_dynamics(inverse_problem(m, Eigen::VectorXd::Zero(1),
                                                    Eigen::VectorXd::Zero(1),
                                                    Eigen::VectorXd::Zero(1),
                                                    Vec3(0, 0, -9.81)));
  CHECK(res.state.tau[0] == doctest::Approx(9.81).epsilon(1e-9));
}

TEST_CASE("inverse dynamics equals the dense stacked oracle") {
  const RobotModel m = r3();
  std::mt19937 gen(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = inverse_problem(m, rand_vec(3, gen, -M_PI, M_PI), rand_vec(3, gen),
                                   rand_vec(3, gen), Vec3::Zero());
    const auto res = inverse_dynamics(p);
    const Solution dense = solve_dense(problem_graph(p));
    for (int i = 0; i < 3; ++i) {
      CHECK(std::abs(res.state.tau[i] - dense.values.at(joint_torque_key(i + 1))[0]) < 1e-10);
    }
  }
}

TEST_CASE("inverse dynamics matches rnea_oracle on random states") {
  std::mt19937 gen(22);
  for (const RobotModel& m : {pend(), r3(), puma()}) {
    const int n = m.dof();
    for (int trial = 0; trial < 50; ++trial) {
      const Eigen::VectorXd q = rand_vec(n, gen, -M_PI, M_PI);
      const Eigen::VectorXd qd = rand_vec(n, gen);
      const Eigen::VectorXd qdd = rand_vec(n, gen);
      const auto res = inverse_dynamics(inverse_problem(m, q, qd, qdd, Vec3(0, 0, -9.81)));
      const Eigen::VectorXd tau = rnea_oracle(m, q, qd, qdd, Vec3(0, 0, -9.81));
      CHECK((res.state.tau - tau).lpNorm<Eigen::Infinity>() < 1e-10);
    }
  }
}

TEST_CASE("forward dynamics trivial case and pendulum free fall") {
  const RobotModel m = r3();
  const auto rest = forward_dynamics(forward_problem(m, Eigen::VectorXd::Constant(3, 0.2),
                                                     Eigen::VectorXd::Zero(3),
                                                     Eigen::VectorXd::Zero(3), Vec3::Zero()));
  CHECK(rest.state.qdd.lpNorm<Eigen::Infinity>() < 1e-12);

  const RobotModel p = pend();
  const auto fall = forward_dynamics(forward_problem(p, Eigen::VectorXd::Zero(1),
                                                     Eigen::VectorXd::Zero(1),
                                                     Eigen::VectorXd::Zero(1),
                                                     Vec3(0, 0, -9.81)));
  CHECK(fall.state.qdd[0] == doctest::Approx(-9.81).epsilon(1e-9));
}

TEST_CASE("forward and inverse dynamics are mutually inverse") {
  std::mt19937 gen(23);
  for (const RobotModel& m : {r3(), puma()}) {
    const int n = m.dof();
    for (int trial = 0; trial < 25; ++trial) {
      const Eigen::VectorXd q = rand_vec(n, gen, -M_PI, M_PI);
      const Eigen::VectorXd qd = rand_vec(n, gen);

      const Eigen::VectorXd tau = rand_vec(n, gen, -5, 5);
      const auto fwd = forward_dynamics(forward_problem(m, q, qd, tau, Vec3(0, 0, -9.81)));
      const auto back =
          inverse_dynamics(inverse_problem(m, q, qd, fwd.state.qdd, Vec3(0, 0, -9.81)));
      CHECK((back.state.tau - tau).lpNorm<Eigen::Infinity>() < 1e-8);

      const Eigen::VectorXd qdd = rand_vec(n, gen, -5, 5);
      const auto inv = inverse_dynamics(inverse_problem(m, q, qd, qdd, Vec3(0, 0, -9.81)));
      const auto fwd2 =
          forward_dynamics(forward_problem(m, q, qd, inv.state.tau, Vec3(0, 0, -9.81)));
      CHECK((fwd2.state.qdd - qdd).lpNorm<Eigen::Infinity>() < 1e-8);
    }
  }
}

TEST_CASE("forward dynamics agrees with ABA and CRBA oracles") {
  std::mt19937 gen(24);
  for (const RobotModel& m : {r3(), puma()}) {
    const int n = m.dof();
    for (int trial = 0; trial < 25; ++trial) {
      const Eigen::VectorXd q = rand_vec(n, gen, -M_PI, M_PI);
      const Eigen::VectorXd qd = rand_vec(n, gen);
      const Eigen::VectorXd tau = rand_vec(n, gen, -5, 5);
      const auto fg = forward_dynamics(forward_problem(m, q, qd, tau, Vec3(0, 0, -9.81)));
      const Eigen::VectorXd aba = aba_oracle(m, q, qd, tau, Vec3(0, 0, -9.81));
      const Eigen::VectorXd crba = crba_forward(m, q, qd, tau, Vec3(0, 0, -9.81));
      CHECK((fg.state.qdd - aba).lpNorm<Eigen::Infinity>() < 1e-8);
      CHECK((fg.state.qdd - crba).lpNorm<Eigen::Infinity>() < 1e-8);
      CHECK((aba - crba).lpNorm<Eigen::Infinity>() < 1e-8);
    }
  }
}

TEST_CASE("mass matrix properties") {
  const RobotModel p = pend();
  const Eigen::MatrixXd m1 = crba_oracle(p, Eigen::VectorXd::Zero(1));
  CHECK(m1(0, 0) == doctest::Approx(1.0).epsilon(1e-9));  // m l^2 = 1

  const RobotModel m = r3();
  std::mt19937 gen(25);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd q = rand_vec(3, gen, -M_PI, M_PI);
    const Eigen::MatrixXd mm = crba_oracle(m, q);
    CHECK((mm - mm.transpose()).norm() < 1e-12);
    CHECK(mm.llt().info() == Eigen::Success);
  }
}

TEST_CASE("mass matrix equals RNEA unit-acceleration columns") {
  std::mt19937 gen(26);
  for (const RobotModel& m : {r3(), puma()}) {
    const int n = m.dof();
    const Eigen::VectorXd q = rand_vec(n, gen, -M_PI, M_PI);
    const Eigen::MatrixXd mm = crba_oracle(m, q);
    Eigen::MatrixXd from_rnea(n, n);
    for (int j = 0; j < n; ++j) {
      from_rnea.col(j) = rnea_oracle(m, q, Eigen::VectorXd::Zero(n),
                                     Eigen::VectorXd::Unit(n, j), Vec3::Zero());
    }
    CHECK((mm - from_rnea).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("hybrid dynamics boundary cases collapse to the pure classes") {
  const RobotModel m = r3();
  std::mt19937 gen(27);
  const Eigen::VectorXd q = rand_vec(3, gen), qd = rand_vec(3, gen);

  auto p_inv = inverse_problem(m, q, qd, rand_vec(3, gen), Vec3(0, 0, -9.81));
  const auto hyb_inv = hybrid_dynamics(p_inv);
  const auto inv = inverse_dynamics(p_inv);
  CHECK((hyb_inv.state.tau - inv.state.tau).lpNorm<Eigen::Infinity>() < 1e-10);

  auto p_fwd = forward_problem(m, q, qd, rand_vec(3, gen), Vec3(0, 0, -9.81));
  const auto hyb_fwd = hybrid_dynamics(p_fwd);
  const auto fwd = forward_dynamics(p_fwd);
  CHECK((hyb_fwd.state.qdd - fwd.state.qdd).lpNorm<Eigen::Infinity>() < 1e-10);

  CHECK(p_inv.classify() == ProblemClass::Inverse);
  CHECK(p_fwd.classify() == ProblemClass::Forward);
}

TEST_CASE("hybrid elimination equals the three-pass Featherstone oracle") {
  // The reference configuration: qdd_1 known, tau_2 and tau_3 known.
  const RobotModel m = r3();
  std::mt19937 gen(28);
  for (int trial = 0; trial < 20; ++trial) {
    DynamicsProblem p;
    p.model = m;
    p.state = JointState::Zero(3);
    p.state.q = rand_vec(3, gen, -M_PI, M_PI);
    p.state.qd = rand_vec(3, gen);
    p.state.qdd[0] = rand_vec(1, gen)[0];
    p.state.tau[1] = rand_vec(1, gen, -5, 5)[0];
    p.state.tau[2] = rand_vec(1, gen, -5, 5)[0];
    p.state.qdd_known = {true, false, false};
    p.state.tau_known = {false, true, true};
    CHECK(p.classify() == ProblemClass::Hybrid);

    const auto elim = hybrid_dynamics(p, HybridMethod::Elimination);
    const JointState feather = featherstone_hybrid_oracle(p);
    const auto feather_full = hybrid_dynamics(p, HybridMethod::Featherstone);
    CHECK((elim.state.tau - feather.tau).lpNorm<Eigen::Infinity>() < 1e-9);
    CHECK((elim.state.qdd - feather.qdd).lpNorm<Eigen::Infinity>() < 1e-9);
    CHECK((feather_full.state.tau - feather.tau).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("hybrid dynamics over random known patterns") {
  std::mt19937 gen(29);
  for (const RobotModel& m : {r3(), puma()}) {
    const int n = m.dof();
    for (int trial = 0; trial < 20; ++trial) {
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
      CHECK((elim.state.tau - feather.tau).lpNorm<Eigen::Infinity>() < 1e-9);
      CHECK((elim.state.qdd - feather.qdd).lpNorm<Eigen::Infinity>() < 1e-9);
    }
  }
}

TEST_CASE("answers are identical under every applicable ordering") {
  const RobotModel m = r3();
  std::mt19937 gen(30);
  const Eigen::VectorXd q = rand_vec(3, gen, -M_PI, M_PI);
  const Eigen::VectorXd qd = rand_vec(3, gen);

  auto p_inv = inverse_problem(m, q, qd, rand_vec(3, gen), Vec3(0, 0, -9.81));
  const Eigen::VectorXd tau_ref = inverse_dynamics(p_inv, OrderingTag::Rnea).state.tau;
  for (OrderingTag tag : {OrderingTag::MinDegree, OrderingTag::ColamdLike,
                          OrderingTag::NestedDissection, OrderingTag::ReverseIndex}) {
    CHECK((inverse_dynamics(p_inv, tag).state.tau - tau_ref).lpNorm<Eigen::Infinity>() < 1e-9);
  }

  auto p_fwd = forward_problem(m, q, qd, rand_vec(3, gen), Vec3(0, 0, -9.81));
  const Eigen::VectorXd qdd_ref = forward_dynamics(p_fwd, OrderingTag::Aba).state.qdd;
  for (OrderingTag tag : {OrderingTag::Crba, OrderingTag::MinDegree, OrderingTag::ColamdLike,
                          OrderingTag::NestedDissection, OrderingTag::ReverseIndex}) {
    CHECK((forward_dynamics(p_fwd, tag).state.qdd - qdd_ref).lpNorm<Eigen::Infinity>() < 1e-9);
  }
}

TEST_CASE("power balance along a gravity-free trajectory") {
  const RobotModel m = r3();
  Eigen::VectorXd q = (Eigen::VectorXd(3) << 0.3, -0.2, 0.5).finished();
  Eigen::VectorXd qd = (Eigen::VectorXd(3) << 0.4, 0.1, -0.3).finished();
  const auto tau_of = [](double t) {
    return (Eigen::VectorXd(3) << std::sin(t), 0.5 * std::cos(2 * t), -0.2).finished();
  };

  // Integrate 1 s with RK4; check tau' * qd = dKE/dt by central differences of
  // the kinetic energy along the trajectory direction at each sample.
  const double h = 1e-3;
  const auto accel = [&](const Eigen::VectorXd& qq, const Eigen::VectorXd& vv, double t) {
    return aba_oracle(m, qq, vv, tau_of(t), Vec3::Zero());
  };
  for (int step = 0; step < 1000; ++step) {
    const double t = step * h;
    if (step % 100 == 0) {
      const Eigen::VectorXd qdd = accel(q, qd, t);
      const double power = tau_of(t).dot(qd);
      const double eps = 1e-6;
      const double ke_plus = kinetic_energy(m, q + eps * qd, qd + eps * qdd);
      const double ke_minus = kinetic_energy(m, q - eps * qd, qd - eps * qdd);
      const double dke = (ke_plus - ke_minus) / (2 * eps);
      CHECK(std::abs(dke - power) < 1e-4 * std::max(1.0, std::abs(power)));
    }
    const Eigen::VectorXd k1q = qd, k1v = accel(q, qd, t);
    const Eigen::VectorXd k2q = qd + 0.5 * h * k1v,
                          k2v = accel(q + 0.5 * h * k1q, qd + 0.5 * h * k1v, t + 0.5 * h);
    const Eigen::VectorXd k3q = qd + 0.5 * h * k2v,
                          k3v = accel(q + 0.5 * h * k2q, qd + 0.5 * h * k2v, t + 0.5 * h);
    const Eigen::VectorXd k4q = qd + h * k3v,
                          k4v = accel(q + h * k3q, qd + h * k3v, t + h);
    q += h / 6 * (k1q + 2 * k2q + 2 * k3q + k4q);
    qd += h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
  }
}

TEST_CASE("tool wrench enters through the last link") {
  const RobotModel m = r3();
  DynamicsProblem p = inverse_problem(m, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3),
                                      Eigen::VectorXd::Zero(3), Vec3::Zero());
  p.tool_wrench = Wrench(Vec3(0, 0, 1), Vec3::Zero());  // unit moment about z
  const auto res = inverse_dynamics(p);
  // Every joint must resist the full moment: tau_i = 1 for z-axis joints.
  for (int i = 0; i < 3; ++i) CHECK(res.state.tau[i] == doctest::Approx(1.0).epsilon(1e-9));
}
