#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dynfg/dyn.hpp"
#include "dynfg/kinoplan.hpp"

namespace {

using json = nlohmann::json;
using namespace dynfg;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNumerical = 2;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Eigen::VectorXd parse_vector(const std::string& text, int expect = -1) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw InputError("bad number in vector: " + item);
    }
  }
  if (expect >= 0 && static_cast<int>(out.size()) != expect) {
    throw InputError("expected " + std::to_string(expect) + " values, got " +
                     std::to_string(out.size()) + " in '" + text + "'");
  }
  return Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<long>(out.size()));
}

Vec3 parse_gravity(const std::string& text) {
  const Eigen::VectorXd v = parse_vector(text, 3);
  return Vec3(v[0], v[1], v[2]);
}

Ordering ordering_from_flag(const DynFactorGraph& graph, const std::string& flag) {
  if (flag.rfind("custom:", 0) == 0) {
    const std::string path = flag.substr(7);
    std::ifstream in(path);
    if (!in) throw InputError("cannot open custom ordering file: " + path);
    Ordering ordering;
    ordering.tag = OrderingTag::Custom;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      ordering.sequence.push_back(parse_variable_key(line));
    }
    return ordering;
  }
  static const std::map<std::string, OrderingTag> tags = {
      {"rnea", OrderingTag::Rnea},          {"crba", OrderingTag::Crba},
      {"aba", OrderingTag::Aba},            {"md", OrderingTag::MinDegree},
      {"colamd", OrderingTag::ColamdLike},  {"nd", OrderingTag::NestedDissection},
      {"reverse", OrderingTag::ReverseIndex}};
  auto it = tags.find(flag);
  if (it == tags.end()) throw InputError("unknown ordering: " + flag);
  return make_ordering(graph, it->second);
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(out_path);
    if (!out) throw InputError("cannot write output file: " + out_path);
    out << text;
  }
}

RobotModel load_model(const std::string& urdf_path) {
  if (urdf_path.empty()) throw InputError("--urdf is required");
  WarningSink warnings;
  RobotModel model = load_urdf_file(urdf_path, &warnings);
  for (const auto& w : warnings.messages) std::cerr << "warning: " << w << "\n";
  if (model.dof() == 0) throw InputError("chain has no moving joints: " + urdf_path);
  return model;
}

json state_json(const JointState& state) {
  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  return json{{"q", vec(state.q)},
              {"qd", vec(state.qd)},
              {"qdd", vec(state.qdd)},
              {"tau", vec(state.tau)}};
}

int run_solve(const std::string& verb, const std::string& urdf, const std::string& q_s,
              const std::string& qd_s, const std::string& qdd_s, const std::string& tau_s,
              const std::string& gravity_s, const std::string& ordering_flag,
              const std::vector<std::string>& known_flags, const std::string& method_flag,
              const std::string& out_path) {
  RobotModel model = load_model(urdf);
  const int n = model.dof();

  DynamicsProblem problem;
  problem.model = model;
  problem.state = JointState::Zero(n);
  problem.gravity = parse_gravity(gravity_s);
  if (q_s.empty() || qd_s.empty()) throw InputError("--q and --qd are required");
  problem.state.q = parse_vector(q_s, n);
  problem.state.qd = parse_vector(qd_s, n);

  if (verb == "id") {
    if (qdd_s.empty()) throw InputError("id requires --qdd");
    problem.state.qdd = parse_vector(qdd_s, n);
    problem.state.qdd_known.assign(static_cast<size_t>(n), true);
    problem.state.tau_known.assign(static_cast<size_t>(n), false);
  } else if (verb == "fd") {
    if (tau_s.empty()) throw InputError("fd requires --tau");
    problem.state.tau = parse_vector(tau_s, n);
    problem.state.tau_known.assign(static_cast<size_t>(n), true);
    problem.state.qdd_known.assign(static_cast<size_t>(n), false);
  } else {  // hybrid
    if (known_flags.empty()) throw InputError("hybrid requires --known entries");
    problem.state.qdd_known.assign(static_cast<size_t>(n), false);
    problem.state.tau_known.assign(static_cast<size_t>(n), false);
    for (const std::string& flag : known_flags) {
      const VariableKey key = parse_variable_key(flag);
      if (key.index < 1 || key.index > n) {
        throw InputError("--known joint index out of range: " + flag);
      }
      if (key.kind == VarKind::JointAccel) {
        problem.state.qdd_known[static_cast<size_t>(key.index - 1)] = true;
      } else if (key.kind == VarKind::JointTorque) {
        problem.state.tau_known[static_cast<size_t>(key.index - 1)] = true;
      } else {
        throw InputError("--known must name qdd:<i> or tau:<i>: " + flag);
      }
    }
    if (!qdd_s.empty()) problem.state.qdd = parse_vector(qdd_s, n);
    if (!tau_s.empty()) problem.state.tau = parse_vector(tau_s, n);
    for (int i = 0; i < n; ++i) {
      if (problem.state.qdd_known[static_cast<size_t>(i)] ==
          problem.state.tau_known[static_cast<size_t>(i)]) {
        throw InputError("exactly one of qdd:" + std::to_string(i + 1) + " / tau:" +
                         std::to_string(i + 1) + " must be listed in --known");
      }
    }
  }

  DynamicsResult result;
  std::string ordering_used = ordering_flag;
  if (verb == "hybrid" && method_flag == "featherstone") {
    result = hybrid_dynamics(problem, HybridMethod::Featherstone);
    ordering_used = "featherstone";
  } else {
    std::string flag = ordering_flag;
    if (flag.empty()) {
      flag = verb == "id" ? "rnea" : (verb == "fd" ? "aba" : "md");
      ordering_used = flag;
    }
    const Ordering ordering = ordering_from_flag(problem_graph(problem), flag);
    result = solve_with_ordering(problem, ordering);
  }

  json out = {{"problem", verb},
              {"ordering", ordering_used},
              {"residual_norm", result.solution.residual_norm},
              {"fill_edges", result.dag.fill_edges()},
              {"max_frontal", result.dag.max_frontal()}};
  out.update(state_json(result.state));
  emit(out.dump(2) + "\n", out_path);
  return kExitOk;
}

int run_bench(const std::vector<std::string>& urdfs, const std::string& problem_flag,
              const std::string& orderings_flag, int repetitions, unsigned seed,
              const std::string& out_path) {
  repetitions = std::max(repetitions, 30);  // medians of at least 30 samples
  std::vector<std::string> problems;
  if (problem_flag == "both") {
    problems = {"id", "fd"};
  } else {
    problems = {problem_flag};
  }

  std::ostringstream csv;
  csv << "robot,problem,ordering,fill_edges,max_frontal,median_wall_ns\n";
  // fill counts by (robot dof, problem, ordering) for the trend report
  std::map<std::string, std::map<std::string, int>> fills;

  for (const std::string& urdf : urdfs) {
    RobotModel model = load_model(urdf);
    const int n = model.dof();
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> qdist(-M_PI, M_PI), vdist(-1, 1);
    Eigen::VectorXd q(n), qd(n);
    for (int i = 0; i < n; ++i) {
      q[i] = qdist(rng);
      qd[i] = vdist(rng);
    }

    for (const std::string& prob : problems) {
      DynamicsProblem p;
      p.model = model;
      p.state = JointState::Zero(n);
      p.state.q = q;
      p.state.qd = qd;
      const bool inverse = prob == "id";
      p.state.qdd_known.assign(static_cast<size_t>(n), inverse);
      p.state.tau_known.assign(static_cast<size_t>(n), !inverse);

      std::vector<std::string> orderings;
      if (orderings_flag.empty()) {
        orderings = inverse ? std::vector<std::string>{"rnea", "md", "colamd", "nd", "reverse"}
                            : std::vector<std::string>{"crba", "aba", "md", "colamd", "nd",
                                                       "reverse"};
      } else {
        std::stringstream ss(orderings_flag);
        std::string item;
        while (std::getline(ss, item, ',')) orderings.push_back(item);
      }

      const DynFactorGraph graph = problem_graph(p);
      for (const std::string& ord_name : orderings) {
        const Ordering ordering = ordering_from_flag(graph, ord_name);
        std::vector<double> samples;
        int fill = 0, frontal = 0;
        for (int r = 0; r < repetitions; ++r) {
          const auto start = std::chrono::steady_clock::now();
          EliminationDag dag = symbolic_eliminate(graph, ordering);
          const Solution sol = back_substitute(dag);
          const auto stop = std::chrono::steady_clock::now();
          (void)sol;
          samples.push_back(static_cast<double>(
              std::chrono::duration_cast<std::chrono::nanoseconds>(stop - start).count()));
          fill = dag.fill_edges();
          frontal = dag.max_frontal();
        }
        std::nth_element(samples.begin(), samples.begin() + samples.size() / 2,
                         samples.end());
        csv << urdf << "," << prob << "," << ord_name << "," << fill << "," << frontal
            << "," << static_cast<long long>(samples[samples.size() / 2]) << "\n";
        if (n >= 6) fills[prob][ord_name] = fill;
      }
    }
  }
  emit(csv.str(), out_path);

  // Trend flags on the largest chains, reported alongside the table.
  auto trend = [](const std::string& name, bool pass) {
    std::cout << "# trend " << name << " " << (pass ? "pass" : "fail") << "\n";
  };
  if (fills.count("fd")) {
    const auto& f = fills["fd"];
    if (f.count("aba") && f.count("crba")) trend("fill(aba)<fill(crba)", f.at("aba") < f.at("crba"));
    if (f.count("colamd") && f.count("aba"))
      trend("fill(colamd)<=fill(aba)", f.at("colamd") <= f.at("aba"));
    if (f.count("nd") && f.count("crba")) trend("fill(nd)<=fill(crba)", f.at("nd") <= f.at("crba"));
  }
  if (fills.count("id")) {
    const auto& f = fills["id"];
    if (f.count("colamd") && f.count("rnea"))
      trend("fill(colamd)<=fill(rnea)", f.at("colamd") <= f.at("rnea"));
  }
  return kExitOk;
}

int run_export(const std::string& urdf, const std::string& problem_flag,
               const std::string& what, const std::string& q_s, const std::string& qd_s,
               const std::string& gravity_s, const std::string& ordering_flag,
               const std::vector<std::string>& known_flags, const std::string& out_path) {
  RobotModel model = load_model(urdf);
  const int n = model.dof();

  DynamicsProblem p;
  p.model = model;
  p.state = JointState::Zero(n);
  p.gravity = parse_gravity(gravity_s);
  if (!q_s.empty()) p.state.q = parse_vector(q_s, n);
  if (!qd_s.empty()) p.state.qd = parse_vector(qd_s, n);
  const bool inverse = problem_flag != "fd" && problem_flag != "hybrid";
  p.state.qdd_known.assign(static_cast<size_t>(n), inverse);
  p.state.tau_known.assign(static_cast<size_t>(n), !inverse);
  if (problem_flag == "hybrid") {
    for (const std::string& flag : known_flags) {
      const VariableKey key = parse_variable_key(flag);
      if (key.index < 1 || key.index > n) throw InputError("--known out of range: " + flag);
      if (key.kind == VarKind::JointAccel) {
        p.state.qdd_known[static_cast<size_t>(key.index - 1)] = true;
        p.state.tau_known[static_cast<size_t>(key.index - 1)] = false;
      } else {
        p.state.tau_known[static_cast<size_t>(key.index - 1)] = true;
        p.state.qdd_known[static_cast<size_t>(key.index - 1)] = false;
      }
    }
  }

  const DynFactorGraph graph = problem_graph(p);
  if (what == "graph") {
    emit(export_graph_dot(graph), out_path);
  } else if (what == "dag") {
    std::string flag = ordering_flag;
    if (flag.empty()) flag = inverse ? "rnea" : "aba";
    const Ordering ordering = ordering_from_flag(graph, flag);
    const EliminationDag dag = symbolic_eliminate(graph, ordering);
    emit(export_dag_dot(dag), out_path);
  } else {
    throw InputError("--what must be graph or dag");
  }
  return kExitOk;
}

int run_plan(const std::string& config_path, const std::string& traj_out,
             const std::string& report_out) {
  std::ifstream in(config_path);
  if (!in) throw InputError("cannot open config: " + config_path);
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(std::string("bad config JSON: ") + e.what());
  }

  RobotModel model;
  const json model_cfg = cfg.value("model", json::object());
  if (model_cfg.contains("urdf")) {
    model = load_model(model_cfg["urdf"].get<std::string>());
  } else if (model_cfg.value("type", "") == "cartpole") {
    model = make_cartpole(model_cfg.value("cart_mass", 1.0), model_cfg.value("pole_mass", 0.3),
                          model_cfg.value("pole_length", 0.5));
  } else {
    throw InputError("config model must give a urdf path or type=cartpole");
  }
  const int n = model.dof();

  PlanConfig plan;
  plan.horizon = cfg.value("horizon", 0);
  plan.dt = cfg.value("dt", 0.0);
  if (plan.horizon < 2 || plan.dt <= 0) {
    throw InputError("config needs horizon >= 2 and dt > 0");
  }
  plan.gp_prior = cfg.value("gp_prior", true);
  plan.min_torque = cfg.value("min_torque", false);
  plan.joint_limits = cfg.value("joint_limits", false);
  plan.q_c_scale = cfg.value("q_c_scale", 1.0);
  plan.sigma_tau = cfg.value("sigma_tau", 1.0);
  plan.hinge_alpha = cfg.value("hinge_alpha", 10.0);
  plan.hinge_eps = cfg.value("hinge_eps", 0.05);
  plan.hard_weight = cfg.value("hard_weight", 1e6);
  plan.initial_q = Eigen::VectorXd::Zero(n);
  if (cfg.contains("initial_q")) {
    const auto vals = cfg["initial_q"].get<std::vector<double>>();
    if (static_cast<int>(vals.size()) != n) throw InputError("initial_q has wrong size");
    plan.initial_q = Eigen::Map<const Eigen::VectorXd>(vals.data(), n);
  }
  if (cfg.contains("actuated")) {
    plan.actuated = cfg["actuated"].get<std::vector<bool>>();
    if (static_cast<int>(plan.actuated.size()) != n) throw InputError("actuated has wrong size");
  }
  for (const json& goal_cfg : cfg.value("goals", json::array())) {
    GoalSpec goal;
    const double time = goal_cfg.value("time", 0.0);
    goal.step = static_cast<int>(std::lround(time / plan.dt));
    if (goal.step < 0 || goal.step >= plan.horizon) {
      throw InputError("goal time outside the horizon");
    }
    const auto qv = goal_cfg["q"].get<std::vector<double>>();
    if (static_cast<int>(qv.size()) != n) throw InputError("goal q has wrong size");
    goal.q_target = Eigen::Map<const Eigen::VectorXd>(qv.data(), n);
    goal.position_weight = goal_cfg.value("position_weight", 1000.0);
    goal.velocity_weight = goal_cfg.value("velocity_weight", 1000.0);
    plan.goals.push_back(goal);
  }

  OptimizeOptions opts;
  opts.max_iterations = cfg.value("max_iterations", 500);

  const PlanGraph graph = build_plan_graph(model, plan);
  OptimizeReport report;
  const Values solution = optimize(
      graph, warm_start_trajectory(graph, initialize_trajectory(graph)), opts, &report);
  const Trajectory traj = extract_trajectory(graph, solution);

  const double tol_pos = cfg.value("tolerances", json::object()).value("position", 0.01);
  const double tol_vel = cfg.value("tolerances", json::object()).value("velocity", 0.01);
  bool goals_met = true;
  json goal_report = json::array();
  for (const GoalSpec& goal : plan.goals) {
    const Eigen::VectorXd qerr = traj.q.row(goal.step).transpose() - goal.q_target;
    const double verr = traj.qd.row(goal.step).lpNorm<Eigen::Infinity>();
    const bool met = qerr.lpNorm<Eigen::Infinity>() <= tol_pos && verr <= tol_vel;
    goals_met = goals_met && met;
    goal_report.push_back({{"time", traj.times[static_cast<size_t>(goal.step)]},
                           {"position_error", qerr.lpNorm<Eigen::Infinity>()},
                           {"velocity_error", verr},
                           {"met", met}});
  }

  emit(trajectory_csv(traj), traj_out);
  json rep = json::parse(report_json(report));
  rep["goals"] = goal_report;
  rep["goals_met"] = goals_met;
  rep["sum_tau_sq"] = traj.tau.squaredNorm();
  emit(rep.dump(2) + "\n", report_out);

  if (!report.converged || report.max_iterations_hit || !goals_met) return kExitNumerical;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynfg: dynamics factor-graph solver"};
  app.require_subcommand(1);

  std::string urdf, q_s, qd_s, qdd_s, tau_s, ordering_flag, out_path;
  std::string gravity_s = "0,0,-9.81";
  std::string method_flag = "elimination";
  std::vector<std::string> known_flags;
  unsigned seed = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--urdf", urdf, "robot URDF path");
    cmd->add_option("--gravity", gravity_s, "gravity vector x,y,z");
    cmd->add_option("--ordering", ordering_flag,
                    "rnea|crba|aba|md|colamd|nd|reverse|custom:<file>");
    cmd->add_option("--seed", seed, "RNG seed");
    cmd->add_option("--out", out_path, "output path (default stdout)");
  };

  CLI::App* cmd_id = app.add_subcommand("id", "inverse dynamics");
  CLI::App* cmd_fd = app.add_subcommand("fd", "forward dynamics");
  CLI::App* cmd_hybrid = app.add_subcommand("hybrid", "hybrid dynamics");
  for (CLI::App* cmd : {cmd_id, cmd_fd, cmd_hybrid}) {
    add_common(cmd);
    cmd->add_option("--q", q_s, "joint positions");
    cmd->add_option("--qd", qd_s, "joint velocities");
    cmd->add_option("--qdd", qdd_s, "joint accelerations");
    cmd->add_option("--tau", tau_s, "joint torques");
  }
  cmd_hybrid->add_option("--known", known_flags, "known per joint, e.g. qdd:1 tau:2");
  cmd_hybrid->add_option("--method", method_flag, "elimination|featherstone");

  CLI::App* cmd_bench = app.add_subcommand("bench", "fill/timing benchmark");
  std::vector<std::string> bench_urdfs;
  std::string bench_problem = "both", bench_orderings;
  int repetitions = 30;
  cmd_bench->add_option("--urdf", bench_urdfs, "robot URDF paths")->required();
  cmd_bench->add_option("--problem", bench_problem, "id|fd|both");
  cmd_bench->add_option("--orderings", bench_orderings, "comma-separated ordering list");
  cmd_bench->add_option("--repetitions", repetitions, "timing repetitions (>= 30)");
  cmd_bench->add_option("--seed", seed, "RNG seed");
  cmd_bench->add_option("--out", out_path, "CSV output path");

  CLI::App* cmd_export = app.add_subcommand("export", "DOT export of graph or DAG");
  std::string what = "graph", export_problem = "id";
  add_common(cmd_export);
  cmd_export->add_option("--what", what, "graph|dag");
  cmd_export->add_option("--problem", export_problem, "id|fd|hybrid");
  cmd_export->add_option("--q", q_s, "joint positions");
  cmd_export->add_option("--qd", qd_s, "joint velocities");
  cmd_export->add_option("--known", known_flags, "hybrid known list");

  CLI::App* cmd_plan = app.add_subcommand("plan", "trajectory optimization");
  std::string config_path, traj_out, report_out;
  cmd_plan->add_option("--config", config_path, "plan config JSON")->required();
  cmd_plan->add_option("--traj-out", traj_out, "trajectory CSV path");
  cmd_plan->add_option("--report-out", report_out, "report JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitInput;
  }

  try {
    if (cmd_id->parsed()) {
      return run_solve("id", urdf, q_s, qd_s, qdd_s, tau_s, gravity_s, ordering_flag,
                       known_flags, method_flag, out_path);
    }
    if (cmd_fd->parsed()) {
      return run_solve("fd", urdf, q_s, qd_s, qdd_s, tau_s, gravity_s, ordering_flag,
                       known_flags, method_flag, out_path);
    }
    if (cmd_hybrid->parsed()) {
      return run_solve("hybrid", urdf, q_s, qd_s, qdd_s, tau_s, gravity_s, ordering_flag,
                       known_flags, method_flag, out_path);
    }
    if (cmd_bench->parsed()) {
      return run_bench(bench_urdfs, bench_problem, bench_orderings, repetitions, seed,
                       out_path);
    }
    if (cmd_export->parsed()) {
      return run_export(urdf, export_problem, what, q_s, qd_s, gravity_s, ordering_flag,
                        known_flags, out_path);
    }
    if (cmd_plan->parsed()) {
      return run_plan(config_path, traj_out, report_out);
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const UrdfError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const UnknownKey& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const DimensionMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const WrongProblemClass& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const NonSpdSigma& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DivergedNaN& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const StructurallySingular& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const NumericallySingular& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitInput;
}
