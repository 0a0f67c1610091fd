#include "dynfg/elim.hpp"

#include <algorithm>
#include <queue>
#include <set>
#include <sstream>

namespace dynfg {

namespace {
constexpr double kPivotTolerance = 1e-12;
}

std::string to_string(OrderingTag tag) {
  switch (tag) {
    case OrderingTag::Rnea: return "rnea";
    case OrderingTag::Crba: return "crba";
    case OrderingTag::Aba: return "aba";
    case OrderingTag::MinDegree: return "md";
    case OrderingTag::ColamdLike: return "colamd";
    case OrderingTag::NestedDissection: return "nd";
    case OrderingTag::ReverseIndex: return "reverse";
    case OrderingTag::Custom: return "custom";
  }
  return "?";
}

namespace {

int chain_length(const DynFactorGraph& graph, VarKind kind) {
  int n = 0;
  for (const auto& [key, d] : graph.variable_dims) {
    (void)d;
    if (key.kind == kind) n = std::max(n, key.index);
  }
  return n;
}

bool has_kind(const DynFactorGraph& graph, VarKind kind) {
  return std::any_of(graph.variable_dims.begin(), graph.variable_dims.end(),
                     [&](const auto& kv) { return kv.first.kind == kind; });
}

using Adjacency = std::map<VariableKey, std::set<VariableKey>>;

Adjacency variable_adjacency(const DynFactorGraph& graph) {
  Adjacency adj;
  for (const auto& [key, d] : graph.variable_dims) {
    (void)d;
    adj[key];  // isolated variables still get a node
  }
  for (const auto& f : graph.factors) {
    for (const auto& [a, ba] : f.blocks) {
      (void)ba;
      for (const auto& [b, bb] : f.blocks) {
        (void)bb;
        if (a != b) adj[a].insert(b);
      }
    }
  }
  return adj;
}

}  // namespace

Ordering order_rnea(const DynFactorGraph& graph) {
  if (!has_kind(graph, VarKind::JointTorque)) {
    throw WrongProblemClass("RNEA ordering needs torque unknowns (inverse graph)");
  }
  const int n = chain_length(graph, VarKind::JointTorque);
  Ordering ord{.sequence = {}, .tag = OrderingTag::Rnea};
  for (int i = n; i >= 1; --i) ord.sequence.push_back(joint_torque_key(i));
  for (int i = 1; i <= n; ++i) ord.sequence.push_back(wrench_key(i));
  for (int i = n; i >= 1; --i) ord.sequence.push_back(twist_accel_key(i));
  return ord;
}

Ordering order_crba(const DynFactorGraph& graph) {
  if (!has_kind(graph, VarKind::JointAccel)) {
    throw WrongProblemClass("CRBA ordering needs acceleration unknowns (forward graph)");
  }
  const int n = chain_length(graph, VarKind::JointAccel);
  Ordering ord{.sequence = {}, .tag = OrderingTag::Crba};
  for (int i = n; i >= 1; --i) ord.sequence.push_back(wrench_key(i));
  for (int i = n; i >= 1; --i) ord.sequence.push_back(twist_accel_key(i));
  for (int i = n; i >= 1; --i) ord.sequence.push_back(joint_accel_key(i));
  return ord;
}

Ordering order_aba(const DynFactorGraph& graph) {
  if (!has_kind(graph, VarKind::JointAccel)) {
    throw WrongProblemClass("ABA ordering needs acceleration unknowns (forward graph)");
  }
  const int n = chain_length(graph, VarKind::JointAccel);
  Ordering ord{.sequence = {}, .tag = OrderingTag::Aba};
  for (int i = n; i >= 1; --i) {
    ord.sequence.push_back(wrench_key(i));
    ord.sequence.push_back(twist_accel_key(i));
    ord.sequence.push_back(joint_accel_key(i));
  }
  return ord;
}

Ordering order_min_degree(const DynFactorGraph& graph) {
  Adjacency adj = variable_adjacency(graph);
  Ordering ord{.sequence = {}, .tag = OrderingTag::MinDegree};
  while (!adj.empty()) {
    VariableKey best = adj.begin()->first;
    size_t best_deg = adj.begin()->second.size();
    for (const auto& [key, nbrs] : adj) {
      if (nbrs.size() < best_deg) {
        best = key;
        best_deg = nbrs.size();
      }
    }
    ord.sequence.push_back(best);
    // Connect the neighborhood into a clique, then remove the vertex.
    const std::set<VariableKey> nbrs = adj.at(best);
    for (const auto& a : nbrs) {
      for (const auto& b : nbrs) {
        if (a != b) adj[a].insert(b);
      }
      adj[a].erase(best);
    }
    adj.erase(best);
  }
  return ord;
}

Ordering order_colamd_like(const DynFactorGraph& graph) {
  // Column elimination on the factor-variable incidence. Rows carry their
  // equation counts so that rows fully consumed by a pivot are dropped instead
  // of re-merged — that is what lets structured columns eliminate with zero
  // residual fill.
  struct Row {
    std::set<VariableKey> vars;
    int count;
  };
  std::vector<Row> rows;
  for (const auto& f : graph.factors) {
    Row row;
    row.count = f.rows();
    for (const auto& [key, block] : f.blocks) {
      (void)block;
      row.vars.insert(key);
    }
    if (!row.vars.empty()) rows.push_back(std::move(row));
  }
  std::set<VariableKey> remaining;
  for (const auto& [key, d] : graph.variable_dims) {
    (void)d;
    remaining.insert(key);
  }

  Ordering ord{.sequence = {}, .tag = OrderingTag::ColamdLike};
  while (!remaining.empty()) {
    // Primary score: external column degree (distinct neighbours across
    // incident rows). Secondary: residual row count after the pivot block is
    // consumed — prefer pivots that annihilate their rows entirely.
    VariableKey best{};
    long best_degree = -1;
    long best_residual = 0;
    for (const auto& key : remaining) {
      std::set<VariableKey> neighbours;
      int incident_rows = 0;
      for (const auto& row : rows) {
        if (row.vars.count(key)) {
          neighbours.insert(row.vars.begin(), row.vars.end());
          incident_rows += row.count;
        }
      }
      neighbours.erase(key);
      int neighbour_dim = 0;
      for (const auto& nb : neighbours) neighbour_dim += graph.dim(nb);
      const long degree = static_cast<long>(neighbours.size());
      const long residual =
          std::max(0, std::min(incident_rows - graph.dim(key), neighbour_dim));
      if (best_degree < 0 || degree < best_degree ||
          (degree == best_degree && residual < best_residual)) {
        best = key;
        best_degree = degree;
        best_residual = residual;
      }
    }
    ord.sequence.push_back(best);
    remaining.erase(best);
    std::set<VariableKey> merged;
    int pivot_rows = 0;
    std::vector<Row> next;
    for (auto& row : rows) {
      if (row.vars.count(best)) {
        pivot_rows += row.count;
        row.vars.erase(best);
        merged.insert(row.vars.begin(), row.vars.end());
      } else {
        next.push_back(std::move(row));
      }
    }
    int merged_dim = 0;
    for (const auto& key : merged) merged_dim += graph.dim(key);
    const int residual = std::min(pivot_rows - graph.dim(best), merged_dim);
    if (residual > 0 && !merged.empty()) {
      next.push_back(Row{std::move(merged), residual});
    }
    rows = std::move(next);
  }
  return ord;
}

namespace {

// Minimum-degree order restricted to a vertex subset.
std::vector<VariableKey> local_min_degree(Adjacency adj) {
  std::vector<VariableKey> out;
  while (!adj.empty()) {
    VariableKey best = adj.begin()->first;
    size_t best_deg = adj.begin()->second.size();
    for (const auto& [key, nbrs] : adj) {
      if (nbrs.size() < best_deg) {
        best = key;
        best_deg = nbrs.size();
      }
    }
    out.push_back(best);
    const std::set<VariableKey> nbrs = adj.at(best);
    for (const auto& a : nbrs) {
      for (const auto& b : nbrs) {
        if (a != b) adj[a].insert(b);
      }
      adj[a].erase(best);
    }
    adj.erase(best);
  }
  return out;
}

Adjacency restrict_to(const Adjacency& adj, const std::set<VariableKey>& keep) {
  Adjacency out;
  for (const auto& key : keep) {
    auto& nbrs = out[key];
    for (const auto& n : adj.at(key)) {
      if (keep.count(n)) nbrs.insert(n);
    }
  }
  return out;
}

std::map<VariableKey, int> bfs_levels(const Adjacency& adj, const VariableKey& start) {
  std::map<VariableKey, int> level;
  std::queue<VariableKey> queue;
  level[start] = 0;
  queue.push(start);
  while (!queue.empty()) {
    VariableKey v = queue.front();
    queue.pop();
    for (const auto& n : adj.at(v)) {
      if (!level.count(n)) {
        level[n] = level.at(v) + 1;
        queue.push(n);
      }
    }
  }
  return level;
}

void dissect(const Adjacency& adj, std::vector<VariableKey>& out);

void dissect_component(const Adjacency& adj, std::vector<VariableKey>& out) {
  if (adj.size() <= 4) {
    auto tail = local_min_degree(adj);
    out.insert(out.end(), tail.begin(), tail.end());
    return;
  }
  // Peripheral start via double BFS, then pick the level cut with the smallest
  // separator (ties broken towards balance).
  VariableKey start = adj.begin()->first;
  {
    auto lv = bfs_levels(adj, start);
    for (const auto& [key, l] : lv) {
      if (l > lv.at(start)) start = key;
    }
  }
  auto levels = bfs_levels(adj, start);
  int max_level = 0;
  for (const auto& [key, l] : levels) {
    (void)key;
    max_level = std::max(max_level, l);
  }
  if (max_level < 2) {
    auto tail = local_min_degree(adj);
    out.insert(out.end(), tail.begin(), tail.end());
    return;
  }
  int best_cut = 1;
  long best_score = -1;
  int best_balanced_cut = -1;
  long best_balanced_score = -1;
  for (int cut = 1; cut < max_level; ++cut) {
    long sep = 0, left = 0, right = 0;
    for (const auto& [key, l] : levels) {
      (void)key;
      if (l < cut) ++left;
      else if (l > cut) ++right;
      else ++sep;
    }
    if (left == 0 || right == 0) continue;
    long score = sep * 1000 + std::abs(left - right);
    if (best_score < 0 || score < best_score) {
      best_score = score;
      best_cut = cut;
    }
    // A separator should split, not peel: insist both halves hold at least a
    // quarter of the remaining vertices, falling back to the unconstrained
    // best when no level cut achieves that.
    if (4 * std::min(left, right) >= left + right &&
        (best_balanced_score < 0 || score < best_balanced_score)) {
      best_balanced_score = score;
      best_balanced_cut = cut;
    }
  }
  if (best_balanced_cut >= 0) best_cut = best_balanced_cut;
  std::set<VariableKey> left, right, sep;
  for (const auto& [key, l] : levels) {
    if (l < best_cut) left.insert(key);
    else if (l > best_cut) right.insert(key);
    else sep.insert(key);
  }
  dissect(restrict_to(adj, left), out);
  dissect(restrict_to(adj, right), out);
  for (const auto& key : sep) out.push_back(key);
}

void dissect(const Adjacency& adj, std::vector<VariableKey>& out) {
  // Split into connected components first.
  std::set<VariableKey> seen;
  for (const auto& [root, nbrs] : adj) {
    (void)nbrs;
    if (seen.count(root)) continue;
    std::set<VariableKey> comp;
    std::queue<VariableKey> queue;
    queue.push(root);
    comp.insert(root);
    while (!queue.empty()) {
      VariableKey v = queue.front();
      queue.pop();
      for (const auto& n : adj.at(v)) {
        if (comp.insert(n).second) queue.push(n);
      }
    }
    seen.insert(comp.begin(), comp.end());
    dissect_component(restrict_to(adj, comp), out);
  }
}

}  // namespace

Ordering order_nested_dissection(const DynFactorGraph& graph) {
  Ordering ord{.sequence = {}, .tag = OrderingTag::NestedDissection};
  dissect(variable_adjacency(graph), ord.sequence);
  return ord;
}

Ordering order_reverse_index(const DynFactorGraph& graph) {
  Ordering ord{.sequence = {}, .tag = OrderingTag::ReverseIndex};
  for (const auto& [key, d] : graph.variable_dims) {
    (void)d;
    ord.sequence.push_back(key);
  }
  std::reverse(ord.sequence.begin(), ord.sequence.end());
  return ord;
}

Ordering make_ordering(const DynFactorGraph& graph, OrderingTag tag) {
  switch (tag) {
    case OrderingTag::Rnea: return order_rnea(graph);
    case OrderingTag::Crba: return order_crba(graph);
    case OrderingTag::Aba: return order_aba(graph);
    case OrderingTag::MinDegree: return order_min_degree(graph);
    case OrderingTag::ColamdLike: return order_colamd_like(graph);
    case OrderingTag::NestedDissection: return order_nested_dissection(graph);
    case OrderingTag::ReverseIndex: return order_reverse_index(graph);
    case OrderingTag::Custom:
      throw std::invalid_argument("custom orderings come from a file, not a tag");
  }
  throw std::invalid_argument("bad ordering tag");
}

int EliminationDag::fill_edges() const {
  int edges = 0;
  for (const auto& node : nodes) edges += static_cast<int>(node.parents.size());
  return edges;
}

int EliminationDag::max_frontal() const {
  int m = 0;
  for (const auto& node : nodes) m = std::max(m, 1 + static_cast<int>(node.parents.size()));
  return m;
}

namespace {

void check_permutation(const DynFactorGraph& graph, const std::vector<VariableKey>& seq) {
  std::set<VariableKey> seen(seq.begin(), seq.end());
  if (seen.size() != seq.size()) {
    throw std::invalid_argument("ordering repeats a variable");
  }
  if (seen.size() != graph.variable_dims.size()) {
    throw std::invalid_argument("ordering does not cover all unknowns");
  }
  for (const auto& key : seq) graph.dim(key);
}

struct WorkFactor {
  std::map<VariableKey, Eigen::MatrixXd> blocks;
  Eigen::VectorXd rhs;
  bool active = true;
};

}  // namespace

EliminationDag symbolic_eliminate(const DynFactorGraph& graph, const Ordering& ordering) {
  check_permutation(graph, ordering.sequence);

  std::vector<WorkFactor> work;
  work.reserve(graph.factors.size());
  for (const auto& f : graph.factors) {
    WorkFactor w;
    w.rhs = f.noise_scale * f.rhs;
    for (const auto& [key, block] : f.blocks) w.blocks[key] = f.noise_scale * block;
    if (w.blocks.empty()) continue;  // constant rows carry no unknowns
    work.push_back(std::move(w));
  }

  // Incidence index so each step only scans candidate factors.
  std::map<VariableKey, std::vector<size_t>> incidence;
  for (size_t i = 0; i < work.size(); ++i) {
    for (const auto& [key, block] : work[i].blocks) {
      (void)block;
      incidence[key].push_back(i);
    }
  }

  EliminationDag dag;
  dag.graph = graph;

  for (const auto& var : ordering.sequence) {
    const int dv = graph.dim(var);
    std::vector<size_t> touching;
    for (size_t idx : incidence[var]) {
      if (work[idx].active && work[idx].blocks.count(var)) touching.push_back(idx);
    }
    if (touching.empty()) {
      throw StructurallySingular("variable " + to_string(var) + " has no incident factor");
    }

    std::map<VariableKey, int> sep_offsets;  // sorted by key
    int sep_dim = 0;
    int rows = 0;
    for (size_t idx : touching) {
      rows += static_cast<int>(work[idx].rhs.size());
      for (const auto& [key, block] : work[idx].blocks) {
        (void)block;
        if (key != var && !sep_offsets.count(key)) sep_offsets[key] = 0;
      }
    }
    for (auto& [key, off] : sep_offsets) {
      off = sep_dim;
      sep_dim += graph.dim(key);
    }
    if (rows < dv) {
      throw StructurallySingular("frontal system for " + to_string(var) +
                                 " is underdetermined");
    }

    Eigen::MatrixXd front = Eigen::MatrixXd::Zero(rows, dv + sep_dim);
    Eigen::VectorXd b(rows);
    int at = 0;
    for (size_t idx : touching) {
      WorkFactor& f = work[idx];
      const int fr = static_cast<int>(f.rhs.size());
      for (const auto& [key, block] : f.blocks) {
        const int col = (key == var) ? 0 : dv + sep_offsets.at(key);
        front.block(at, col, fr, block.cols()) = block;
      }
      b.segment(at, fr) = f.rhs;
      at += fr;
      f.active = false;
    }

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(front);
    const Eigen::MatrixXd r =
        qr.matrixQR().topRows(std::min<int>(rows, dv + sep_dim)).triangularView<Eigen::Upper>();
    const Eigen::VectorXd d = (qr.householderQ().transpose() * b).eval();

    DagNode node;
    node.variable = var;
    for (const auto& [key, off] : sep_offsets) {
      (void)off;
      node.parents.push_back(key);
    }
    node.r = r.topLeftCorner(dv, dv);
    node.cross = r.topRightCorner(dv, sep_dim);
    node.rhs = d.head(dv);
    dag.nodes.push_back(std::move(node));

    const int rem = std::min(rows - dv, sep_dim);
    if (rem > 0 && sep_dim > 0) {
      WorkFactor remainder;
      remainder.rhs = d.segment(dv, rem);
      for (const auto& [key, off] : sep_offsets) {
        remainder.blocks[key] = r.block(dv, dv + off, rem, graph.dim(key));
      }
      work.push_back(std::move(remainder));
      const size_t new_idx = work.size() - 1;
      for (const auto& [key, off] : sep_offsets) {
        (void)off;
        incidence[key].push_back(new_idx);
      }
    }
  }
  return dag;
}

int symbolic_fill(const DynFactorGraph& graph, const std::vector<VariableKey>& sequence) {
  check_permutation(graph, sequence);
  struct Row {
    std::set<VariableKey> vars;
    int rows;
  };
  std::vector<Row> rows;
  for (const auto& f : graph.factors) {
    Row row;
    row.rows = f.rows();
    for (const auto& [key, block] : f.blocks) {
      (void)block;
      row.vars.insert(key);
    }
    if (!row.vars.empty()) rows.push_back(std::move(row));
  }
  int fill = 0;
  for (const auto& var : sequence) {
    const int dv = graph.dim(var);
    std::set<VariableKey> sep;
    int nrows = 0;
    std::vector<Row> next;
    bool found = false;
    for (auto& row : rows) {
      if (row.vars.count(var)) {
        found = true;
        nrows += row.rows;
        row.vars.erase(var);
        sep.insert(row.vars.begin(), row.vars.end());
      } else {
        next.push_back(std::move(row));
      }
    }
    if (!found) throw StructurallySingular("variable " + to_string(var) + " uncovered");
    fill += static_cast<int>(sep.size());
    int sep_dim = 0;
    for (const auto& key : sep) sep_dim += graph.dim(key);
    const int rem = std::min(nrows - dv, sep_dim);
    if (rem > 0 && !sep.empty()) next.push_back(Row{sep, rem});
    rows = std::move(next);
  }
  return fill;
}

Solution back_substitute(const EliminationDag& dag) {
  Solution sol;
  for (auto it = dag.nodes.rbegin(); it != dag.nodes.rend(); ++it) {
    const DagNode& node = *it;
    const int dv = static_cast<int>(node.r.rows());
    for (int k = 0; k < dv; ++k) {
      if (std::abs(node.r(k, k)) < kPivotTolerance) {
        throw NumericallySingular("pivot below tolerance while solving " +
                                  to_string(node.variable));
      }
    }
    Eigen::VectorXd rhs = node.rhs;
    int off = 0;
    for (const auto& parent : node.parents) {
      const Eigen::VectorXd& pv = sol.values.at(parent);
      rhs -= node.cross.middleCols(off, pv.size()) * pv;
      off += static_cast<int>(pv.size());
    }
    sol.values[node.variable] =
        node.r.triangularView<Eigen::Upper>().solve(rhs);
  }
  sol.residual_norm = dag.graph.residual(sol.values).norm();
  return sol;
}

Solution solve(const DynFactorGraph& graph, const Ordering& ordering) {
  Solution sol = back_substitute(symbolic_eliminate(graph, ordering));

  // One pass of iterative refinement: re-solve with the residual right-hand
  // side and correct. Recovers the digits lost on ill-conditioned frontal
  // blocks; a no-op (zero correction) when the first solve was exact.
  DynFactorGraph refine = graph;
  for (LinearFactor& f : refine.factors) {
    Eigen::VectorXd ax = Eigen::VectorXd::Zero(f.rows());
    for (const auto& [key, block] : f.blocks) ax += block * sol.values.at(key);
    f.rhs -= ax;
  }
  const Solution corr = back_substitute(symbolic_eliminate(refine, ordering));
  for (auto& [key, value] : sol.values) value += corr.values.at(key);
  sol.residual_norm = graph.residual(sol.values).norm();
  return sol;
}

Solution solve_dense(const DynFactorGraph& graph) {
  BlockSparseSystem sys = assemble(graph);
  Eigen::MatrixXd a = sys.dense();
  Eigen::VectorXd b = sys.dense_rhs();
  Eigen::VectorXd x = a.colPivHouseholderQr().solve(b);
  Solution sol;
  for (const auto& key : sys.column_keys) {
    sol.values[key] = x.segment(sys.column_offsets.at(key), graph.dim(key));
  }
  sol.residual_norm = graph.residual(sol.values).norm();
  return sol;
}

std::string export_dag_dot(const EliminationDag& dag) {
  std::ostringstream out;
  out << "digraph {\n";
  auto dot_id = [](const VariableKey& key) {
    std::string s = to_string(key);
    for (char& c : s) {
      if (c == ':' || c == '@') c = '_';
    }
    return s;
  };
  for (const auto& node : dag.nodes) {
    out << "  " << dot_id(node.variable) << " [label=\"" << to_string(node.variable)
        << "\"];\n";
  }
  for (const auto& node : dag.nodes) {
    for (const auto& parent : node.parents) {
      out << "  " << dot_id(node.variable) << " -> " << dot_id(parent) << ";\n";
    }
  }
  out << "}\n";
  return out.str();
}

}  // namespace dynfg
