#pragma once

#include "dynfg/fgcore.hpp"

namespace dynfg {

struct WrongProblemClass : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StructurallySingular : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericallySingular : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class OrderingTag {
  Rnea,
  Crba,
  Aba,
  MinDegree,
  ColamdLike,
  NestedDissection,
  ReverseIndex,
  Custom,
};

std::string to_string(OrderingTag tag);

struct Ordering {
  std::vector<VariableKey> sequence;
  OrderingTag tag = OrderingTag::Custom;
};

/// RNEA ordering for inverse graphs: tau_n..tau_1, F_1..F_n, Vdot_n..Vdot_1.
Ordering order_rnea(const DynFactorGraph& graph);
/// CRBA ordering for forward graphs: F_n..F_1, Vdot_n..Vdot_1, qdd_n..qdd_1.
Ordering order_crba(const DynFactorGraph& graph);
/// ABA ordering for forward graphs: F_i, Vdot_i, qdd_i alternating for i = n..1.
Ordering order_aba(const DynFactorGraph& graph);
/// Greedy minimum degree on the variable adjacency graph (group degrees).
Ordering order_min_degree(const DynFactorGraph& graph);
/// Approximate column minimum degree on the factor-variable incidence.
Ordering order_colamd_like(const DynFactorGraph& graph);
/// Recursive vertex-separator bisection, postfix order.
Ordering order_nested_dissection(const DynFactorGraph& graph);
/// All unknowns by descending (kind, index) key.
Ordering order_reverse_index(const DynFactorGraph& graph);

Ordering make_ordering(const DynFactorGraph& graph, OrderingTag tag);

struct DagNode {
  VariableKey variable;
  std::vector<VariableKey> parents;  // sorted; eliminated strictly later
  Eigen::MatrixXd r;                 // dim x dim, upper triangular
  Eigen::MatrixXd cross;             // dim x total parent dim, parent-order blocks
  Eigen::VectorXd rhs;
};

struct EliminationDag {
  std::vector<DagNode> nodes;  // in elimination order
  DynFactorGraph graph;        // the eliminated graph, kept for residuals

  int fill_edges() const;
  /// Largest clique, in variable groups (1 + parent count).
  int max_frontal() const;
};

struct Solution {
  std::map<VariableKey, Eigen::VectorXd> values;
  double residual_norm = 0;
};

/// Block elimination via dense QR on each frontal system. The DAG carries both
/// the symbolic structure (parent sets, fill) and the numeric solve blocks.
EliminationDag symbolic_eliminate(const DynFactorGraph& graph, const Ordering& ordering);

/// Structure-only elimination; returns the fill edge count for the ordering.
int symbolic_fill(const DynFactorGraph& graph, const std::vector<VariableKey>& sequence);

Solution back_substitute(const EliminationDag& dag);

Solution solve(const DynFactorGraph& graph, const Ordering& ordering);

/// Dense QR reference solve of the assembled system.
Solution solve_dense(const DynFactorGraph& graph);

std::string export_dag_dot(const EliminationDag& dag);

}  // namespace dynfg
