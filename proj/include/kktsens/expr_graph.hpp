#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "kktsens/errors.hpp"

namespace kktsens {

enum class OpKind : std::uint8_t {
  Constant,
  Variable,
  Parameter,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Pow,  // child ^ payload, payload fixed at build time
  Sin,
  Cos,
  Tan,
  Exp,
  Log,
  Sqrt,
};

struct NodeId {
  std::int32_t index = -1;
  bool valid() const { return index >= 0; }
  friend bool operator==(NodeId a, NodeId b) { return a.index == b.index; }
  friend bool operator!=(NodeId a, NodeId b) { return a.index != b.index; }
};

struct Node {
  OpKind kind;
  std::int32_t a = -1;    // first child, or variable/parameter ordinal
  std::int32_t b = -1;    // second child; for Pow: 1 iff the exponent is integral
  double payload = 0.0;   // constant value, or pow exponent
};

class EvalWorkspace;

// Append-only expression DAG. Node indices are topological by construction
// (children always precede parents), so every sweep is a single linear pass.
// Variable and parameter leaves are deduplicated per ordinal: x_i has exactly
// one leaf node, which is what lets reverse sweeps accumulate gradients in
// place. After seal() the graph is immutable and all evaluation methods are
// const and safe to share across threads (each thread brings its own
// workspace).
class ExprGraph {
 public:
  // -- construction ---------------------------------------------------------
  NodeId constant(double value);
  NodeId variable(int index);
  NodeId parameter(int index);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId neg(NodeId a);
  // Integer exponents with |e| <= 4 are expanded into multiplications (and one
  // division when negative); anything else becomes a Pow node. x^0 folds to 1.
  NodeId pow(NodeId base, double exponent);
  NodeId sin(NodeId a);
  NodeId cos(NodeId a);
  NodeId tan(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId sqrt(NodeId a);

  void seal() { sealed_ = true; }
  bool sealed() const { return sealed_; }

  int size() const { return static_cast<int>(nodes_.size()); }
  const Node& node(NodeId id) const { return nodes_[check(id)]; }
  int num_variables() const { return static_cast<int>(var_leaf_.size()); }
  int num_parameters() const { return static_cast<int>(param_leaf_.size()); }
  // Forces the leaf tables to cover [0, n) / [0, np) even for indices that no
  // expression mentions; gradients then have well-defined (zero) entries.
  void reserve_variables(int n);
  void reserve_parameters(int np);

  // -- evaluation -----------------------------------------------------------
  // All methods evaluate only the subgraph reachable from the requested
  // root(s), so domain violations in unrelated parts of the graph do not
  // raise. x and p must match num_variables()/num_parameters().
  double evaluate(EvalWorkspace& ws, NodeId root, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& p) const;

  // d root / d x, length num_variables().
  Eigen::VectorXd gradient_x(EvalWorkspace& ws, NodeId root,
                             const Eigen::VectorXd& x,
                             const Eigen::VectorXd& p) const;
  // d root / d p, length num_parameters().
  Eigen::VectorXd gradient_p(EvalWorkspace& ws, NodeId root,
                             const Eigen::VectorXd& x,
                             const Eigen::VectorXd& p) const;

  // Row i = gradient of roots[i]; one value sweep, one reverse sweep per row.
  Eigen::MatrixXd jacobian_x(EvalWorkspace& ws, std::span<const NodeId> roots,
                             const Eigen::VectorXd& x,
                             const Eigen::VectorXd& p) const;
  Eigen::MatrixXd jacobian_p(EvalWorkspace& ws, std::span<const NodeId> roots,
                             const Eigen::VectorXd& x,
                             const Eigen::VectorXd& p) const;

  // Hessians of L = f + sum_i lambda_i c_i via forward-over-reverse: one
  // reverse sweep fixes the adjoints of L, then each column k runs a forward
  // tangent sweep (seed x_k or p_k) and a tangent-of-adjoint sweep. The xx
  // result is symmetrized exactly (upper triangle mirrored onto the lower).
  Eigen::MatrixXd hessian_xx_lagrangian(EvalWorkspace& ws, NodeId f_root,
                                        std::span<const NodeId> c_roots,
                                        const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& lambda,
                                        const Eigen::VectorXd& p) const;
  // d^2 L / dx dp, num_variables() x num_parameters().
  Eigen::MatrixXd hessian_xp_lagrangian(EvalWorkspace& ws, NodeId f_root,
                                        std::span<const NodeId> c_roots,
                                        const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& lambda,
                                        const Eigen::VectorXd& p) const;

  // Convenience overloads that allocate a workspace internally.
  double evaluate(NodeId root, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& p) const;
  Eigen::VectorXd gradient_x(NodeId root, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& p) const;

 private:
  friend class EvalWorkspace;

  std::int32_t check(NodeId id) const;
  NodeId push(Node n);
  NodeId binary(OpKind kind, NodeId a, NodeId b);
  NodeId unary(OpKind kind, NodeId a);
  bool is_const(NodeId id) const { return nodes_[id.index].kind == OpKind::Constant; }
  double const_value(NodeId id) const { return nodes_[id.index].payload; }

  // Sweeps over the masked subgraph; workspace buffers must be sized already.
  void mark_reachable(EvalWorkspace& ws, std::span<const NodeId> roots) const;
  void forward_values(EvalWorkspace& ws, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& p) const;
  // Tangent seed: one variable (seed_var >= 0) or one parameter ordinal.
  void forward_tangents(EvalWorkspace& ws, int seed_var, int seed_param) const;
  void reverse_adjoints(EvalWorkspace& ws, std::span<const NodeId> roots,
                        const double* weights) const;
  // Propagates d/dt of the adjoints; requires values, tangents and adjoints.
  void reverse_adjoint_tangents(EvalWorkspace& ws) const;

  void check_x(const Eigen::VectorXd& x) const;
  void check_p(const Eigen::VectorXd& p) const;

  std::vector<Node> nodes_;
  std::vector<std::int32_t> var_leaf_;    // ordinal -> node index, -1 if absent
  std::vector<std::int32_t> param_leaf_;
  bool sealed_ = false;
};

// Scratch buffers for one evaluation thread. Reusable across calls and across
// graphs; resized on demand to the graph being evaluated.
class EvalWorkspace {
 public:
  EvalWorkspace() = default;

 private:
  friend class ExprGraph;
  void fit(int n) {
    if (static_cast<int>(value.size()) < n) {
      value.resize(n);
      tangent.resize(n);
      adjoint.resize(n);
      adjoint_dot.resize(n);
      reachable.resize(n);
    }
  }
  std::vector<double> value, tangent, adjoint, adjoint_dot;
  std::vector<unsigned char> reachable;
};

}  // namespace kktsens
