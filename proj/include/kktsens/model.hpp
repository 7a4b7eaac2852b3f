#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kktsens/expr_graph.hpp"

namespace kktsens {

class ParametricProgram;

// Lightweight handle into a program's expression graph. Handles are only
// meaningful together with the program that issued them; every consumer
// checks provenance and throws StaleHandle on a mismatch.
struct VariableRef {
  ParametricProgram* prog = nullptr;
  int index = -1;
};

struct ParameterRef {
  ParametricProgram* prog = nullptr;
  int index = -1;
};

struct ConstraintRef {
  ParametricProgram* prog = nullptr;
  int index = -1;
};

enum class Relation { Eq, Le, Ge };
enum class Sense { Minimize, Maximize };

// Expression handle with value-like operator syntax. Operations append nodes
// to the owning program's graph.
class Expr {
 public:
  Expr() = default;
  Expr(ExprGraph* graph, NodeId id) : graph_(graph), id_(id) {}
  Expr(VariableRef v);    // implicit: variables and parameters read as exprs
  Expr(ParameterRef p);   // NOLINT

  ExprGraph* graph() const { return graph_; }
  NodeId id() const { return id_; }
  bool valid() const { return graph_ != nullptr && id_.valid(); }

 private:
  ExprGraph* graph_ = nullptr;
  NodeId id_;
};

Expr operator+(Expr a, Expr b);
Expr operator-(Expr a, Expr b);
Expr operator*(Expr a, Expr b);
Expr operator/(Expr a, Expr b);
Expr operator-(Expr a);
Expr operator+(Expr a, double b);
Expr operator+(double a, Expr b);
Expr operator-(Expr a, double b);
Expr operator-(double a, Expr b);
Expr operator*(Expr a, double b);
Expr operator*(double a, Expr b);
Expr operator/(Expr a, double b);
Expr operator/(double a, Expr b);
Expr pow(Expr base, double exponent);
Expr sin(Expr a);
Expr cos(Expr a);
Expr tan(Expr a);
Expr exp(Expr a);
Expr log(Expr a);
Expr sqrt(Expr a);

class CanonicalForm;

// Mutable problem description: named variables with optional bounds, named
// parameters with current values, equality/inequality constraints and one
// objective, all over a single shared expression graph.
class ParametricProgram {
 public:
  ParametricProgram() = default;
  ParametricProgram(const ParametricProgram&) = delete;
  ParametricProgram& operator=(const ParametricProgram&) = delete;
  ParametricProgram(ParametricProgram&&) = delete;
  ParametricProgram& operator=(ParametricProgram&&) = delete;

  VariableRef add_variable(const std::string& name,
                           std::optional<double> lower = std::nullopt,
                           std::optional<double> upper = std::nullopt);
  ParameterRef add_parameter(const std::string& name, double value);
  ConstraintRef add_constraint(Expr lhs, Relation rel, Expr rhs);
  void set_objective(Sense sense, Expr e);
  void set_parameter_value(ParameterRef p, double value);

  int num_variables() const { return static_cast<int>(vars_.size()); }
  int num_parameters() const { return static_cast<int>(params_.size()); }
  int num_constraints() const { return static_cast<int>(cons_.size()); }
  bool has_objective() const { return objective_.has_value(); }
  Sense objective_sense() const;
  Expr objective_expr() const;

  const std::string& variable_name(int i) const { return vars_.at(i).name; }
  const std::string& parameter_name(int i) const { return params_.at(i).name; }
  std::optional<double> lower_bound(int i) const { return vars_.at(i).lower; }
  std::optional<double> upper_bound(int i) const { return vars_.at(i).upper; }
  double parameter_value(int i) const { return params_.at(i).value; }
  Eigen::VectorXd parameter_values() const;

  std::optional<VariableRef> find_variable(const std::string& name);
  std::optional<ParameterRef> find_parameter(const std::string& name);

  VariableRef variable(int i);
  ParameterRef parameter(int i);
  ConstraintRef constraint(int i);
  Expr constraint_lhs(int i) const;
  Relation constraint_relation(int i) const { return cons_.at(i).rel; }
  Expr constraint_rhs(int i) const;

  ExprGraph& graph() { return graph_; }
  const ExprGraph& graph() const { return graph_; }

  // Translates to the canonical shape: minimize f(x~, p) subject to
  // c(x~, p) = 0 and x~_i >= 0 for the bounded variables. The result holds an
  // independent sealed graph; this program stays usable and must outlive it.
  CanonicalForm canonicalize() const;

 private:
  friend class Expr;

  struct Var {
    std::string name;
    std::optional<double> lower, upper;
    NodeId leaf;
  };
  struct Param {
    std::string name;
    double value;
    NodeId leaf;
  };
  struct Con {
    NodeId lhs, rhs;
    Relation rel;
  };
  struct Objective {
    NodeId root;
    Sense sense;
  };

  void check_name(const std::string& name) const;
  NodeId own(const Expr& e) const;

  ExprGraph graph_;
  std::vector<Var> vars_;
  std::vector<Param> params_;
  std::vector<Con> cons_;
  std::optional<Objective> objective_;
};

// Immutable canonical program: all data needed by the solver and the
// sensitivity system, plus the bookkeeping to map results back to user space.
class CanonicalForm {
 public:
  const ExprGraph& graph() const { return graph_; }
  NodeId objective_root() const { return objective_; }
  const std::vector<NodeId>& constraint_roots() const { return constraints_; }

  int num_vars() const { return n_; }                  // canonical n
  int num_constraints() const { return static_cast<int>(constraints_.size()); }
  int num_parameters() const { return np_; }
  int num_bounded() const { return static_cast<int>(bounded_.size()); }
  // Ascending canonical indices of the variables constrained to be >= 0.
  const std::vector<int>& bounded_indices() const { return bounded_; }
  bool is_bounded(int canonical) const { return bounded_mask_[canonical] != 0; }

  // user objective = objective_sign * canonical objective (max is negated)
  double objective_sign() const { return objective_sign_; }
  // user variable value = canonical value + shift (lower-bound translation)
  double shift(int canonical) const { return shift_[canonical]; }

  int num_user_vars() const { return n_user_; }
  int num_user_constraints() const { return m_user_; }
  int canonical_of_user(int user_index) const { return user_index; }

  // Origin of each canonical variable beyond the user block.
  enum class SlackSource { Inequality, UpperBound };
  struct SlackInfo {
    int canonical_index;
    int constraint_row;   // row whose residual the slack closes
    SlackSource source;
    int user_source;      // user constraint index or user variable index
  };
  const std::vector<SlackInfo>& slacks() const { return slacks_; }

  Eigen::VectorXd user_variables(const Eigen::VectorXd& canonical_x) const;
  double user_objective(double canonical_value) const {
    return objective_sign_ * canonical_value;
  }

  // Identity of the source program, for handle validation only.
  const ParametricProgram* source() const { return source_; }

 private:
  friend class ParametricProgram;

  ExprGraph graph_;
  NodeId objective_;
  std::vector<NodeId> constraints_;
  int n_ = 0, np_ = 0, n_user_ = 0, m_user_ = 0;
  std::vector<int> bounded_;
  std::vector<unsigned char> bounded_mask_;
  std::vector<double> shift_;
  std::vector<SlackInfo> slacks_;
  double objective_sign_ = 1.0;
  const ParametricProgram* source_ = nullptr;
};

}  // namespace kktsens
