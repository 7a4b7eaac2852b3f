#include "kktsens/model.hpp"

#include <cmath>
#include <limits>

namespace kktsens {

namespace {

ExprGraph* require_same_graph(const Expr& a, const Expr& b) {
  if (!a.valid() || !b.valid()) {
    throw StaleHandle("operation on an empty expression");
  }
  if (a.graph() != b.graph()) {
    throw StaleHandle("expressions belong to different programs");
  }
  return a.graph();
}

ExprGraph* require_valid(const Expr& a) {
  if (!a.valid()) throw StaleHandle("operation on an empty expression");
  return a.graph();
}

}  // namespace

Expr::Expr(VariableRef v) {
  if (v.prog == nullptr || v.index < 0) throw StaleHandle("empty variable handle");
  graph_ = &v.prog->graph_;
  id_ = v.prog->vars_.at(v.index).leaf;
}

Expr::Expr(ParameterRef p) {
  if (p.prog == nullptr || p.index < 0) throw StaleHandle("empty parameter handle");
  graph_ = &p.prog->graph_;
  id_ = p.prog->params_.at(p.index).leaf;
}

Expr operator+(Expr a, Expr b) {
  ExprGraph* g = require_same_graph(a, b);
  return Expr(g, g->add(a.id(), b.id()));
}
Expr operator-(Expr a, Expr b) {
  ExprGraph* g = require_same_graph(a, b);
  return Expr(g, g->sub(a.id(), b.id()));
}
Expr operator*(Expr a, Expr b) {
  ExprGraph* g = require_same_graph(a, b);
  return Expr(g, g->mul(a.id(), b.id()));
}
Expr operator/(Expr a, Expr b) {
  ExprGraph* g = require_same_graph(a, b);
  return Expr(g, g->div(a.id(), b.id()));
}
Expr operator-(Expr a) {
  ExprGraph* g = require_valid(a);
  return Expr(g, g->neg(a.id()));
}

Expr operator+(Expr a, double b) {
  ExprGraph* g = require_valid(a);
  return Expr(g, g->add(a.id(), g->constant(b)));
}
Expr operator+(double a, Expr b) {
  ExprGraph* g = require_valid(b);
  return Expr(g, g->add(g->constant(a), b.id()));
}
Expr operator-(Expr a, double b) {
  ExprGraph* g = require_valid(a);
  return Expr(g, g->sub(a.id(), g->constant(b)));
}
Expr operator-(double a, Expr b) {
  ExprGraph* g = require_valid(b);
  return Expr(g, g->sub(g->constant(a), b.id()));
}
Expr operator*(Expr a, double b) {
  ExprGraph* g = require_valid(a);
  return Expr(g, g->mul(a.id(), g->constant(b)));
}
Expr operator*(double a, Expr b) {
  ExprGraph* g = require_valid(b);
  return Expr(g, g->mul(g->constant(a), b.id()));
}
Expr operator/(Expr a, double b) {
  ExprGraph* g = require_valid(a);
  return Expr(g, g->div(a.id(), g->constant(b)));
}
Expr operator/(double a, Expr b) {
  ExprGraph* g = require_valid(b);
  return Expr(g, g->div(g->constant(a), b.id()));
}
Expr pow(Expr base, double exponent) {
  ExprGraph* g = require_valid(base);
  return Expr(g, g->pow(base.id(), exponent));
}
Expr sin(Expr a) {
  ExprGraph* g = require_valid(a);
  return Expr(g, g->sin(a.id()));
}
Expr cos(Expr a) {
  ExprGraph* g = require_valid(a);
  return Expr(g, g->cos(a.id()));
}
Expr tan(Expr a) {
  ExprGraph* g = require_valid(a);
  return Expr(g, g->tan(a.id()));
}
Expr exp(Expr a) {
  ExprGraph* g = require_valid(a);
  return Expr(g, g->exp(a.id()));
}
Expr log(Expr a) {
  ExprGraph* g = require_valid(a);
  return Expr(g, g->log(a.id()));
}
Expr sqrt(Expr a) {
  ExprGraph* g = require_valid(a);
  return Expr(g, g->sqrt(a.id()));
}

void ParametricProgram::check_name(const std::string& name) const {
  if (name.empty()) throw InvalidBounds("empty name");
  for (const auto& v : vars_) {
    if (v.name == name) throw DuplicateName(name);
  }
  for (const auto& p : params_) {
    if (p.name == name) throw DuplicateName(name);
  }
}

VariableRef ParametricProgram::add_variable(const std::string& name,
                                            std::optional<double> lower,
                                            std::optional<double> upper) {
  check_name(name);
  if (lower && std::isnan(*lower)) throw InvalidBounds("lower bound is NaN");
  if (upper && std::isnan(*upper)) throw InvalidBounds("upper bound is NaN");
  if (lower && *lower == -std::numeric_limits<double>::infinity()) lower.reset();
  if (upper && *upper == std::numeric_limits<double>::infinity()) upper.reset();
  if (lower && std::isinf(*lower)) throw InvalidBounds("lower bound is +inf");
  if (upper && std::isinf(*upper)) throw InvalidBounds("upper bound is -inf");
  if (lower && upper && *lower > *upper) {
    throw InvalidBounds("lower bound exceeds upper bound for " + name);
  }
  const int index = num_variables();
  vars_.push_back(Var{name, lower, upper, graph_.variable(index)});
  return VariableRef{this, index};
}

ParameterRef ParametricProgram::add_parameter(const std::string& name,
                                              double value) {
  check_name(name);
  const int index = num_parameters();
  params_.push_back(Param{name, value, graph_.parameter(index)});
  return ParameterRef{this, index};
}

NodeId ParametricProgram::own(const Expr& e) const {
  if (!e.valid() || e.graph() != &graph_) {
    throw StaleHandle("expression does not belong to this program");
  }
  return e.id();
}

ConstraintRef ParametricProgram::add_constraint(Expr lhs, Relation rel,
                                                Expr rhs) {
  const NodeId l = own(lhs), r = own(rhs);
  const int index = num_constraints();
  cons_.push_back(Con{l, r, rel});
  return ConstraintRef{this, index};
}

void ParametricProgram::set_objective(Sense sense, Expr e) {
  objective_ = Objective{own(e), sense};
}

void ParametricProgram::set_parameter_value(ParameterRef p, double value) {
  if (p.prog != this) throw StaleHandle("parameter handle from another program");
  params_.at(p.index).value = value;
}

Sense ParametricProgram::objective_sense() const {
  if (!objective_) throw NoObjective();
  return objective_->sense;
}

Expr ParametricProgram::objective_expr() const {
  if (!objective_) throw NoObjective();
  return Expr(const_cast<ExprGraph*>(&graph_), objective_->root);
}

Eigen::VectorXd ParametricProgram::parameter_values() const {
  Eigen::VectorXd p(num_parameters());
  for (int i = 0; i < num_parameters(); ++i) p[i] = params_[i].value;
  return p;
}

std::optional<VariableRef> ParametricProgram::find_variable(
    const std::string& name) {
  for (int i = 0; i < num_variables(); ++i) {
    if (vars_[i].name == name) return VariableRef{this, i};
  }
  return std::nullopt;
}

std::optional<ParameterRef> ParametricProgram::find_parameter(
    const std::string& name) {
  for (int i = 0; i < num_parameters(); ++i) {
    if (params_[i].name == name) return ParameterRef{this, i};
  }
  return std::nullopt;
}

VariableRef ParametricProgram::variable(int i) {
  vars_.at(i);
  return VariableRef{this, i};
}

ParameterRef ParametricProgram::parameter(int i) {
  params_.at(i);
  return ParameterRef{this, i};
}

ConstraintRef ParametricProgram::constraint(int i) {
  cons_.at(i);
  return ConstraintRef{this, i};
}

Expr ParametricProgram::constraint_lhs(int i) const {
  return Expr(const_cast<ExprGraph*>(&graph_), cons_.at(i).lhs);
}

Expr ParametricProgram::constraint_rhs(int i) const {
  return Expr(const_cast<ExprGraph*>(&graph_), cons_.at(i).rhs);
}

CanonicalForm ParametricProgram::canonicalize() const {
  if (!objective_) throw NoObjective();

  CanonicalForm cf;
  cf.source_ = this;
  cf.n_user_ = num_variables();
  cf.m_user_ = num_constraints();
  cf.np_ = num_parameters();

  // Canonical variable layout: user variables first, then one slack per
  // inequality (constraint order), then one slack per finite upper bound
  // (variable order).
  int n_c = cf.n_user_;
  std::vector<int> ineq_slack(num_constraints(), -1);
  for (int j = 0; j < num_constraints(); ++j) {
    if (cons_[j].rel != Relation::Eq) ineq_slack[j] = n_c++;
  }
  std::vector<int> upper_slack(num_variables(), -1);
  for (int i = 0; i < num_variables(); ++i) {
    if (vars_[i].upper) upper_slack[i] = n_c++;
  }
  cf.n_ = n_c;

  cf.bounded_mask_.assign(n_c, 0);
  cf.shift_.assign(n_c, 0.0);
  for (int i = 0; i < cf.n_user_; ++i) {
    if (vars_[i].lower) {
      cf.bounded_mask_[i] = 1;
      cf.shift_[i] = *vars_[i].lower;
    }
  }
  for (int ci = cf.n_user_; ci < n_c; ++ci) cf.bounded_mask_[ci] = 1;
  for (int ci = 0; ci < n_c; ++ci) {
    if (cf.bounded_mask_[ci]) cf.bounded_.push_back(ci);
  }

  ExprGraph& g2 = cf.graph_;
  g2.reserve_variables(n_c);
  g2.reserve_parameters(cf.np_);

  // Rewrite the user graph; bounded user variables are substituted by
  // (shifted leaf + lower bound) so the canonical leaf is the >= 0 quantity.
  const int nn = graph_.size();
  std::vector<NodeId> map(nn);
  for (int i = 0; i < nn; ++i) {
    const Node& nd = graph_.node(NodeId{i});
    switch (nd.kind) {
      case OpKind::Constant: map[i] = g2.constant(nd.payload); break;
      case OpKind::Variable: {
        const NodeId leaf = g2.variable(nd.a);
        const double sh = cf.shift_[nd.a];
        map[i] = (sh != 0.0) ? g2.add(leaf, g2.constant(sh)) : leaf;
        break;
      }
      case OpKind::Parameter: map[i] = g2.parameter(nd.a); break;
      case OpKind::Add: map[i] = g2.add(map[nd.a], map[nd.b]); break;
      case OpKind::Sub: map[i] = g2.sub(map[nd.a], map[nd.b]); break;
      case OpKind::Mul: map[i] = g2.mul(map[nd.a], map[nd.b]); break;
      case OpKind::Div: map[i] = g2.div(map[nd.a], map[nd.b]); break;
      case OpKind::Neg: map[i] = g2.neg(map[nd.a]); break;
      case OpKind::Pow: map[i] = g2.pow(map[nd.a], nd.payload); break;
      case OpKind::Sin: map[i] = g2.sin(map[nd.a]); break;
      case OpKind::Cos: map[i] = g2.cos(map[nd.a]); break;
      case OpKind::Tan: map[i] = g2.tan(map[nd.a]); break;
      case OpKind::Exp: map[i] = g2.exp(map[nd.a]); break;
      case OpKind::Log: map[i] = g2.log(map[nd.a]); break;
      case OpKind::Sqrt: map[i] = g2.sqrt(map[nd.a]); break;
    }
  }

  // Constraint rows. Equalities read rhs - lhs so the multiplier is the
  // shadow price of the right-hand side; inequalities read lhs - rhs + s = 0
  // (>= is flipped into <= first).
  for (int j = 0; j < num_constraints(); ++j) {
    const Con& con = cons_[j];
    NodeId root;
    if (con.rel == Relation::Eq) {
      root = g2.sub(map[con.rhs.index], map[con.lhs.index]);
    } else if (con.rel == Relation::Le) {
      root = g2.add(g2.sub(map[con.lhs.index], map[con.rhs.index]),
                    g2.variable(ineq_slack[j]));
      cf.slacks_.push_back(CanonicalForm::SlackInfo{
          ineq_slack[j], j, CanonicalForm::SlackSource::Inequality, j});
    } else {
      root = g2.add(g2.sub(map[con.rhs.index], map[con.lhs.index]),
                    g2.variable(ineq_slack[j]));
      cf.slacks_.push_back(CanonicalForm::SlackInfo{
          ineq_slack[j], j, CanonicalForm::SlackSource::Inequality, j});
    }
    cf.constraints_.push_back(root);
  }

  // Upper bounds become rows x~ - (u - b) + s = 0 appended after the user
  // constraints, in variable order.
  for (int i = 0; i < num_variables(); ++i) {
    if (!vars_[i].upper) continue;
    const double ub = *vars_[i].upper - cf.shift_[i];
    const int row = static_cast<int>(cf.constraints_.size());
    const NodeId root =
        g2.add(g2.sub(g2.variable(i), g2.constant(ub)),
               g2.variable(upper_slack[i]));
    cf.slacks_.push_back(CanonicalForm::SlackInfo{
        upper_slack[i], row, CanonicalForm::SlackSource::UpperBound, i});
    cf.constraints_.push_back(root);
  }

  NodeId obj = map[objective_->root.index];
  if (objective_->sense == Sense::Maximize) {
    obj = g2.neg(obj);
    cf.objective_sign_ = -1.0;
  }
  cf.objective_ = obj;

  g2.seal();
  return cf;
}

Eigen::VectorXd CanonicalForm::user_variables(
    const Eigen::VectorXd& canonical_x) const {
  if (canonical_x.size() != n_) {
    throw DimensionMismatch("canonical point has wrong length");
  }
  Eigen::VectorXd out(n_user_);
  for (int i = 0; i < n_user_; ++i) out[i] = canonical_x[i] + shift_[i];
  return out;
}

}  // namespace kktsens
