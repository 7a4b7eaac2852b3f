#include "kktsens/expr_graph.hpp"

#include <cmath>
#include <limits>
#include <optional>

namespace kktsens {
namespace {

bool integral(double e) {
  return std::floor(e) == e && std::abs(e) <= 2147483647.0;
}

}  // namespace

std::int32_t ExprGraph::check(NodeId id) const {
  if (!id.valid() || id.index >= size()) {
    throw Error("InvalidNode", "node id out of range");
  }
  return id.index;
}

NodeId ExprGraph::push(Node n) {
  if (sealed_) throw Error("Sealed", "graph is sealed");
  nodes_.push_back(n);
  return NodeId{static_cast<std::int32_t>(nodes_.size() - 1)};
}

NodeId ExprGraph::constant(double value) {
  return push(Node{OpKind::Constant, -1, -1, value});
}

NodeId ExprGraph::variable(int index) {
  if (index < 0) throw Error("InvalidNode", "negative variable index");
  if (index >= static_cast<int>(var_leaf_.size())) var_leaf_.resize(index + 1, -1);
  if (var_leaf_[index] < 0) {
    var_leaf_[index] = push(Node{OpKind::Variable, index, -1, 0.0}).index;
  }
  return NodeId{var_leaf_[index]};
}

NodeId ExprGraph::parameter(int index) {
  if (index < 0) throw Error("InvalidNode", "negative parameter index");
  if (index >= static_cast<int>(param_leaf_.size())) param_leaf_.resize(index + 1, -1);
  if (param_leaf_[index] < 0) {
    param_leaf_[index] = push(Node{OpKind::Parameter, index, -1, 0.0}).index;
  }
  return NodeId{param_leaf_[index]};
}

void ExprGraph::reserve_variables(int n) {
  for (int i = 0; i < n; ++i) variable(i);
}

void ExprGraph::reserve_parameters(int np) {
  for (int i = 0; i < np; ++i) parameter(i);
}

namespace {

// Value of a primitive op, or nullopt when the arguments leave its domain
// (folding then defers to evaluation time, which reports the node).
std::optional<double> try_eval(OpKind kind, double a, double b, double payload) {
  switch (kind) {
    case OpKind::Add: return a + b;
    case OpKind::Sub: return a - b;
    case OpKind::Mul: return a * b;
    case OpKind::Div:
      if (b == 0.0) return std::nullopt;
      return a / b;
    case OpKind::Neg: return -a;
    case OpKind::Pow:
      if (!integral(payload) && a <= 0.0) return std::nullopt;
      if (integral(payload) && payload < 0.0 && a == 0.0) return std::nullopt;
      return std::pow(a, payload);
    case OpKind::Sin: return std::sin(a);
    case OpKind::Cos: return std::cos(a);
    case OpKind::Tan: return std::tan(a);
    case OpKind::Exp: return std::exp(a);
    case OpKind::Log:
      if (a <= 0.0) return std::nullopt;
      return std::log(a);
    case OpKind::Sqrt:
      if (a < 0.0) return std::nullopt;
      return std::sqrt(a);
    default: return std::nullopt;
  }
}

}  // namespace

NodeId ExprGraph::binary(OpKind kind, NodeId a, NodeId b) {
  check(a);
  check(b);
  if (is_const(a) && is_const(b)) {
    if (auto v = try_eval(kind, const_value(a), const_value(b), 0.0)) {
      return constant(*v);
    }
  }
  return push(Node{kind, a.index, b.index, 0.0});
}

NodeId ExprGraph::unary(OpKind kind, NodeId a) {
  check(a);
  if (is_const(a)) {
    if (auto v = try_eval(kind, const_value(a), 0.0, 0.0)) return constant(*v);
  }
  return push(Node{kind, a.index, -1, 0.0});
}

NodeId ExprGraph::add(NodeId a, NodeId b) { return binary(OpKind::Add, a, b); }
NodeId ExprGraph::sub(NodeId a, NodeId b) { return binary(OpKind::Sub, a, b); }
NodeId ExprGraph::mul(NodeId a, NodeId b) { return binary(OpKind::Mul, a, b); }
NodeId ExprGraph::div(NodeId a, NodeId b) { return binary(OpKind::Div, a, b); }
NodeId ExprGraph::neg(NodeId a) { return unary(OpKind::Neg, a); }
NodeId ExprGraph::sin(NodeId a) { return unary(OpKind::Sin, a); }
NodeId ExprGraph::cos(NodeId a) { return unary(OpKind::Cos, a); }
NodeId ExprGraph::tan(NodeId a) { return unary(OpKind::Tan, a); }
NodeId ExprGraph::exp(NodeId a) { return unary(OpKind::Exp, a); }
NodeId ExprGraph::log(NodeId a) { return unary(OpKind::Log, a); }
NodeId ExprGraph::sqrt(NodeId a) { return unary(OpKind::Sqrt, a); }

NodeId ExprGraph::pow(NodeId base, double exponent) {
  check(base);
  if (integral(exponent) && std::abs(exponent) <= 4.0) {
    int k = static_cast<int>(std::abs(exponent));
    if (k == 0) return constant(1.0);
    NodeId r = base;
    if (k == 2) {
      r = mul(base, base);
    } else if (k == 3) {
      r = mul(mul(base, base), base);
    } else if (k == 4) {
      NodeId sq = mul(base, base);
      r = mul(sq, sq);
    }
    return exponent < 0.0 ? div(constant(1.0), r) : r;
  }
  if (is_const(base)) {
    if (auto v = try_eval(OpKind::Pow, const_value(base), 0.0, exponent)) {
      return constant(*v);
    }
  }
  // b doubles as an is-integral flag; Pow has a single child.
  return push(Node{OpKind::Pow, base.index, integral(exponent) ? 1 : 0, exponent});
}

void ExprGraph::check_x(const Eigen::VectorXd& x) const {
  if (x.size() != num_variables()) {
    throw DimensionMismatch("x has length " + std::to_string(x.size()) +
                            ", graph has " + std::to_string(num_variables()) +
                            " variables");
  }
}

void ExprGraph::check_p(const Eigen::VectorXd& p) const {
  if (p.size() != num_parameters()) {
    throw DimensionMismatch("p has length " + std::to_string(p.size()) +
                            ", graph has " + std::to_string(num_parameters()) +
                            " parameters");
  }
}

void ExprGraph::mark_reachable(EvalWorkspace& ws,
                               std::span<const NodeId> roots) const {
  const int n = size();
  ws.fit(n);
  std::fill(ws.reachable.begin(), ws.reachable.begin() + n, 0);
  for (NodeId r : roots) ws.reachable[check(r)] = 1;
  for (int i = n - 1; i >= 0; --i) {
    if (!ws.reachable[i]) continue;
    const Node& nd = nodes_[i];
    switch (nd.kind) {
      case OpKind::Constant:
      case OpKind::Variable:
      case OpKind::Parameter:
        break;
      case OpKind::Add:
      case OpKind::Sub:
      case OpKind::Mul:
      case OpKind::Div:
        ws.reachable[nd.a] = 1;
        ws.reachable[nd.b] = 1;
        break;
      default:
        ws.reachable[nd.a] = 1;
        break;
    }
  }
}

void ExprGraph::forward_values(EvalWorkspace& ws, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& p) const {
  const int n = size();
  auto& v = ws.value;
  for (int i = 0; i < n; ++i) {
    if (!ws.reachable[i]) continue;
    const Node& nd = nodes_[i];
    switch (nd.kind) {
      case OpKind::Constant: v[i] = nd.payload; break;
      case OpKind::Variable: v[i] = x[nd.a]; break;
      case OpKind::Parameter: v[i] = p[nd.a]; break;
      case OpKind::Add: v[i] = v[nd.a] + v[nd.b]; break;
      case OpKind::Sub: v[i] = v[nd.a] - v[nd.b]; break;
      case OpKind::Mul: v[i] = v[nd.a] * v[nd.b]; break;
      case OpKind::Div:
        if (v[nd.b] == 0.0) throw DomainError(i, "division by zero");
        v[i] = v[nd.a] / v[nd.b];
        break;
      case OpKind::Neg: v[i] = -v[nd.a]; break;
      case OpKind::Pow:
        if (nd.b == 0 && v[nd.a] <= 0.0) {
          throw DomainError(i, "nonpositive base of fractional power");
        }
        if (nd.b == 1 && nd.payload < 0.0 && v[nd.a] == 0.0) {
          throw DomainError(i, "zero base of negative power");
        }
        v[i] = std::pow(v[nd.a], nd.payload);
        break;
      case OpKind::Sin: v[i] = std::sin(v[nd.a]); break;
      case OpKind::Cos: v[i] = std::cos(v[nd.a]); break;
      case OpKind::Tan: v[i] = std::tan(v[nd.a]); break;
      case OpKind::Exp: v[i] = std::exp(v[nd.a]); break;
      case OpKind::Log:
        if (v[nd.a] <= 0.0) throw DomainError(i, "log of nonpositive argument");
        v[i] = std::log(v[nd.a]);
        break;
      case OpKind::Sqrt:
        if (v[nd.a] < 0.0) throw DomainError(i, "sqrt of negative argument");
        v[i] = std::sqrt(v[nd.a]);
        break;
    }
  }
}

void ExprGraph::forward_tangents(EvalWorkspace& ws, int seed_var,
                                 int seed_param) const {
  const int n = size();
  const auto& v = ws.value;
  auto& t = ws.tangent;
  for (int i = 0; i < n; ++i) {
    if (!ws.reachable[i]) continue;
    const Node& nd = nodes_[i];
    switch (nd.kind) {
      case OpKind::Constant: t[i] = 0.0; break;
      case OpKind::Variable: t[i] = (nd.a == seed_var) ? 1.0 : 0.0; break;
      case OpKind::Parameter: t[i] = (nd.a == seed_param) ? 1.0 : 0.0; break;
      case OpKind::Add: t[i] = t[nd.a] + t[nd.b]; break;
      case OpKind::Sub: t[i] = t[nd.a] - t[nd.b]; break;
      case OpKind::Mul: t[i] = t[nd.a] * v[nd.b] + v[nd.a] * t[nd.b]; break;
      case OpKind::Div: t[i] = (t[nd.a] - v[i] * t[nd.b]) / v[nd.b]; break;
      case OpKind::Neg: t[i] = -t[nd.a]; break;
      case OpKind::Pow:
        t[i] = nd.payload * std::pow(v[nd.a], nd.payload - 1.0) * t[nd.a];
        break;
      case OpKind::Sin: t[i] = std::cos(v[nd.a]) * t[nd.a]; break;
      case OpKind::Cos: t[i] = -std::sin(v[nd.a]) * t[nd.a]; break;
      case OpKind::Tan: t[i] = (1.0 + v[i] * v[i]) * t[nd.a]; break;
      case OpKind::Exp: t[i] = v[i] * t[nd.a]; break;
      case OpKind::Log: t[i] = t[nd.a] / v[nd.a]; break;
      case OpKind::Sqrt: t[i] = 0.5 / v[i] * t[nd.a]; break;
    }
  }
}

void ExprGraph::reverse_adjoints(EvalWorkspace& ws,
                                 std::span<const NodeId> roots,
                                 const double* weights) const {
  const int n = size();
  const auto& v = ws.value;
  auto& a = ws.adjoint;
  for (int i = 0; i < n; ++i) {
    if (ws.reachable[i]) a[i] = 0.0;
  }
  for (std::size_t k = 0; k < roots.size(); ++k) {
    a[roots[k].index] += weights ? weights[k] : 1.0;
  }
  for (int i = n - 1; i >= 0; --i) {
    if (!ws.reachable[i]) continue;
    const double ai = a[i];
    if (ai == 0.0) continue;
    const Node& nd = nodes_[i];
    switch (nd.kind) {
      case OpKind::Constant:
      case OpKind::Variable:
      case OpKind::Parameter:
        break;
      case OpKind::Add:
        a[nd.a] += ai;
        a[nd.b] += ai;
        break;
      case OpKind::Sub:
        a[nd.a] += ai;
        a[nd.b] -= ai;
        break;
      case OpKind::Mul:
        a[nd.a] += v[nd.b] * ai;
        a[nd.b] += v[nd.a] * ai;
        break;
      case OpKind::Div:
        a[nd.a] += ai / v[nd.b];
        a[nd.b] -= v[i] / v[nd.b] * ai;
        break;
      case OpKind::Neg: a[nd.a] -= ai; break;
      case OpKind::Pow:
        a[nd.a] += nd.payload * std::pow(v[nd.a], nd.payload - 1.0) * ai;
        break;
      case OpKind::Sin: a[nd.a] += std::cos(v[nd.a]) * ai; break;
      case OpKind::Cos: a[nd.a] -= std::sin(v[nd.a]) * ai; break;
      case OpKind::Tan: a[nd.a] += (1.0 + v[i] * v[i]) * ai; break;
      case OpKind::Exp: a[nd.a] += v[i] * ai; break;
      case OpKind::Log: a[nd.a] += ai / v[nd.a]; break;
      case OpKind::Sqrt: a[nd.a] += 0.5 / v[i] * ai; break;
    }
  }
}

// Tangent of the reverse sweep: for node value f(u, w),
//   adot_u += f_u * adot_i + (f_uu * t_u + f_uw * t_w) * a_i
// with a_i the fixed adjoints from reverse_adjoints and t the current tangent
// direction. One call per Hessian column.
void ExprGraph::reverse_adjoint_tangents(EvalWorkspace& ws) const {
  const int n = size();
  const auto& v = ws.value;
  const auto& t = ws.tangent;
  const auto& a = ws.adjoint;
  auto& ad = ws.adjoint_dot;
  for (int i = 0; i < n; ++i) {
    if (ws.reachable[i]) ad[i] = 0.0;
  }
  for (int i = n - 1; i >= 0; --i) {
    if (!ws.reachable[i]) continue;
    const double ai = a[i];
    const double adi = ad[i];
    if (ai == 0.0 && adi == 0.0) continue;
    const Node& nd = nodes_[i];
    switch (nd.kind) {
      case OpKind::Constant:
      case OpKind::Variable:
      case OpKind::Parameter:
        break;
      case OpKind::Add:
        ad[nd.a] += adi;
        ad[nd.b] += adi;
        break;
      case OpKind::Sub:
        ad[nd.a] += adi;
        ad[nd.b] -= adi;
        break;
      case OpKind::Mul:
        ad[nd.a] += v[nd.b] * adi + t[nd.b] * ai;
        ad[nd.b] += v[nd.a] * adi + t[nd.a] * ai;
        break;
      case OpKind::Div: {
        const double w = v[nd.b];
        const double w2 = w * w;
        ad[nd.a] += adi / w - t[nd.b] / w2 * ai;
        ad[nd.b] += -v[nd.a] / w2 * adi +
                    (-t[nd.a] / w2 + 2.0 * v[nd.a] * t[nd.b] / (w2 * w)) * ai;
        break;
      }
      case OpKind::Neg: ad[nd.a] -= adi; break;
      case OpKind::Pow: {
        const double e = nd.payload;
        const double d1 = e * std::pow(v[nd.a], e - 1.0);
        const double d2 = e * (e - 1.0) * std::pow(v[nd.a], e - 2.0);
        ad[nd.a] += d1 * adi + d2 * t[nd.a] * ai;
        break;
      }
      case OpKind::Sin: {
        const double c = std::cos(v[nd.a]);
        ad[nd.a] += c * adi - v[i] * t[nd.a] * ai;
        break;
      }
      case OpKind::Cos: {
        const double s = std::sin(v[nd.a]);
        ad[nd.a] += -s * adi - v[i] * t[nd.a] * ai;
        break;
      }
      case OpKind::Tan: {
        const double d1 = 1.0 + v[i] * v[i];
        ad[nd.a] += d1 * adi + 2.0 * v[i] * d1 * t[nd.a] * ai;
        break;
      }
      case OpKind::Exp:
        ad[nd.a] += v[i] * adi + v[i] * t[nd.a] * ai;
        break;
      case OpKind::Log: {
        const double u = v[nd.a];
        ad[nd.a] += adi / u - t[nd.a] / (u * u) * ai;
        break;
      }
      case OpKind::Sqrt: {
        const double s = v[i];
        ad[nd.a] += 0.5 / s * adi - 0.25 / (v[nd.a] * s) * t[nd.a] * ai;
        break;
      }
    }
  }
}

double ExprGraph::evaluate(EvalWorkspace& ws, NodeId root,
                           const Eigen::VectorXd& x,
                           const Eigen::VectorXd& p) const {
  check_x(x);
  check_p(p);
  const NodeId roots[] = {root};
  mark_reachable(ws, roots);
  forward_values(ws, x, p);
  return ws.value[root.index];
}

Eigen::VectorXd ExprGraph::gradient_x(EvalWorkspace& ws, NodeId root,
                                      const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& p) const {
  check_x(x);
  check_p(p);
  const NodeId roots[] = {root};
  mark_reachable(ws, roots);
  forward_values(ws, x, p);
  reverse_adjoints(ws, roots, nullptr);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(num_variables());
  for (int i = 0; i < num_variables(); ++i) {
    const std::int32_t leaf = var_leaf_[i];
    if (leaf >= 0 && ws.reachable[leaf]) g[i] = ws.adjoint[leaf];
  }
  return g;
}

Eigen::VectorXd ExprGraph::gradient_p(EvalWorkspace& ws, NodeId root,
                                      const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& p) const {
  check_x(x);
  check_p(p);
  const NodeId roots[] = {root};
  mark_reachable(ws, roots);
  forward_values(ws, x, p);
  reverse_adjoints(ws, roots, nullptr);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(num_parameters());
  for (int i = 0; i < num_parameters(); ++i) {
    const std::int32_t leaf = param_leaf_[i];
    if (leaf >= 0 && ws.reachable[leaf]) g[i] = ws.adjoint[leaf];
  }
  return g;
}

Eigen::MatrixXd ExprGraph::jacobian_x(EvalWorkspace& ws,
                                      std::span<const NodeId> roots,
                                      const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& p) const {
  check_x(x);
  check_p(p);
  mark_reachable(ws, roots);
  forward_values(ws, x, p);
  Eigen::MatrixXd J =
      Eigen::MatrixXd::Zero(static_cast<int>(roots.size()), num_variables());
  for (std::size_t r = 0; r < roots.size(); ++r) {
    const NodeId one[] = {roots[r]};
    reverse_adjoints(ws, one, nullptr);
    for (int i = 0; i < num_variables(); ++i) {
      const std::int32_t leaf = var_leaf_[i];
      if (leaf >= 0 && ws.reachable[leaf]) J(static_cast<int>(r), i) = ws.adjoint[leaf];
    }
  }
  return J;
}

Eigen::MatrixXd ExprGraph::jacobian_p(EvalWorkspace& ws,
                                      std::span<const NodeId> roots,
                                      const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& p) const {
  check_x(x);
  check_p(p);
  mark_reachable(ws, roots);
  forward_values(ws, x, p);
  Eigen::MatrixXd J =
      Eigen::MatrixXd::Zero(static_cast<int>(roots.size()), num_parameters());
  for (std::size_t r = 0; r < roots.size(); ++r) {
    const NodeId one[] = {roots[r]};
    reverse_adjoints(ws, one, nullptr);
    for (int i = 0; i < num_parameters(); ++i) {
      const std::int32_t leaf = param_leaf_[i];
      if (leaf >= 0 && ws.reachable[leaf]) J(static_cast<int>(r), i) = ws.adjoint[leaf];
    }
  }
  return J;
}

Eigen::MatrixXd ExprGraph::hessian_xx_lagrangian(
    EvalWorkspace& ws, NodeId f_root, std::span<const NodeId> c_roots,
    const Eigen::VectorXd& x, const Eigen::VectorXd& lambda,
    const Eigen::VectorXd& p) const {
  check_x(x);
  check_p(p);
  if (lambda.size() != static_cast<Eigen::Index>(c_roots.size())) {
    throw DimensionMismatch("lambda length does not match constraint count");
  }
  std::vector<NodeId> roots;
  roots.reserve(c_roots.size() + 1);
  roots.push_back(f_root);
  roots.insert(roots.end(), c_roots.begin(), c_roots.end());
  std::vector<double> weights(roots.size(), 1.0);
  for (Eigen::Index i = 0; i < lambda.size(); ++i) weights[i + 1] = lambda[i];

  mark_reachable(ws, roots);
  forward_values(ws, x, p);
  reverse_adjoints(ws, roots, weights.data());

  const int n = num_variables();
  Eigen::MatrixXd H(n, n);
  for (int k = 0; k < n; ++k) {
    forward_tangents(ws, k, -1);
    reverse_adjoint_tangents(ws);
    for (int j = 0; j < n; ++j) {
      const std::int32_t leaf = var_leaf_[j];
      H(j, k) = (leaf >= 0 && ws.reachable[leaf]) ? ws.adjoint_dot[leaf] : 0.0;
    }
  }
  for (int k = 0; k < n; ++k) {
    for (int j = k + 1; j < n; ++j) H(j, k) = H(k, j);
  }
  return H;
}

Eigen::MatrixXd ExprGraph::hessian_xp_lagrangian(
    EvalWorkspace& ws, NodeId f_root, std::span<const NodeId> c_roots,
    const Eigen::VectorXd& x, const Eigen::VectorXd& lambda,
    const Eigen::VectorXd& p) const {
  check_x(x);
  check_p(p);
  if (lambda.size() != static_cast<Eigen::Index>(c_roots.size())) {
    throw DimensionMismatch("lambda length does not match constraint count");
  }
  std::vector<NodeId> roots;
  roots.reserve(c_roots.size() + 1);
  roots.push_back(f_root);
  roots.insert(roots.end(), c_roots.begin(), c_roots.end());
  std::vector<double> weights(roots.size(), 1.0);
  for (Eigen::Index i = 0; i < lambda.size(); ++i) weights[i + 1] = lambda[i];

  mark_reachable(ws, roots);
  forward_values(ws, x, p);
  reverse_adjoints(ws, roots, weights.data());

  const int n = num_variables();
  const int np = num_parameters();
  Eigen::MatrixXd H(n, np);
  for (int q = 0; q < np; ++q) {
    forward_tangents(ws, -1, q);
    reverse_adjoint_tangents(ws);
    for (int j = 0; j < n; ++j) {
      const std::int32_t leaf = var_leaf_[j];
      H(j, q) = (leaf >= 0 && ws.reachable[leaf]) ? ws.adjoint_dot[leaf] : 0.0;
    }
  }
  return H;
}

double ExprGraph::evaluate(NodeId root, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& p) const {
  EvalWorkspace ws;
  return evaluate(ws, root, x, p);
}

Eigen::VectorXd ExprGraph::gradient_x(NodeId root, const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& p) const {
  EvalWorkspace ws;
  return gradient_x(ws, root, x, p);
}

}  // namespace kktsens
