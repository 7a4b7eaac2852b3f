#include "kktsens/expr_graph.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

#include "support/oracles.hpp"

using namespace kktsens;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

int count_kind(const ExprGraph& g, OpKind k) {
  int c = 0;
  for (int i = 0; i < g.size(); ++i) {
    if (g.node(NodeId{i}).kind == k) ++c;
  }
  return c;
}

}  // namespace

TEST_CASE("evaluate and first derivatives of a small affine-bilinear graph") {
  ExprGraph g;
  // (x0 + 2 x1) * p0
  NodeId root = g.mul(g.add(g.variable(0), g.mul(g.constant(2.0), g.variable(1))),
                      g.parameter(0));
  g.seal();

  EvalWorkspace ws;
  const auto x = vec({1.0, 2.0});
  const auto p = vec({2.0});
  CHECK(g.evaluate(ws, root, x, p) == doctest::Approx(10.0));

  const Eigen::VectorXd gx = g.gradient_x(ws, root, x, p);
  CHECK(gx[0] == doctest::Approx(2.0));
  CHECK(gx[1] == doctest::Approx(4.0));

  const Eigen::VectorXd gp = g.gradient_p(ws, root, x, p);
  CHECK(gp[0] == doctest::Approx(5.0));
}

TEST_CASE("dispatch objective: gradient and Lagrangian Hessian") {
  ExprGraph g;
  NodeId g1 = g.variable(0), g2 = g.variable(1), phi = g.variable(2);
  NodeId f = g.add(
      g.add(g.add(g.mul(g.constant(20.0), g1), g.mul(g.constant(30.0), g2)),
            g.add(g.mul(g.constant(0.2), g.pow(g1, 2.0)),
                  g.mul(g.constant(0.1), g.pow(g2, 2.0)))),
      g.mul(g.constant(1000.0), phi));
  NodeId c = g.sub(g.parameter(0), g.add(g.add(g1, g2), phi));
  g.seal();

  EvalWorkspace ws;
  const auto x = vec({50.0, 50.0, 0.0});
  const auto p = vec({100.0});

  const Eigen::VectorXd gx = g.gradient_x(ws, f, x, p);
  CHECK(gx[0] == doctest::Approx(40.0));
  CHECK(gx[1] == doctest::Approx(40.0));
  CHECK(gx[2] == doctest::Approx(1000.0));

  const NodeId cs[] = {c};
  const Eigen::MatrixXd W =
      g.hessian_xx_lagrangian(ws, f, cs, x, vec({40.0}), p);
  CHECK(W(0, 0) == doctest::Approx(0.4));
  CHECK(W(1, 1) == doctest::Approx(0.2));
  CHECK(W(2, 2) == doctest::Approx(0.0));
  CHECK(W(0, 1) == doctest::Approx(0.0));
  // exact symmetry, not approximate
  CHECK(W == W.transpose().eval());
}

TEST_CASE("two-link kinematics Jacobian at the elbow-up pose") {
  ExprGraph g;
  NodeId t1 = g.variable(0), t2 = g.variable(1);
  NodeId fx = g.add(g.cos(t1), g.cos(g.add(t1, t2)));
  NodeId fy = g.add(g.sin(t1), g.sin(g.add(t1, t2)));
  g.seal();

  EvalWorkspace ws;
  const auto x = vec({0.0, M_PI / 2.0});
  const Eigen::VectorXd p(0);
  const NodeId roots[] = {fx, fy};
  const Eigen::MatrixXd J = g.jacobian_x(ws, roots, x, p);
  CHECK(J(0, 0) == doctest::Approx(-1.0));
  CHECK(J(0, 1) == doctest::Approx(-1.0));
  CHECK(J(1, 0) == doctest::Approx(1.0));
  CHECK(J(1, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("Hessian against an independently coded closed form") {
  ExprGraph g;
  // f = exp(x0) * log(x1)
  NodeId f = g.mul(g.exp(g.variable(0)), g.log(g.variable(1)));
  g.seal();

  EvalWorkspace ws;
  const auto x = vec({0.5, 2.0});
  const Eigen::VectorXd p(0);
  const Eigen::VectorXd lam(0);
  const Eigen::MatrixXd H =
      g.hessian_xx_lagrangian(ws, f, {}, x, lam, p);

  const double e = std::exp(0.5), l = std::log(2.0);
  CHECK(H(0, 0) == doctest::Approx(e * l));
  CHECK(H(0, 1) == doctest::Approx(e / 2.0));
  CHECK(H(1, 0) == doctest::Approx(e / 2.0));
  CHECK(H(1, 1) == doctest::Approx(-e / 4.0));
}

TEST_CASE("mixed variable-parameter Lagrangian Hessian") {
  ExprGraph g;
  // L = p0 * x0^2 + lambda * (x0 * p1)
  NodeId f = g.mul(g.parameter(0), g.pow(g.variable(0), 2.0));
  NodeId c = g.mul(g.variable(0), g.parameter(1));
  g.seal();

  EvalWorkspace ws;
  const NodeId cs[] = {c};
  const Eigen::MatrixXd Hxp = g.hessian_xp_lagrangian(
      ws, f, cs, vec({3.0}), vec({7.0}), vec({2.0, 0.0}));
  REQUIRE(Hxp.rows() == 1);
  REQUIRE(Hxp.cols() == 2);
  CHECK(Hxp(0, 0) == doctest::Approx(6.0));   // d/dp0 of 2 p0 x0
  CHECK(Hxp(0, 1) == doctest::Approx(7.0));   // d/dp1 of lambda p1
}

TEST_CASE("power lowering and constant folding") {
  ExprGraph g;
  NodeId x = g.variable(0);

  SUBCASE("small integer exponents become multiplications") {
    g.pow(x, 3.0);
    CHECK(count_kind(g, OpKind::Pow) == 0);
    CHECK(count_kind(g, OpKind::Mul) == 2);
  }
  SUBCASE("x^1 is x itself, x^0 folds to 1") {
    CHECK(g.pow(x, 1.0) == x);
    NodeId one = g.pow(x, 0.0);
    CHECK(g.node(one).kind == OpKind::Constant);
    CHECK(g.node(one).payload == 1.0);
  }
  SUBCASE("negative small exponents go through a reciprocal") {
    NodeId r = g.pow(x, -2.0);
    CHECK(g.node(r).kind == OpKind::Div);
    CHECK(count_kind(g, OpKind::Pow) == 0);
    CHECK(g.evaluate(r, vec({2.0}), Eigen::VectorXd(0)) == doctest::Approx(0.25));
  }
  SUBCASE("large and fractional exponents stay as a power node") {
    NodeId r8 = g.pow(x, 8.0);
    NodeId rh = g.pow(x, 2.5);
    CHECK(g.node(r8).kind == OpKind::Pow);
    CHECK(g.node(rh).kind == OpKind::Pow);
    CHECK(g.evaluate(rh, vec({4.0}), Eigen::VectorXd(0)) == doctest::Approx(32.0));
    CHECK_THROWS_AS(g.evaluate(rh, vec({-1.0}), Eigen::VectorXd(0)), DomainError);
  }
  SUBCASE("literal subtrees fold, variables do not") {
    NodeId c = g.add(g.constant(2.0), g.constant(3.0));
    CHECK(g.node(c).kind == OpKind::Constant);
    CHECK(g.node(c).payload == 5.0);
    NodeId s = g.add(x, g.constant(0.0));
    CHECK(g.node(s).kind == OpKind::Add);
  }
  SUBCASE("folding never raises; bad literals defer to evaluation") {
    NodeId r = g.div(g.constant(1.0), g.constant(0.0));
    CHECK(g.node(r).kind == OpKind::Div);
    CHECK_THROWS_AS(g.evaluate(r, vec({0.0}), Eigen::VectorXd(0)), DomainError);
  }
}

TEST_CASE("domain errors identify the node and respect root reachability") {
  ExprGraph g;
  NodeId x = g.variable(0);
  NodeId bad = g.log(x);
  NodeId good = g.add(x, g.constant(1.0));
  g.seal();

  EvalWorkspace ws;
  const Eigen::VectorXd p(0);

  // Evaluating the unrelated root must not touch the log node.
  CHECK(g.evaluate(ws, good, vec({-1.0}), p) == doctest::Approx(0.0));

  try {
    g.evaluate(ws, bad, vec({-1.0}), p);
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(e.node == bad.index);
  }
}

TEST_CASE("derivatives match central differences on randomized points") {
  // One rich expression exercising every op kind.
  ExprGraph g;
  NodeId x0 = g.variable(0), x1 = g.variable(1), x2 = g.variable(2);
  NodeId term1 = g.mul(g.sin(g.mul(x0, x1)), g.cos(x2));
  NodeId term2 = g.div(g.exp(g.mul(g.constant(0.3), x0)), g.add(x1, g.constant(2.0)));
  NodeId term3 = g.mul(g.log(g.add(x2, g.constant(1.5))), g.sqrt(g.add(x1, g.constant(1.0))));
  NodeId term4 = g.add(g.pow(x0, 3.0), g.pow(g.add(x2, g.constant(2.0)), 2.5));
  NodeId term5 = g.tan(g.mul(g.constant(0.2), x1));
  NodeId f = g.add(g.add(term1, term2), g.add(g.add(term3, term4), term5));
  g.seal();

  EvalWorkspace ws;
  const Eigen::VectorXd p(0);
  auto fn = [&](const Eigen::VectorXd& x) { return g.evaluate(ws, f, x, p); };

  std::mt19937 rng(20240817);
  std::uniform_real_distribution<double> dist(0.3, 1.7);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd x(3);
    for (int i = 0; i < 3; ++i) x[i] = dist(rng);

    const Eigen::VectorXd gx = g.gradient_x(ws, f, x, p);
    const Eigen::VectorXd gfd = testsup::fd_gradient(fn, x);
    for (int i = 0; i < 3; ++i) {
      CHECK(testsup::rel_err(gx[i], gfd[i]) < 1e-6);
    }

    const Eigen::VectorXd lam(0);
    const Eigen::MatrixXd H = g.hessian_xx_lagrangian(ws, f, {}, x, lam, p);
    const Eigen::MatrixXd Hfd = testsup::fd_hessian(fn, x);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        CHECK(testsup::rel_err(H(i, j), Hfd(i, j)) < 1e-5);
      }
    }
  }
}

TEST_CASE("weighted multi-root Hessian equals the weighted sum") {
  ExprGraph g;
  NodeId x0 = g.variable(0), x1 = g.variable(1);
  NodeId f = g.mul(x0, g.mul(x1, x1));
  NodeId c0 = g.sin(g.mul(x0, x1));
  NodeId c1 = g.exp(g.sub(x0, x1));
  g.seal();

  EvalWorkspace ws;
  const auto x = vec({0.7, 1.3});
  const Eigen::VectorXd p(0);
  const auto lam = vec({2.0, -0.5});

  const NodeId cs[] = {c0, c1};
  const Eigen::MatrixXd W = g.hessian_xx_lagrangian(ws, f, cs, x, lam, p);

  const Eigen::VectorXd none(0);
  const NodeId c0s[] = {c0};
  const NodeId c1s[] = {c1};
  const Eigen::MatrixXd Hf = g.hessian_xx_lagrangian(ws, f, {}, x, none, p);
  const Eigen::MatrixXd Hc0 = g.hessian_xx_lagrangian(ws, c0, {}, x, none, p);
  const Eigen::MatrixXd Hc1 = g.hessian_xx_lagrangian(ws, c1, {}, x, none, p);

  const Eigen::MatrixXd expect = Hf + 2.0 * Hc0 - 0.5 * Hc1;
  CHECK((W - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("repeated evaluation is bitwise deterministic") {
  ExprGraph g;
  NodeId f = g.mul(g.sin(g.variable(0)), g.exp(g.variable(1)));
  g.seal();

  EvalWorkspace ws;
  const auto x = vec({0.123456789, -0.87654321});
  const Eigen::VectorXd p(0);
  const Eigen::VectorXd g1 = g.gradient_x(ws, f, x, p);
  const Eigen::VectorXd g2 = g.gradient_x(ws, f, x, p);
  CHECK(g1 == g2);

  EvalWorkspace fresh;
  const Eigen::VectorXd g3 = g.gradient_x(fresh, f, x, p);
  CHECK(g1 == g3);
}

TEST_CASE("sealed graphs reject further construction") {
  ExprGraph g;
  g.variable(0);
  g.seal();
  CHECK_THROWS_AS(g.constant(1.0), Error);
}

TEST_CASE("mismatched input lengths are rejected") {
  ExprGraph g;
  NodeId f = g.add(g.variable(0), g.variable(1));
  g.seal();
  CHECK_THROWS_AS(g.evaluate(f, vec({1.0}), Eigen::VectorXd(0)),
                  DimensionMismatch);
}
