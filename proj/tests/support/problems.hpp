#pragma once

// The three worked problems used across the test suites, built through the
// operator API.

#include "kktsens/model.hpp"

namespace testsup {

struct Dispatch {
  kktsens::ParametricProgram prog;
  kktsens::VariableRef g1, g2, phi;
  kktsens::ParameterRef d;
  kktsens::ConstraintRef balance;
};

// min 20 g1 + 30 g2 + 0.2 g1^2 + 0.1 g2^2 + 1000 phi
// s.t. g1 + g2 + phi == d, 0 <= g1 <= 150, 0 <= g2 <= 80, phi >= 0
inline void build_dispatch(Dispatch& out, double demand = 100.0) {
  using namespace kktsens;
  out.g1 = out.prog.add_variable("g1", 0.0, 150.0);
  out.g2 = out.prog.add_variable("g2", 0.0, 80.0);
  out.phi = out.prog.add_variable("phi", 0.0);
  out.d = out.prog.add_parameter("d", demand);
  Expr g1 = out.g1, g2 = out.g2, phi = out.phi;
  out.balance = out.prog.add_constraint(g1 + g2 + phi, Relation::Eq, Expr(out.d));
  out.prog.set_objective(Sense::Minimize,
                         20.0 * g1 + 30.0 * g2 + 0.2 * pow(g1, 2.0) +
                             0.1 * pow(g2, 2.0) + 1000.0 * phi);
}

struct TwoLinkArm {
  kktsens::ParametricProgram prog;
  kktsens::VariableRef t1, t2;
  kktsens::ParameterRef xt, yt;
};

// min t1^2 + t2^2  s.t. unit-link forward kinematics reach (xt, yt); angles free
inline void build_two_link_arm(TwoLinkArm& out, double xt = 1.0, double yt = 1.0) {
  using namespace kktsens;
  out.t1 = out.prog.add_variable("t1");
  out.t2 = out.prog.add_variable("t2");
  out.xt = out.prog.add_parameter("xt", xt);
  out.yt = out.prog.add_parameter("yt", yt);
  Expr t1 = out.t1, t2 = out.t2;
  out.prog.add_constraint(cos(t1) + cos(t1 + t2), Relation::Eq, Expr(out.xt));
  out.prog.add_constraint(sin(t1) + sin(t1 + t2), Relation::Eq, Expr(out.yt));
  out.prog.set_objective(Sense::Minimize, pow(t1, 2.0) + pow(t2, 2.0));
}

struct Portfolio {
  kktsens::ParametricProgram prog;
  kktsens::VariableRef x1, x2, x3;
  kktsens::ParameterRef sigma_max;
};

// max mu' x  s.t. sum x = 1, x' Sigma x <= sigma_max^2, x >= 0
inline void build_portfolio(Portfolio& out, double sigma_max = 0.04) {
  using namespace kktsens;
  out.x1 = out.prog.add_variable("x1", 0.0);
  out.x2 = out.prog.add_variable("x2", 0.0);
  out.x3 = out.prog.add_variable("x3", 0.0);
  out.sigma_max = out.prog.add_parameter("sigma_max", sigma_max);
  Expr x1 = out.x1, x2 = out.x2, x3 = out.x3, s = Expr(out.sigma_max);
  out.prog.add_constraint(x1 + x2 + x3, Relation::Eq,
                          Expr(&out.prog.graph(), out.prog.graph().constant(1.0)));
  Expr variance = 0.002 * pow(x1, 2.0) + 0.003 * pow(x2, 2.0) +
                  0.0025 * pow(x3, 2.0) + 0.001 * x1 * x2 + 0.002 * x1 * x3 +
                  0.0004 * x2 * x3;
  out.prog.add_constraint(variance, Relation::Le, s * s);
  out.prog.set_objective(Sense::Maximize, 0.05 * x1 + 0.08 * x2 + 0.12 * x3);
}

}  // namespace testsup
