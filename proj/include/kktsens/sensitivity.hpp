#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>

#include "kktsens/model.hpp"
#include "kktsens/solver.hpp"

namespace kktsens {

// Damping schedule for a numerically singular KKT matrix: the first attempt
// uses initial_delta (0 = undamped), failures then walk the fixed ladder
// 1e-10, 1e-9, ..., 1e-6 before giving up with SingularKkt.
struct RegularizationPolicy {
  double initial_delta = 0.0;
};

// The linearized KKT system at a solution: square matrix
//   M = [ W   A'  -I_B ]        N = [ d2L/dxdp ]
//       [ A   0    0   ]            [ dc/dp    ]
//       [ V_B 0   X_B  ]            [ 0        ]
// factored once (LU with partial pivoting, damped by delta*I if needed) and
// reused for every subsequent solve in either direction. Counters expose how
// often factorization and substitution actually ran.
class KktSystem {
 public:
  KktSystem(const CanonicalForm& cf, const PrimalDualPoint& pt,
            RegularizationPolicy policy = {});

  int n() const { return n_; }
  int m() const { return m_; }
  int nb() const { return nb_; }
  int dimension() const { return n_ + m_ + nb_; }

  const Eigen::MatrixXd& matrix() const { return M_; }              // undamped
  const Eigen::MatrixXd& parameter_jacobian() const { return N_; }
  double damping() const { return delta_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  Eigen::VectorXd solve_transpose(const Eigen::VectorXd& rhs) const;

  std::int64_t factorization_count() const { return factorizations_; }
  std::int64_t solve_count() const { return solves_; }

 private:
  int n_, m_, nb_;
  Eigen::MatrixXd M_, N_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  double delta_ = 0.0;
  std::int64_t factorizations_ = 0;
  mutable std::int64_t solves_ = 0;
};

KktSystem build_kkt(const CanonicalForm& cf, const PrimalDualPoint& pt,
                    RegularizationPolicy policy = {});

// Seed-in / tangent-out differentiation of the optimal solution with respect
// to the parameters, at a fixed solved point. Forward mode pushes a parameter
// direction through to variable/dual/objective tangents; reverse mode pulls a
// variable cotangent (or an objective seed; the two are mutually exclusive)
// back to parameter space. All solves share the constructor's factorization.
class SensitivitySession {
 public:
  SensitivitySession(const CanonicalForm& cf, PrimalDualPoint pt,
                     RegularizationPolicy policy = {});

  const KktSystem& kkt() const { return kkt_; }
  const PrimalDualPoint& point() const { return pt_; }
  double damping() const { return kkt_.damping(); }

  void set_forward_parameter(ParameterRef p, double value);
  void set_reverse_variable(VariableRef v, double weight);
  void set_reverse_objective(double weight);
  void empty_input_sensitivities();

  void forward_differentiate();
  void reverse_differentiate();

  double get_forward_variable(VariableRef v) const;
  double get_forward_dual(ConstraintRef c) const;
  double get_forward_objective() const;
  double get_reverse_parameter(ParameterRef p) const;

  // Raw solution tangent [x-dot; lambda-dot; nu-dot] from the last forward
  // pass; canonical coordinates.
  const Eigen::VectorXd& forward_tangent() const;

  // All forward sensitivities at once: column j is the solution tangent for
  // the unit direction in parameter j, computed by the identical code path as
  // forward_differentiate against the same factorization.
  Eigen::MatrixXd full_jacobian();

 private:
  void check_owner(const void* prog) const;
  Eigen::VectorXd solve_forward(const Eigen::VectorXd& vdot) const;

  const CanonicalForm& cf_;
  PrimalDualPoint pt_;
  KktSystem kkt_;
  Eigen::VectorXd obj_grad_x_, obj_grad_p_;  // canonical objective gradients

  Eigen::VectorXd vdot_;
  bool forward_seeded_ = false;
  Eigen::VectorXd vbar_;
  bool reverse_seeded_ = false;
  std::optional<double> objective_seed_;

  Eigen::VectorXd ydot_;
  double objective_dot_ = 0.0;
  bool forward_done_ = false;
  Eigen::VectorXd pbar_;
  bool reverse_done_ = false;
};

}  // namespace kktsens
