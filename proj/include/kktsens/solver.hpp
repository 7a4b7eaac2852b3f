#pragma once

#include <optional>
#include <vector>

#include "kktsens/model.hpp"

namespace kktsens {

struct SolverConfig {
  double kkt_tolerance = 1e-8;
  int max_iterations = 200;
  double mu_init = 0.1;
  double mu_reduction = 0.2;
  double fraction_to_boundary = 0.995;
  // Baseline diagonal damping of the Newton system (primal and dual blocks).
  // Escalated x10 per rejected attempt up to 1e-2, reset after each accepted
  // step.
  double newton_regularization = 1e-8;
  // Optional canonical-coordinate start. Bounded entries are projected to be
  // at least 1e-8 inside the cone; multipliers are still initialized by the
  // standard rule.
  std::optional<Eigen::VectorXd> initial_point;
};

// Canonical-space primal-dual iterate. nu has one entry per canonical
// variable; entries of free variables are identically zero.
struct PrimalDualPoint {
  Eigen::VectorXd x;       // canonical primal, length n
  Eigen::VectorXd lambda;  // constraint multipliers, length m
  Eigen::VectorXd nu;      // bound multipliers, length n (0 on free slots)
  Eigen::VectorXd p;       // parameter values the point was computed at
  double objective = 0.0;  // user-sense objective value
};

struct KktResidual {
  Eigen::VectorXd stationarity;      // n: grad f + A' lambda - nu
  Eigen::VectorXd primal;            // m: c(x, p)
  Eigen::VectorXd complementarity;   // nb: x_i nu_i over bounded slots
  double inf_norm() const;
  // Largest-magnitude entry: block name, index within block, value.
  void worst(const char** block, int* index, double* value) const;
};

struct SolveResult {
  PrimalDualPoint point;
  int iterations = 0;
  double kkt_residual = 0.0;
  std::vector<double> mu_trace;      // accepted barrier values, decreasing
  double max_regularization = 0.0;   // largest damping an accepted step used
};

struct RegularityReport {
  // min over bounded slots of max(x_i, nu_i); +inf when nothing is bounded
  double strict_complementarity_margin = 0.0;
  bool scs_ok = false;
  // bounded slots where x_i and nu_i are both below the threshold
  std::vector<int> near_degenerate;
  // smallest singular value of the constraint Jacobian restricted to
  // inactive columns; +inf when m == 0
  double licq_sigma_min = 0.0;
  bool licq_ok = false;
};

// Log-barrier primal-dual Newton solve of the canonical program at parameter
// values p. Throws MaxIterations / Infeasible / DomainError on failure.
SolveResult solve(const CanonicalForm& cf, const Eigen::VectorXd& p,
                  const SolverConfig& config = {});

// True KKT residual (mu = 0) at an arbitrary point.
KktResidual kkt_residual(const CanonicalForm& cf, const PrimalDualPoint& pt);

// Diagnoses strict complementarity and a LICQ proxy at a solution. The
// default threshold sits above sqrt of the barrier floor so solutions the
// solver drove into a degenerate corner are still flagged.
RegularityReport check_regularity(const CanonicalForm& cf,
                                  const PrimalDualPoint& pt,
                                  double eps_degenerate = 1e-4);

// Accepts an externally computed optimum given in user coordinates: primal
// values for the user variables, multipliers for all canonical rows (user
// constraints first, then upper-bound rows), and bound multipliers for the
// user variables. Slack primal values and slack multipliers are reconstructed
// exactly from the row equations. Throws NotStationary when the KKT residual
// exceeds the tolerance.
PrimalDualPoint adopt_external_point(const CanonicalForm& cf,
                                     const Eigen::VectorXd& user_x,
                                     const Eigen::VectorXd& lambda,
                                     const Eigen::VectorXd& user_nu,
                                     const Eigen::VectorXd& p,
                                     double tolerance = 1e-6);

}  // namespace kktsens
