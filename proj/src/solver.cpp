#include "kktsens/solver.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

namespace kktsens {

namespace {

constexpr double kRegMax = 1e-2;
constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 25;
constexpr int kStallWindow = 40;
constexpr double kStallImprovement = 1e-3;

struct Residual {
  Eigen::VectorXd stat, primal, comp;  // comp holds x_i nu_i - mu
  double inf_norm(double mu_shift) const {
    double r = 0.0;
    if (stat.size()) r = std::max(r, stat.cwiseAbs().maxCoeff());
    if (primal.size()) r = std::max(r, primal.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < comp.size(); ++i) {
      r = std::max(r, std::abs(comp[i] + mu_shift));
    }
    return r;
  }
};

// Shared evaluation core for the solver loop and the public kkt_residual.
class Evaluator {
 public:
  Evaluator(const CanonicalForm& cf, const Eigen::VectorXd& p)
      : cf_(cf), p_(p) {
    if (p.size() != cf.num_parameters()) {
      throw DimensionMismatch("parameter vector has wrong length");
    }
  }

  // stat/primal at (x, lambda, nu); comp = x.nu - mu with mu = 0.
  Residual residual(const Eigen::VectorXd& x, const Eigen::VectorXd& lambda,
                    const Eigen::VectorXd& nu) {
    Residual r;
    const Eigen::VectorXd gx =
        cf_.graph().gradient_x(ws_, cf_.objective_root(), x, p_);
    const Eigen::MatrixXd A = cf_.graph().jacobian_x(
        ws_, std::span<const NodeId>(cf_.constraint_roots()), x, p_);
    r.stat = gx + A.transpose() * lambda - nu;
    r.primal.resize(cf_.num_constraints());
    for (int j = 0; j < cf_.num_constraints(); ++j) {
      r.primal[j] = cf_.graph().evaluate(ws_, cf_.constraint_roots()[j], x, p_);
    }
    const auto& bounded = cf_.bounded_indices();
    r.comp.resize(bounded.size());
    for (std::size_t k = 0; k < bounded.size(); ++k) {
      r.comp[k] = x[bounded[k]] * nu[bounded[k]];
    }
    return r;
  }

  Eigen::MatrixXd constraint_jacobian(const Eigen::VectorXd& x) {
    return cf_.graph().jacobian_x(
        ws_, std::span<const NodeId>(cf_.constraint_roots()), x, p_);
  }

  Eigen::MatrixXd lagrangian_hessian(const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& lambda) {
    return cf_.graph().hessian_xx_lagrangian(
        ws_, cf_.objective_root(), std::span<const NodeId>(cf_.constraint_roots()),
        x, lambda, p_);
  }

  double objective(const Eigen::VectorXd& x) {
    return cf_.user_objective(
        cf_.graph().evaluate(ws_, cf_.objective_root(), x, p_));
  }

  Eigen::VectorXd objective_gradient(const Eigen::VectorXd& x) {
    return cf_.graph().gradient_x(ws_, cf_.objective_root(), x, p_);
  }

 private:
  const CanonicalForm& cf_;
  Eigen::VectorXd p_;
  EvalWorkspace ws_;
};

double fraction_to_boundary(const Eigen::VectorXd& v, const Eigen::VectorXd& dv,
                            const std::vector<int>& slots, double tau) {
  double alpha = 1.0;
  for (int i : slots) {
    if (dv[i] < 0.0) alpha = std::min(alpha, -tau * v[i] / dv[i]);
  }
  return alpha;
}

// Feasibility restoration: Gauss-Newton on 0.5||c||^2, stepping in the row
// space of A so a rank-deficient Jacobian cannot poison the direction the way
// it poisons the full KKT step. Used when KKT iterations stop making
// progress, typically from starts where A is (near) singular. Returns whether
// any primal progress was made; on success the multipliers are re-estimated
// by least squares to undo any drift accumulated while stalled.
bool restore_feasibility(const CanonicalForm& cf, Evaluator& ev,
                         Eigen::VectorXd& x, Eigen::VectorXd& lambda,
                         const std::vector<int>& bounded, double tau) {
  const int m = cf.num_constraints();
  if (m == 0) return false;

  Eigen::VectorXd c;
  try {
    c = ev.residual(x, lambda, Eigen::VectorXd::Zero(x.size())).primal;
  } catch (const DomainError&) {
    return false;
  }
  double cn = c.cwiseAbs().maxCoeff();
  const double entry = cn;
  bool improved = false;

  for (int k = 0; k < 30 && cn > 0.5 * entry && cn > 1e-12; ++k) {
    const Eigen::MatrixXd A = ev.constraint_jacobian(x);
    Eigen::MatrixXd G = A * A.transpose();
    G.diagonal().array() += 1e-8;
    const Eigen::VectorXd w = G.ldlt().solve(c);
    Eigen::VectorXd dx = -A.transpose() * w;
    if (!dx.allFinite()) break;
    // Near-singular G can blow the step up; a unit cap keeps the iterate on
    // the local sheet of the constraint manifold (periodic constraints have
    // distant copies the backtracking norm test cannot tell apart).
    const double dn = dx.cwiseAbs().maxCoeff();
    if (dn > 1.0) dx *= 1.0 / dn;

    const double ap = fraction_to_boundary(x, dx, bounded, tau);
    bool stepped = false;
    double scale = 1.0;
    for (int bt = 0; bt <= kMaxBacktracks; ++bt, scale *= 0.5) {
      const Eigen::VectorXd xn = x + scale * ap * dx;
      Eigen::VectorXd cn_vec;
      try {
        cn_vec = ev.residual(xn, lambda, Eigen::VectorXd::Zero(x.size())).primal;
      } catch (const DomainError&) {
        continue;
      }
      const double cnn = cn_vec.cwiseAbs().maxCoeff();
      if (cnn < cn * (1.0 - kArmijo * scale)) {
        x = xn;
        c = cn_vec;
        cn = cnn;
        stepped = true;
        improved = true;
        break;
      }
    }
    if (!stepped) break;
  }

  if (improved) {
    const Eigen::MatrixXd A = ev.constraint_jacobian(x);
    const Eigen::VectorXd gx = ev.objective_gradient(x);
    Eigen::MatrixXd G = A * A.transpose();
    G.diagonal().array() += 1e-8;
    lambda = -G.ldlt().solve(A * gx);
  }
  return improved;
}

}  // namespace

double KktResidual::inf_norm() const {
  double r = 0.0;
  if (stationarity.size()) r = std::max(r, stationarity.cwiseAbs().maxCoeff());
  if (primal.size()) r = std::max(r, primal.cwiseAbs().maxCoeff());
  if (complementarity.size()) {
    r = std::max(r, complementarity.cwiseAbs().maxCoeff());
  }
  return r;
}

void KktResidual::worst(const char** block, int* index, double* value) const {
  *block = "stationarity";
  *index = 0;
  *value = 0.0;
  double best = -1.0;
  auto scan = [&](const Eigen::VectorXd& v, const char* name) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (std::abs(v[i]) > best) {
        best = std::abs(v[i]);
        *block = name;
        *index = static_cast<int>(i);
        *value = v[i];
      }
    }
  };
  scan(stationarity, "stationarity");
  scan(primal, "primal");
  scan(complementarity, "complementarity");
}

KktResidual kkt_residual(const CanonicalForm& cf, const PrimalDualPoint& pt) {
  if (pt.x.size() != cf.num_vars() || pt.lambda.size() != cf.num_constraints() ||
      pt.nu.size() != cf.num_vars()) {
    throw DimensionMismatch("point dimensions do not match the program");
  }
  Evaluator ev(cf, pt.p);
  Residual r = ev.residual(pt.x, pt.lambda, pt.nu);
  return KktResidual{std::move(r.stat), std::move(r.primal), std::move(r.comp)};
}

SolveResult solve(const CanonicalForm& cf, const Eigen::VectorXd& p,
                  const SolverConfig& config) {
  const int n = cf.num_vars();
  const int m = cf.num_constraints();
  const auto& bounded = cf.bounded_indices();
  const int nb = static_cast<int>(bounded.size());
  const int dim = n + m + nb;
  const double tau = config.fraction_to_boundary;
  const double mu_floor = std::min(1e-9, config.kkt_tolerance / 10.0);

  Evaluator ev(cf, p);

  // Start: bounded entries one unit inside (or farther for large shifts),
  // free entries at zero, lambda = 0, nu matching the initial barrier.
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  for (int i : bounded) x[i] = std::max(1.0, std::abs(cf.shift(i)));
  if (config.initial_point) {
    if (config.initial_point->size() != n) {
      throw DimensionMismatch("initial point has wrong length");
    }
    x = *config.initial_point;
    for (int i : bounded) x[i] = std::max(x[i], 1e-8);
  }
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd nu = Eigen::VectorXd::Zero(n);
  double mu = nb > 0 ? config.mu_init : 0.0;
  for (int i : bounded) nu[i] = mu / x[i];

  SolveResult out;
  if (nb > 0) out.mu_trace.push_back(mu);

  Residual res = ev.residual(x, lambda, nu);  // DomainError here propagates
  double best_true = std::numeric_limits<double>::infinity();
  double best_primal = std::numeric_limits<double>::infinity();
  int best_iter = 0;
  int weak_steps = 0;

  auto fail = [&](int iters) -> void {
    const double cviol = m > 0 ? res.primal.cwiseAbs().maxCoeff() : 0.0;
    if (cviol > 1e-6 && iters < config.max_iterations) throw Infeasible(cviol);
    throw MaxIterations(iters, res.inf_norm(0.0));
  };

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    const double true_norm = res.inf_norm(0.0);
    if (true_norm <= config.kkt_tolerance) {
      out.point = PrimalDualPoint{x, lambda, nu, p, ev.objective(x)};
      out.iterations = iter;
      out.kkt_residual = true_norm;
      return out;
    }

    // Progress watch over both the full residual and plain feasibility;
    // restoration phases advance the latter while the former may lag.
    const double primal_norm =
        m > 0 ? res.primal.cwiseAbs().maxCoeff() : 0.0;
    bool progressed = false;
    if (true_norm < best_true * (1.0 - kStallImprovement)) {
      best_true = true_norm;
      progressed = true;
    }
    if (primal_norm < best_primal * (1.0 - kStallImprovement)) {
      best_primal = primal_norm;
      progressed = true;
    }
    if (progressed) {
      best_iter = iter;
    } else if (iter - best_iter >= kStallWindow) {
      fail(iter);
    }

    // Barrier update once the perturbed system is solved well enough.
    if (nb > 0 && mu > mu_floor && res.inf_norm(-mu) <= mu) {
      mu = std::max(mu_floor, mu * config.mu_reduction);
      out.mu_trace.push_back(mu);
    }

    const Eigen::MatrixXd W = ev.lagrangian_hessian(x, lambda);
    const Eigen::MatrixXd A = ev.constraint_jacobian(x);

    Eigen::VectorXd rhs(dim);
    rhs.segment(0, n) = -res.stat;
    rhs.segment(n, m) = -res.primal;
    for (int k = 0; k < nb; ++k) rhs[n + m + k] = -(res.comp[k] - mu);

    const double mu_norm = res.inf_norm(-mu);

    bool accepted = false;
    double delta = config.newton_regularization;
    for (; delta <= kRegMax; delta *= 10.0) {
      Eigen::MatrixXd M = Eigen::MatrixXd::Zero(dim, dim);
      M.block(0, 0, n, n) = W;
      M.block(0, 0, n, n).diagonal().array() += delta;
      M.block(0, n, n, m) = A.transpose();
      M.block(n, 0, m, n) = A;
      M.block(n, n, m, m).diagonal().array() -= delta;
      for (int k = 0; k < nb; ++k) {
        const int i = bounded[k];
        M(i, n + m + k) = -1.0;
        M(n + m + k, i) = nu[i];
        M(n + m + k, n + m + k) = x[i];
      }

      const Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
      const Eigen::VectorXd step = lu.solve(rhs);
      if (!step.allFinite()) continue;

      const Eigen::VectorXd dx = step.segment(0, n);
      const Eigen::VectorXd dl = step.segment(n, m);
      Eigen::VectorXd dnu = Eigen::VectorXd::Zero(n);
      for (int k = 0; k < nb; ++k) dnu[bounded[k]] = step[n + m + k];

      const double ap = fraction_to_boundary(x, dx, bounded, tau);
      const double ad = fraction_to_boundary(nu, dnu, bounded, tau);

      double scale = 1.0;
      for (int bt = 0; bt <= kMaxBacktracks; ++bt, scale *= 0.5) {
        const Eigen::VectorXd xn = x + scale * ap * dx;
        const Eigen::VectorXd ln = lambda + scale * ad * dl;
        const Eigen::VectorXd nn = nu + scale * ad * dnu;
        Residual rn;
        try {
          rn = ev.residual(xn, ln, nn);
        } catch (const DomainError&) {
          continue;  // iterate left the domain; shorten the step
        }
        if (rn.inf_norm(-mu) < mu_norm * (1.0 - kArmijo * scale)) {
          x = xn;
          lambda = ln;
          nu = nn;
          res = std::move(rn);
          accepted = true;
          out.max_regularization = std::max(out.max_regularization, delta);
          break;
        }
      }
      if (accepted) break;
    }

    // A run of near-zero-progress steps means the Newton direction is
    // trapped (typically a singular constraint Jacobian); switch to primal
    // feasibility restoration before giving up.
    if (accepted) {
      weak_steps =
          res.inf_norm(-mu) > mu_norm * (1.0 - 10.0 * kArmijo) ? weak_steps + 1
                                                               : 0;
    }
    if (!accepted || weak_steps >= 2) {
      if (restore_feasibility(cf, ev, x, lambda, bounded, tau)) {
        weak_steps = 0;
        res = ev.residual(x, lambda, nu);
      } else if (!accepted) {
        fail(iter + 1);
      }
    }
  }

  const double final_norm = res.inf_norm(0.0);
  if (final_norm <= config.kkt_tolerance) {
    out.point = PrimalDualPoint{x, lambda, nu, p, ev.objective(x)};
    out.iterations = config.max_iterations;
    out.kkt_residual = final_norm;
    return out;
  }
  fail(config.max_iterations);
  return out;  // unreachable
}

RegularityReport check_regularity(const CanonicalForm& cf,
                                  const PrimalDualPoint& pt,
                                  double eps_degenerate) {
  RegularityReport rep;
  const auto& bounded = cf.bounded_indices();

  rep.strict_complementarity_margin = std::numeric_limits<double>::infinity();
  for (int i : bounded) {
    const double margin = std::max(pt.x[i], pt.nu[i]);
    rep.strict_complementarity_margin =
        std::min(rep.strict_complementarity_margin, margin);
    if (pt.x[i] < eps_degenerate && pt.nu[i] < eps_degenerate) {
      rep.near_degenerate.push_back(i);
    }
  }
  rep.scs_ok = rep.near_degenerate.empty();

  const int m = cf.num_constraints();
  if (m == 0) {
    rep.licq_sigma_min = std::numeric_limits<double>::infinity();
    rep.licq_ok = true;
    return rep;
  }
  // Columns of variables not pinned at their bound; active columns would be
  // covered by their own gradients e_i, so full-rank of the rest is the
  // binding condition.
  std::vector<int> inactive;
  for (int i = 0; i < cf.num_vars(); ++i) {
    if (!cf.is_bounded(i) || pt.x[i] >= eps_degenerate) inactive.push_back(i);
  }
  if (static_cast<int>(inactive.size()) < m) {
    rep.licq_sigma_min = 0.0;
    rep.licq_ok = false;
    return rep;
  }
  Evaluator ev(cf, pt.p);
  const Eigen::MatrixXd A = ev.constraint_jacobian(pt.x);
  Eigen::MatrixXd Ain(m, inactive.size());
  for (std::size_t c = 0; c < inactive.size(); ++c) Ain.col(c) = A.col(inactive[c]);
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(Ain);
  rep.licq_sigma_min = svd.singularValues().minCoeff();
  rep.licq_ok = rep.licq_sigma_min > 1e-8;
  return rep;
}

PrimalDualPoint adopt_external_point(const CanonicalForm& cf,
                                     const Eigen::VectorXd& user_x,
                                     const Eigen::VectorXd& lambda,
                                     const Eigen::VectorXd& user_nu,
                                     const Eigen::VectorXd& p,
                                     double tolerance) {
  const int n = cf.num_vars();
  const int m = cf.num_constraints();
  if (user_x.size() != cf.num_user_vars() ||
      user_nu.size() != cf.num_user_vars() || lambda.size() != m) {
    throw DimensionMismatch("external point has wrong dimensions");
  }

  PrimalDualPoint pt;
  pt.p = p;
  pt.x = Eigen::VectorXd::Zero(n);
  pt.nu = Eigen::VectorXd::Zero(n);
  pt.lambda = lambda;
  for (int i = 0; i < cf.num_user_vars(); ++i) {
    pt.x[i] = user_x[i] - cf.shift(i);
    if (cf.is_bounded(i)) {
      if (pt.x[i] < -tolerance) {
        throw NotStationary("bound", i, pt.x[i]);
      }
      if (user_nu[i] < -tolerance) {
        throw NotStationary("bound-multiplier", i, user_nu[i]);
      }
      pt.nu[i] = user_nu[i];
    } else if (std::abs(user_nu[i]) > tolerance) {
      throw NotStationary("free-multiplier", i, user_nu[i]);
    }
  }

  // Rows are affine in their slack with unit coefficient, so the residual at
  // s = 0 determines the slack exactly; its multiplier comes from the slack
  // stationarity row lambda_row - nu_s = 0.
  Evaluator ev(cf, p);
  EvalWorkspace ws;
  for (const auto& s : cf.slacks()) {
    const double rho =
        cf.graph().evaluate(ws, cf.constraint_roots()[s.constraint_row], pt.x, p);
    pt.x[s.canonical_index] = -rho;
    if (pt.x[s.canonical_index] < -tolerance) {
      throw NotStationary("bound", s.canonical_index, pt.x[s.canonical_index]);
    }
    pt.nu[s.canonical_index] = lambda[s.constraint_row];
  }

  const KktResidual res = kkt_residual(cf, pt);
  if (res.inf_norm() > tolerance) {
    const char* block;
    int index;
    double value;
    res.worst(&block, &index, &value);
    throw NotStationary(block, index, value);
  }
  pt.objective = ev.objective(pt.x);
  return pt;
}

}  // namespace kktsens
