#include "kktsens/sensitivity.hpp"

#include <cmath>
#include <limits>

namespace kktsens {

namespace {

// Relative pivot test on the LU factors: treats the factorization as failed
// when the smallest |U_ii| is within a small multiple of machine epsilon of
// the largest, i.e. the matrix is singular to working precision.
bool pivots_ok(const Eigen::PartialPivLU<Eigen::MatrixXd>& lu, int dim,
               double* smallest) {
  const Eigen::VectorXd d = lu.matrixLU().diagonal().cwiseAbs();
  const double max_piv = d.maxCoeff();
  const double min_piv = d.minCoeff();
  *smallest = min_piv;
  if (!(max_piv > 0.0) || !std::isfinite(max_piv)) return false;
  const double eps = std::numeric_limits<double>::epsilon();
  return min_piv > 4.0 * dim * eps * max_piv;
}

}  // namespace

KktSystem::KktSystem(const CanonicalForm& cf, const PrimalDualPoint& pt,
                     RegularizationPolicy policy)
    : n_(cf.num_vars()),
      m_(cf.num_constraints()),
      nb_(cf.num_bounded()) {
  if (pt.x.size() != n_ || pt.lambda.size() != m_ || pt.nu.size() != n_ ||
      pt.p.size() != cf.num_parameters()) {
    throw DimensionMismatch("point does not match the canonical program");
  }
  const int np = cf.num_parameters();
  const int dim = dimension();
  const ExprGraph& g = cf.graph();
  EvalWorkspace ws;
  std::span<const NodeId> rows(cf.constraint_roots());

  const Eigen::MatrixXd W =
      g.hessian_xx_lagrangian(ws, cf.objective_root(), rows, pt.x, pt.lambda, pt.p);
  const Eigen::MatrixXd A = g.jacobian_x(ws, rows, pt.x, pt.p);
  const Eigen::MatrixXd Hxp =
      g.hessian_xp_lagrangian(ws, cf.objective_root(), rows, pt.x, pt.lambda, pt.p);
  const Eigen::MatrixXd Jp = g.jacobian_p(ws, rows, pt.x, pt.p);

  M_ = Eigen::MatrixXd::Zero(dim, dim);
  M_.topLeftCorner(n_, n_) = W;
  if (m_ > 0) {
    M_.block(0, n_, n_, m_) = A.transpose();
    M_.block(n_, 0, m_, n_) = A;
  }
  const std::vector<int>& bounded = cf.bounded_indices();
  for (int k = 0; k < nb_; ++k) {
    const int i = bounded[k];
    M_(i, n_ + m_ + k) = -1.0;
    M_(n_ + m_ + k, i) = pt.nu[i];
    M_(n_ + m_ + k, n_ + m_ + k) = pt.x[i];
  }

  N_ = Eigen::MatrixXd::Zero(dim, np);
  if (np > 0) {
    N_.topRows(n_) = Hxp;
    if (m_ > 0) N_.middleRows(n_, m_) = Jp;
  }

  // Factor once, escalating the diagonal damping until the pivots clear the
  // singularity threshold.
  double smallest_seen = std::numeric_limits<double>::infinity();
  auto attempt = [&](double delta) {
    Eigen::MatrixXd Md = M_;
    if (delta > 0.0) Md.diagonal().array() += delta;
    if (!Md.allFinite()) return false;
    lu_.compute(Md);
    ++factorizations_;
    double smallest = 0.0;
    const bool ok = pivots_ok(lu_, dim, &smallest);
    if (smallest < smallest_seen) smallest_seen = smallest;
    if (ok) delta_ = delta;
    return ok;
  };

  if (attempt(policy.initial_delta)) return;
  for (double delta = 1e-10; delta <= 1.0001e-6; delta *= 10.0) {
    if (delta <= policy.initial_delta) continue;
    if (attempt(delta)) return;
  }
  throw SingularKkt(smallest_seen, check_regularity(cf, pt).near_degenerate);
}

Eigen::VectorXd KktSystem::solve(const Eigen::VectorXd& rhs) const {
  if (rhs.size() != dimension()) {
    throw DimensionMismatch("right-hand side does not match the KKT dimension");
  }
  ++solves_;
  return lu_.solve(rhs);
}

Eigen::VectorXd KktSystem::solve_transpose(const Eigen::VectorXd& rhs) const {
  if (rhs.size() != dimension()) {
    throw DimensionMismatch("right-hand side does not match the KKT dimension");
  }
  ++solves_;
  return lu_.transpose().solve(rhs);
}

KktSystem build_kkt(const CanonicalForm& cf, const PrimalDualPoint& pt,
                    RegularizationPolicy policy) {
  return KktSystem(cf, pt, policy);
}

SensitivitySession::SensitivitySession(const CanonicalForm& cf,
                                       PrimalDualPoint pt,
                                       RegularizationPolicy policy)
    : cf_(cf), pt_(std::move(pt)), kkt_(cf, pt_, policy) {
  EvalWorkspace ws;
  obj_grad_x_ = cf_.graph().gradient_x(ws, cf_.objective_root(), pt_.x, pt_.p);
  obj_grad_p_ = cf_.graph().gradient_p(ws, cf_.objective_root(), pt_.x, pt_.p);
  vdot_ = Eigen::VectorXd::Zero(cf_.num_parameters());
  vbar_ = Eigen::VectorXd::Zero(cf_.num_user_vars());
}

void SensitivitySession::check_owner(const void* prog) const {
  if (prog != cf_.source()) {
    throw StaleHandle("handle does not belong to this session's program");
  }
}

void SensitivitySession::set_forward_parameter(ParameterRef p, double value) {
  check_owner(p.prog);
  if (p.index < 0 || p.index >= cf_.num_parameters()) {
    throw DimensionMismatch("parameter index out of range");
  }
  vdot_[p.index] = value;
  forward_seeded_ = true;
  forward_done_ = false;
}

void SensitivitySession::set_reverse_variable(VariableRef v, double weight) {
  check_owner(v.prog);
  if (v.index < 0 || v.index >= cf_.num_user_vars()) {
    throw DimensionMismatch("variable index out of range");
  }
  if (objective_seed_ && *objective_seed_ != 0.0 && weight != 0.0) {
    throw ConflictingSeeds(
        "variable seed set while an objective seed is active");
  }
  vbar_[v.index] = weight;
  reverse_seeded_ = true;
  reverse_done_ = false;
}

void SensitivitySession::set_reverse_objective(double weight) {
  if (weight != 0.0 && vbar_.cwiseAbs().maxCoeff() != 0.0) {
    throw ConflictingSeeds(
        "objective seed set while variable seeds are active");
  }
  objective_seed_ = weight;
  reverse_done_ = false;
}

void SensitivitySession::empty_input_sensitivities() {
  vdot_.setZero();
  vbar_.setZero();
  objective_seed_.reset();
  forward_seeded_ = false;
  reverse_seeded_ = false;
  forward_done_ = false;
  reverse_done_ = false;
}

Eigen::VectorXd SensitivitySession::solve_forward(
    const Eigen::VectorXd& vdot) const {
  return kkt_.solve(-(kkt_.parameter_jacobian() * vdot));
}

void SensitivitySession::forward_differentiate() {
  if (!forward_seeded_) throw NoSeed();
  ydot_ = solve_forward(vdot_);
  const Eigen::VectorXd xdot = ydot_.head(cf_.num_vars());
  objective_dot_ =
      cf_.objective_sign() * (obj_grad_x_.dot(xdot) + obj_grad_p_.dot(vdot_));
  forward_done_ = true;
}

void SensitivitySession::reverse_differentiate() {
  const int n = cf_.num_vars();
  const int dim = kkt_.dimension();
  Eigen::VectorXd seed = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd direct = Eigen::VectorXd::Zero(cf_.num_parameters());
  if (objective_seed_ && *objective_seed_ != 0.0) {
    seed.head(n) = cf_.objective_sign() * *objective_seed_ * obj_grad_x_;
    direct = cf_.objective_sign() * *objective_seed_ * obj_grad_p_;
  } else if (reverse_seeded_ || objective_seed_) {
    seed.head(cf_.num_user_vars()) = vbar_;
  } else {
    throw NoSeed();
  }
  const Eigen::VectorXd ybar = kkt_.solve_transpose(seed);
  pbar_ = -(kkt_.parameter_jacobian().transpose() * ybar) + direct;
  reverse_done_ = true;
}

double SensitivitySession::get_forward_variable(VariableRef v) const {
  check_owner(v.prog);
  if (!forward_done_) throw QueryBeforeDifferentiate();
  if (v.index < 0 || v.index >= cf_.num_user_vars()) {
    throw DimensionMismatch("variable index out of range");
  }
  // Lower-bound translation is an additive constant, so canonical and user
  // tangents coincide.
  return ydot_[cf_.canonical_of_user(v.index)];
}

double SensitivitySession::get_forward_dual(ConstraintRef c) const {
  check_owner(c.prog);
  if (!forward_done_) throw QueryBeforeDifferentiate();
  if (c.index < 0 || c.index >= cf_.num_user_constraints()) {
    throw DimensionMismatch("constraint index out of range");
  }
  return ydot_[cf_.num_vars() + c.index];
}

double SensitivitySession::get_forward_objective() const {
  if (!forward_done_) throw QueryBeforeDifferentiate();
  return objective_dot_;
}

double SensitivitySession::get_reverse_parameter(ParameterRef p) const {
  check_owner(p.prog);
  if (!reverse_done_) throw QueryBeforeDifferentiate();
  if (p.index < 0 || p.index >= cf_.num_parameters()) {
    throw DimensionMismatch("parameter index out of range");
  }
  return pbar_[p.index];
}

const Eigen::VectorXd& SensitivitySession::forward_tangent() const {
  if (!forward_done_) throw QueryBeforeDifferentiate();
  return ydot_;
}

Eigen::MatrixXd SensitivitySession::full_jacobian() {
  const int np = cf_.num_parameters();
  Eigen::MatrixXd J(kkt_.dimension(), np);
  Eigen::VectorXd unit = Eigen::VectorXd::Zero(np);
  for (int j = 0; j < np; ++j) {
    unit[j] = 1.0;
    J.col(j) = solve_forward(unit);
    unit[j] = 0.0;
  }
  return J;
}

}  // namespace kktsens
