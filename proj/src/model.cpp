#include "plmpc/model.hpp"

#include "plmpc/qp.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace plmpc {

namespace {

void check_dim(const Vector & v, int expected, const char * what)
{
  if (v.size() != expected) {
    std::ostringstream os;
    os << what << " has dimension " << v.size() << ", expected " << expected;
    throw DimensionError(os.str());
  }
}

bool is_psd(const Matrix & M)
{
  if (M.rows() == 0) { return true; }
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) { return false; }
  Eigen::SelfAdjointEigenSolver<Matrix> es(M);
  return es.eigenvalues().minCoeff() >= -1e-10 * scale;
}

bool is_pd(const Matrix & M)
{
  if (M.rows() == 0) { return false; }
  Eigen::SelfAdjointEigenSolver<Matrix> es(M);
  return es.eigenvalues().minCoeff() > 1e-12;
}

bool polyhedron_nonempty(const Polyhedron & poly)
{
  if (poly.rows() == 0) { return true; }
  const int dim = poly.dim();
  Eigen::SparseMatrix<double> A = poly.G.sparseView();
  const Vector l = Vector::Constant(poly.rows(), -std::numeric_limits<double>::infinity());
  const auto sol = solve_lp(Vector::Zero(dim), A, l, poly.g);
  return sol.status == QpStatus::Solved;
}

}  // namespace

CycleTime intracycle(Tick t, int period)
{
  if (period < 1) { throw std::invalid_argument("period must be positive"); }
  if (t < 0) { throw std::invalid_argument("tick must be nonnegative"); }
  return {t / period, static_cast<int>(t % period)};
}

Dynamics::Dynamics(LinearDynamics lin, int state_dim, int input_dim, std::string builtin)
    : period_(static_cast<int>(lin.models.size())), n_(state_dim), d_(input_dim), builtin_(std::move(builtin))
{
  for (const auto & m : lin.models) {
    if (m.A.rows() != n_ || m.A.cols() != n_ || m.B.rows() != n_ || m.B.cols() != d_ || m.c.size() != n_) {
      throw DimensionError("affine model dimensions do not match (n, d)");
    }
  }
  impl_ = std::move(lin);
}

Dynamics::Dynamics(NonlinearDynamics nl, int period, int state_dim, int input_dim, std::string builtin)
    : period_(period), n_(state_dim), d_(input_dim), builtin_(std::move(builtin))
{
  if (!nl.map) { throw std::invalid_argument("nonlinear dynamics without a map"); }
  impl_ = std::move(nl);
}

Polyhedron Polyhedron::box(const Vector & lower, const Vector & upper)
{
  const auto dim = lower.size();
  std::vector<std::pair<Eigen::RowVectorXd, double>> rows;
  for (Eigen::Index i = 0; i < dim; ++i) {
    if (std::isfinite(upper(i))) {
      Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(dim);
      r(i) = 1.0;
      rows.emplace_back(r, upper(i));
    }
    if (std::isfinite(lower(i))) {
      Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(dim);
      r(i) = -1.0;
      rows.emplace_back(r, -lower(i));
    }
  }
  Polyhedron p{Matrix(rows.size(), dim), Vector(rows.size())};
  for (std::size_t k = 0; k < rows.size(); ++k) {
    p.G.row(k) = rows[k].first;
    p.g(k)     = rows[k].second;
  }
  return p;
}

bool Polyhedron::operator==(const Polyhedron & o) const
{
  return G.rows() == o.G.rows() && G.cols() == o.G.cols() && G == o.G && g == o.g;
}

QuadraticCost QuadraticCost::tracking(Matrix Q, Matrix R, Vector x_ref)
{
  const auto n = Q.rows();
  const auto d = R.rows();
  return {std::move(Q), std::move(R), std::move(x_ref), Vector::Zero(n), Vector::Zero(d)};
}

double QuadraticCost::operator()(const Vector & x, const Vector & u) const
{
  const Vector e = x - x_ref;
  return e.dot(Q * e) + u.dot(R * u) + q_lin.dot(x) + r_lin.dot(u);
}

bool QuadraticCost::operator==(const QuadraticCost & o) const
{
  return Q == o.Q && R == o.R && x_ref == o.x_ref && q_lin == o.q_lin && r_lin == o.r_lin;
}

bool StageCostSchedule::input_dependent() const
{
  for (const auto & h : terms) {
    if (!h.R.isZero(0.0) || !h.r_lin.isZero(0.0)) { return true; }
  }
  return false;
}

bool StageCostSchedule::strictly_convex() const
{
  if (terms.empty()) { return false; }
  for (const auto & h : terms) {
    if (!is_pd(h.R) || h.Q.isZero(0.0)) { return false; }
  }
  return true;
}

void ProblemSpec::validate() const
{
  auto fail = [](const std::string & msg) { throw ValidationError(msg); };

  if (period < 1) { fail("period P must be positive"); }
  if (horizon < 1) { fail("horizon N must be positive"); }
  if (horizon >= period) { fail("horizon must satisfy N < P"); }
  if (state_dim < 1 || input_dim < 1) { fail("state and input dimensions must be positive"); }
  if (dynamics.period() != period) { fail("dynamics schedule must have exactly P entries"); }
  if (dynamics.state_dim() != state_dim || dynamics.input_dim() != input_dim) {
    fail("dynamics dimensions do not match (n, d)");
  }
  if (static_cast<int>(constraints.state.size()) != period || static_cast<int>(constraints.input.size()) != period) {
    fail("constraint schedule must have exactly P entries");
  }
  if (static_cast<int>(cost.terms.size()) != period) { fail("cost schedule must have exactly P entries"); }

  for (int tau = 0; tau < period; ++tau) {
    const auto & xs = constraints.state[tau];
    const auto & us = constraints.input[tau];
    if (xs.dim() != state_dim || xs.g.size() != xs.rows()) {
      fail("state polyhedron at tau " + std::to_string(tau) + " has wrong dimension");
    }
    if (us.dim() != input_dim || us.g.size() != us.rows()) {
      fail("input polyhedron at tau " + std::to_string(tau) + " has wrong dimension");
    }
    if (!polyhedron_nonempty(xs)) { fail("state polyhedron at tau " + std::to_string(tau) + " is empty"); }
    if (!polyhedron_nonempty(us)) { fail("input polyhedron at tau " + std::to_string(tau) + " is empty"); }

    const auto & h = cost.terms[tau];
    if (h.Q.rows() != state_dim || h.Q.cols() != state_dim || h.R.rows() != input_dim || h.R.cols() != input_dim
        || h.x_ref.size() != state_dim || h.q_lin.size() != state_dim || h.r_lin.size() != input_dim)
    {
      fail("stage cost at tau " + std::to_string(tau) + " has wrong dimension");
    }
    if (!is_psd(h.Q)) { fail("stage cost Q at tau " + std::to_string(tau) + " is not positive semidefinite"); }
    if (!is_psd(h.R)) { fail("stage cost R at tau " + std::to_string(tau) + " is not positive semidefinite"); }
  }

  if (!dynamics.is_linear() && cost.input_dependent()) {
    fail("nonlinear dynamics require an input-independent stage cost (R = 0)");
  }
}

Vector eval_dynamics(const Dynamics & dyn, Tick t, const Vector & x, const Vector & u)
{
  check_dim(x, dyn.state_dim(), "state");
  check_dim(u, dyn.input_dim(), "input");
  const int tau = intracycle(t, dyn.period()).tau;
  if (dyn.is_linear()) { return dyn.linear().models[tau].apply(x, u); }
  Vector next = dyn.nonlinear().map(tau, x, u);
  check_dim(next, dyn.state_dim(), "successor state");
  return next;
}

double eval_stage_cost(const StageCostSchedule & cost, Tick t, const Vector & x, const Vector & u)
{
  const int period = static_cast<int>(cost.terms.size());
  const auto & h   = cost.terms[intracycle(t, period).tau];
  check_dim(x, static_cast<int>(h.Q.rows()), "state");
  check_dim(u, static_cast<int>(h.R.rows()), "input");
  return h(x, u);
}

ConstraintReport check_constraints(const ConstraintSchedule & cs, Tick t, const Vector & x, const Vector & u, double tol)
{
  const int tau = intracycle(t, static_cast<int>(cs.state.size())).tau;
  const auto & xs = cs.state[tau];
  const auto & us = cs.input[tau];

  ConstraintReport rep;
  rep.state_margin = xs.rows() > 0 ? Vector(xs.G * x - xs.g) : Vector(0);
  rep.input_margin = us.rows() > 0 ? Vector(us.G * u - us.g) : Vector(0);
  double worst = 0.0;
  if (rep.state_margin.size() > 0) { worst = std::max(worst, rep.state_margin.maxCoeff()); }
  if (rep.input_margin.size() > 0) { worst = std::max(worst, rep.input_margin.maxCoeff()); }
  rep.max_violation = worst;
  rep.feasible      = worst <= tol;
  return rep;
}

AffineModel linearize_dynamics(const Dynamics & dyn, Tick t, const Vector & xbar, const Vector & ubar)
{
  check_dim(xbar, dyn.state_dim(), "state");
  check_dim(ubar, dyn.input_dim(), "input");
  const int tau = intracycle(t, dyn.period()).tau;
  if (dyn.is_linear()) { return dyn.linear().models[tau]; }

  const auto & nl = dyn.nonlinear();
  const Vector f0 = nl.map(tau, xbar, ubar);
  Matrix A, B;
  if (nl.jacobian) {
    std::tie(A, B) = nl.jacobian(tau, xbar, ubar);
  } else {
    const int n = dyn.state_dim(), d = dyn.input_dim();
    A.resize(n, n);
    B.resize(n, d);
    auto step = [](double v) { return 1e-6 * std::max(1.0, std::abs(v)); };
    for (int i = 0; i < n; ++i) {
      Vector xp = xbar, xm = xbar;
      const double h = step(xbar(i));
      xp(i) += h;
      xm(i) -= h;
      A.col(i) = (nl.map(tau, xp, ubar) - nl.map(tau, xm, ubar)) / (2 * h);
    }
    for (int j = 0; j < d; ++j) {
      Vector up = ubar, um = ubar;
      const double h = step(ubar(j));
      up(j) += h;
      um(j) -= h;
      B.col(j) = (nl.map(tau, xbar, up) - nl.map(tau, xbar, um)) / (2 * h);
    }
  }
  if (!A.allFinite() || !B.allFinite()) { throw std::domain_error("non-finite Jacobian entries"); }
  return {A, B, f0 - A * xbar - B * ubar};
}

}  // namespace plmpc
