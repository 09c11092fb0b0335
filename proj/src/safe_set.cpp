#include "plmpc/safe_set.hpp"

#include "csv_util.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

namespace plmpc {

TrajectoryStore::TrajectoryStore(int period, Vector x0) : period_(period)
{
  if (period < 1) { throw std::invalid_argument("period must be positive"); }
  states_.push_back(std::move(x0));
  prefix_.push_back(0.0);
}

void TrajectoryStore::record_step(Tick t, const Vector & u, const Vector & x_next, double h, const Dynamics * dyn)
{
  if (t != current_time()) {
    throw std::invalid_argument("record_step: t must equal the current store time");
  }
  if (x_next.size() != states_.back().size()) { throw DimensionError("record_step: state dimension mismatch"); }
  if (!inputs_.empty() && u.size() != inputs_.front().size()) { throw DimensionError("record_step: input dimension mismatch"); }
  if (dyn != nullptr) {
    const Vector expect = eval_dynamics(*dyn, t, states_.back(), u);
    const double err    = (expect - x_next).cwiseAbs().maxCoeff();
    if (!(err <= 1e-9)) {
      std::ostringstream os;
      os << "record_step: x_" << t + 1 << " deviates from f_" << t << "(x, u) by " << err;
      throw std::logic_error(os.str());
    }
  }
  inputs_.push_back(u);
  states_.push_back(x_next);
  prefix_.push_back(prefix_.back() + h);
}

double TrajectoryStore::return_cost(Tick t, Tick i) const
{
  if (i < 0 || i > t || t > current_time()) {
    std::ostringstream os;
    os << "return_cost: need 0 <= i <= t <= " << current_time() << ", got i=" << i << " t=" << t;
    throw std::out_of_range(os.str());
  }
  return cost_prefix(t) - cost_prefix(i);
}

void TrajectoryStore::write_csv(std::ostream & os) const
{
  const auto n = states_.front().size();
  const auto d = inputs_.empty() ? 0 : inputs_.front().size();
  os << "t,tau,cycle";
  for (Eigen::Index i = 0; i < n; ++i) { os << ",x" << i; }
  for (Eigen::Index j = 0; j < d; ++j) { os << ",u" << j; }
  os << ",h,C\n";
  for (std::size_t t = 0; t < states_.size(); ++t) {
    const auto ct = intracycle(static_cast<Tick>(t), period_);
    os << t << ',' << ct.tau << ',' << ct.cycle;
    for (Eigen::Index i = 0; i < n; ++i) { os << ',' << csv::num(states_[t](i)); }
    const bool has_input = t < inputs_.size();
    for (Eigen::Index j = 0; j < d; ++j) { os << ',' << (has_input ? csv::num(inputs_[t](j)) : std::string{}); }
    os << ',' << (has_input ? csv::num(stage_cost(static_cast<Tick>(t))) : std::string{});
    os << ',' << csv::num(prefix_[t]) << '\n';
  }
}

TerminalData terminal_data(const TrajectoryStore & store, Tick t, Tick k, int max_cycles_retained)
{
  const int P = store.period();
  if (t < 0 || t > store.current_time()) { throw std::out_of_range("terminal_data: t is not recorded"); }
  if (k - P > store.current_time()) { throw std::out_of_range("terminal_data: slot too far ahead of recorded data"); }

  TerminalData td;
  td.slot = k;
  for (Tick j = 1; k - j * P >= 0; ++j) {
    if (max_cycles_retained > 0 && j > max_cycles_retained) { break; }
    td.indices.push_back(k - j * P);
  }
  if (td.indices.empty()) {
    std::ostringstream os;
    os << "sampled safe set for slot " << k << " is empty (need k - P >= 0)";
    throw EmptySafeSetError(os.str());
  }
  const auto M = static_cast<Eigen::Index>(td.indices.size());
  const auto n = store.state(0).size();
  td.vertices.resize(n, M);
  td.costs.resize(M);
  for (Eigen::Index j = 0; j < M; ++j) {
    const Tick i = td.indices[j];
    td.vertices.col(j) = store.state(i);
    // A vertex recorded after t has no return cost to x_t; this only happens
    // when the slot wraps past the present (N ≥ P), which validation forbids.
    td.costs(j) = store.return_cost(t, i);
  }
  return td;
}

QValue hull_distance(const Matrix & D, const Vector & x, const QpSettings & settings)
{
  const auto M = D.cols();
  QpProblem p;
  const Matrix H = 2.0 * D.transpose() * D;
  p.H            = H.sparseView();
  p.q            = -2.0 * D.transpose() * x;
  p.constant     = x.squaredNorm();
  Matrix A       = Matrix::Zero(1 + M, M);
  A.row(0).setOnes();
  A.bottomRows(M).setIdentity();
  p.A = A.sparseView();
  p.l = Vector::Zero(1 + M);
  p.u = Vector::Constant(1 + M, std::numeric_limits<double>::infinity());
  p.l(0) = p.u(0) = 1.0;
  const auto sol = solve_qp(p, settings);
  return {std::max(sol.objective, 0.0), sol.z};
}

QValue q_function(const TerminalData & td, const Vector & x, const QpSettings & settings)
{
  const auto n = td.vertices.rows();
  const auto M = td.vertices.cols();
  if (M == 0) { throw EmptySafeSetError("q_function: empty safe set"); }
  if (x.size() != n) { throw DimensionError("q_function: query dimension mismatch"); }

  Matrix A = Matrix::Zero(n + 1 + M, M);
  A.topRows(n) = td.vertices;
  A.row(n).setOnes();
  A.bottomRows(M).setIdentity();
  Vector l(n + 1 + M), u(n + 1 + M);
  l.head(n)  = x;
  u.head(n)  = x;
  l(n)       = 1.0;
  u(n)       = 1.0;
  l.tail(M).setZero();
  u.tail(M).setConstant(std::numeric_limits<double>::infinity());

  const auto sol = solve_lp(td.costs, A.sparseView(), l, u, settings);
  if (sol.status != QpStatus::Solved) {
    const auto dist = hull_distance(td.vertices, x, settings);
    std::ostringstream os;
    os << "q_function: query lies outside the convex safe set of slot " << td.slot << " (distance "
       << std::sqrt(dist.value) << ", solver status " << to_string(sol.status) << ")";
    throw OutsideSafeSetError(os.str(), std::sqrt(dist.value));
  }
  return {sol.objective, sol.z};
}

}  // namespace plmpc
