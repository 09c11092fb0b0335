#include "plmpc/simulation.hpp"

#include "csv_util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

namespace plmpc {

namespace {

using Triplet = Eigen::Triplet<double>;
constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const Vector & v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

void add_block(std::vector<Triplet> & trip, Eigen::Index r0, Eigen::Index c0, const Matrix & B, double scale = 1.0)
{
  for (Eigen::Index c = 0; c < B.cols(); ++c) {
    for (Eigen::Index r = 0; r < B.rows(); ++r) {
      if (B(r, c) != 0.0) { trip.emplace_back(r0 + r, c0 + c, scale * B(r, c)); }
    }
  }
}

/// Open-horizon QP over [x_0..x_K, u_0..u_{K−1}] starting at tick t.
struct HorizonQp
{
  int n, d, K;
  Eigen::Index x(int k) const { return static_cast<Eigen::Index>(k) * n; }
  Eigen::Index u(int k) const { return static_cast<Eigen::Index>(K + 1) * n + static_cast<Eigen::Index>(k) * d; }
  Eigen::Index size() const { return u(K); }
};

/// Rows: x_0 = x_t, dynamics, 𝒳 on x_1..x_K, 𝒰 on u_0..u_{K−1}, optional x_K = x_end.
QpProblem horizon_constraints(const ProblemSpec & spec, const HorizonQp & L, Tick t, const Vector & x_t,
  const Vector * x_end)
{
  const int n = L.n;
  const int P = spec.period;
  const auto & lin = spec.dynamics.linear();
  Eigen::Index rows = n + static_cast<Eigen::Index>(L.K) * n + (x_end ? n : 0);
  for (int k = 0; k < L.K; ++k) {
    const int tau = intracycle(t + k, P).tau;
    rows += spec.constraints.state[intracycle(t + k + 1, P).tau].rows() + spec.constraints.input[tau].rows();
  }
  std::vector<Triplet> at;
  Vector l(rows), u(rows);
  Eigen::Index r = 0;
  const Matrix I = Matrix::Identity(n, n);
  add_block(at, r, L.x(0), I);
  l.segment(r, n) = x_t;
  u.segment(r, n) = x_t;
  r += n;
  for (int k = 0; k < L.K; ++k) {
    const auto & m = lin.models[intracycle(t + k, P).tau];
    add_block(at, r, L.x(k + 1), I);
    add_block(at, r, L.x(k), m.A, -1.0);
    add_block(at, r, L.u(k), m.B, -1.0);
    l.segment(r, n) = m.c;
    u.segment(r, n) = m.c;
    r += n;
  }
  for (int k = 0; k < L.K; ++k) {
    const auto & xs = spec.constraints.state[intracycle(t + k + 1, P).tau];
    add_block(at, r, L.x(k + 1), xs.G);
    l.segment(r, xs.rows()).setConstant(-kInf);
    u.segment(r, xs.rows()) = xs.g;
    r += xs.rows();
    const auto & us = spec.constraints.input[intracycle(t + k, P).tau];
    add_block(at, r, L.u(k), us.G);
    l.segment(r, us.rows()).setConstant(-kInf);
    u.segment(r, us.rows()) = us.g;
    r += us.rows();
  }
  if (x_end) {
    add_block(at, r, L.x(L.K), I);
    l.segment(r, n) = *x_end;
    u.segment(r, n) = *x_end;
    r += n;
  }
  QpProblem p;
  p.A.resize(rows, L.size());
  p.A.setFromTriplets(at.begin(), at.end());
  p.l = std::move(l);
  p.u = std::move(u);
  p.H.resize(L.size(), L.size());
  p.q = Vector::Zero(L.size());
  return p;
}

/// Σ_{k<K} h_{t+k}(x_k, u_k) as a QP objective.
void stage_objective(const ProblemSpec & spec, const HorizonQp & L, Tick t, QpProblem & p)
{
  std::vector<Triplet> ht;
  for (int k = 0; k < L.K; ++k) {
    const auto & h = spec.cost.terms[intracycle(t + k, spec.period).tau];
    add_block(ht, L.x(k), L.x(k), h.Q, 2.0);
    add_block(ht, L.u(k), L.u(k), h.R, 2.0);
    p.q.segment(L.x(k), L.n) = -2.0 * h.Q * h.x_ref + h.q_lin;
    p.q.segment(L.u(k), L.d) = h.r_lin;
    p.constant += h.x_ref.dot(h.Q * h.x_ref);
  }
  p.H.setFromTriplets(ht.begin(), ht.end());
}

}  // namespace

const char * to_string(TickStatus s)
{
  switch (s) {
    case TickStatus::Seed: return "seed";
    case TickStatus::Solved: return "solved";
    case TickStatus::Fallback: return "fallback";
  }
  return "?";
}

SeedValidation validate_seed(const ProblemSpec & spec, const PeriodicTrajectory & seed, double tol)
{
  SeedValidation v;
  const int P = spec.period;
  if (static_cast<int>(seed.states.size()) != P + 1 || static_cast<int>(seed.inputs.size()) != P) {
    std::ostringstream os;
    os << "seed must hold " << P + 1 << " states and " << P << " inputs, got " << seed.states.size() << " and "
       << seed.inputs.size();
    v.issues.push_back(os.str());
    return v;
  }
  for (int t = 0; t < P; ++t) {
    const auto & x = seed.states[t];
    const auto & u = seed.inputs[t];
    if (x.size() != spec.state_dim || u.size() != spec.input_dim) {
      v.issues.push_back("tick " + std::to_string(t) + ": dimension mismatch");
      continue;
    }
    const double de = inf_norm(seed.states[t + 1] - eval_dynamics(spec.dynamics, t, x, u));
    v.dynamics_error = std::max(v.dynamics_error, de);
    if (!(de <= tol)) {
      std::ostringstream os;
      os << "tick " << t << ": x_" << t + 1 << " differs from f(x_" << t << ", u_" << t << ") by " << de;
      v.issues.push_back(os.str());
    }
    const auto rep = check_constraints(spec.constraints, t, x, u);
    v.constraint_violation = std::max(v.constraint_violation, rep.max_violation);
    if (!(rep.max_violation <= tol)) {
      std::ostringstream os;
      os << "tick " << t << ": constraint violated by " << rep.max_violation;
      v.issues.push_back(os.str());
    }
  }
  if (seed.states.back().size() == spec.state_dim && seed.states.front().size() == spec.state_dim) {
    v.wrap_error = inf_norm(seed.states.back() - seed.states.front());
    if (!(v.wrap_error <= tol)) {
      std::ostringstream os;
      os << "x_P differs from x_0 by " << v.wrap_error;
      v.issues.push_back(os.str());
    }
  }
  v.ok = v.issues.empty();
  return v;
}

double SimLog::closed_loop_cost(Tick t) const
{
  if (t < 0 || t + period > static_cast<Tick>(rows.size())) { throw std::out_of_range("closed_loop_cost: window not recorded"); }
  double c = 0.0;
  for (Tick k = t; k < t + period; ++k) { c += rows[static_cast<std::size_t>(k)].stage_cost; }
  return c;
}

std::vector<double> SimLog::cycle_costs() const
{
  std::vector<double> out;
  for (int c = 0; c < cycles(); ++c) { out.push_back(closed_loop_cost(static_cast<Tick>(c) * period)); }
  return out;
}

const Vector & SimLog::state(Tick t) const
{
  if (t == static_cast<Tick>(rows.size())) { return final_state; }
  return rows.at(static_cast<std::size_t>(t)).x;
}

SimLog run_closed_loop(const ProblemSpec & spec, const PeriodicTrajectory & seed, int cycles, const SimSettings & settings)
{
  spec.validate();
  if (cycles < 1) { throw std::invalid_argument("run_closed_loop: cycles must be positive"); }
  const auto sv = validate_seed(spec, seed, settings.seed_tol);
  if (!sv.ok) {
    std::ostringstream os;
    os << "seed trajectory fails validation:";
    for (const auto & m : sv.issues) { os << "\n  " << m; }
    throw ValidationError(os.str());
  }

  const int P = spec.period;
  SimLog log;
  log.period  = P;
  log.horizon = spec.horizon;
  log.rows.reserve(static_cast<std::size_t>(cycles) * P);

  TrajectoryStore store(P, seed.states.front());
  LmpcController ctrl(spec, settings.controller);
  Vector x = seed.states.front();
  const Tick T = static_cast<Tick>(cycles) * P;
  for (Tick t = 0; t < T; ++t) {
    SimRow row;
    const auto ct = intracycle(t, P);
    row.t     = t;
    row.cycle = ct.cycle;
    row.tau   = ct.tau;
    row.x     = x;
    if (t < P) {
      row.u = seed.inputs[static_cast<std::size_t>(t)];
    } else {
      auto s = ctrl.step(store, t, x);
      row.u              = s.u;
      row.status         = s.fallback ? TickStatus::Fallback : TickStatus::Solved;
      row.lmpc_cost      = s.plan.cost;
      row.candidate_cost = s.candidate_cost;
      row.qp_status      = s.plan.diag.qp_status;
      row.qp_iterations  = s.plan.diag.qp_iterations;
      row.sqp_iterations = s.plan.diag.sqp_iterations;
      row.solve_ms       = s.solve_ms;
      row.plan_states    = std::move(s.plan.states);
    }
    row.stage_cost     = eval_stage_cost(spec.cost, t, x, row.u);
    Vector x_next      = eval_dynamics(spec.dynamics, t, x, row.u);
    store.record_step(t, row.u, x_next, row.stage_cost);
    x = std::move(x_next);
    log.rows.push_back(std::move(row));
  }
  log.final_state = x;
  return log;
}

std::optional<int> detect_periodic_convergence(const SimLog & log, double tol)
{
  const int P = log.period;
  const int C = log.cycles();
  if (C < 2) { return std::nullopt; }
  std::optional<int> first;
  for (int c = C - 1; c >= 1; --c) {
    double worst = 0.0;
    for (int tau = 0; tau < P; ++tau) {
      const Tick t = static_cast<Tick>(c) * P + tau;
      worst = std::max(worst, inf_norm(log.state(t) - log.state(t - P)));
    }
    if (!(worst < tol)) { break; }
    first = c;
  }
  return first;
}

bool PropertyReport::performance_ok(const PropertyTolerances & tol) const
{
  if (!strictly_convex || !converged_cycle) { return true; }
  return period_cost_gap.value_or(0.0) <= tol.period_cost && open_closed_deviation.value_or(0.0) <= tol.deviation;
}

bool PropertyReport::passes(const PropertyTolerances & tol) const
{
  return feasibility_ok(tol) && monotonicity_ok(tol) && performance_ok(tol) && dynamics_error <= tol.consistency
         && stage_cost_error <= tol.consistency;
}

PropertyReport verify_properties(const SimLog & log, const ProblemSpec & spec, const PropertyTolerances & tol)
{
  PropertyReport r;
  r.strictly_convex = spec.cost.strictly_convex();
  const auto T      = static_cast<Tick>(log.rows.size());

  for (Tick t = 0; t < T; ++t) {
    const auto & row = log.rows[static_cast<std::size_t>(t)];
    const auto rep   = check_constraints(spec.constraints, t, row.x, row.u);
    if (rep.max_violation > r.max_violation) {
      r.max_violation  = rep.max_violation;
      r.violation_tick = t;
    }
    r.dynamics_error   = std::max(r.dynamics_error, inf_norm(log.state(t + 1) - eval_dynamics(spec.dynamics, t, row.x, row.u)));
    r.stage_cost_error = std::max(r.stage_cost_error, std::abs(row.stage_cost - eval_stage_cost(spec.cost, t, row.x, row.u)));
    if (row.status == TickStatus::Fallback) { ++r.fallbacks; }
    if (t > 0 && row.lmpc_cost && log.rows[static_cast<std::size_t>(t - 1)].lmpc_cost) {
      const double inc = *row.lmpc_cost - *log.rows[static_cast<std::size_t>(t - 1)].lmpc_cost;
      if (inc > r.max_cost_increase) {
        r.max_cost_increase = inc;
        r.increase_tick     = t;
      }
    }
  }
  if (T > 0 && log.final_state.size() == spec.state_dim) {
    // only the state part applies at the final tick
    const auto & xs = spec.constraints.state[intracycle(T, spec.period).tau];
    if (xs.rows() > 0) {
      const double v = std::max(0.0, (xs.G * log.final_state - xs.g).maxCoeff());
      if (v > r.max_violation) {
        r.max_violation  = v;
        r.violation_tick = T;
      }
    }
  }

  r.converged_cycle = detect_periodic_convergence(log, tol.convergence);
  if (r.converged_cycle) {
    const Tick start = static_cast<Tick>(*r.converged_cycle + 1) * log.period;
    double gap = 0.0, dev = 0.0;
    bool any_gap = false, any_dev = false;
    for (Tick t = std::max<Tick>(start, log.period); t < T; ++t) {
      const auto & row = log.rows[static_cast<std::size_t>(t)];
      if (!row.lmpc_cost) { continue; }
      if (t + log.period <= T) {
        gap     = std::max(gap, std::abs(log.closed_loop_cost(t) - *row.lmpc_cost));
        any_gap = true;
      }
      for (std::size_t k = 0; k < row.plan_states.size() && t + static_cast<Tick>(k) <= T; ++k) {
        dev     = std::max(dev, inf_norm(row.plan_states[k] - log.state(t + static_cast<Tick>(k))));
        any_dev = true;
      }
    }
    if (any_gap) { r.period_cost_gap = gap; }
    if (any_dev) { r.open_closed_deviation = dev; }
  }
  return r;
}

PeriodicTrajectory warmup_mpc(const ProblemSpec & spec, const WarmupSettings & settings)
{
  spec.validate();
  if (!spec.dynamics.is_linear()) { throw std::invalid_argument("warmup_mpc: linear dynamics required"); }
  const int P = spec.period, N = spec.horizon, n = spec.state_dim, d = spec.input_dim;
  Vector x = settings.x0.size() == n ? settings.x0 : Vector::Zero(n);

  std::vector<Vector> xs{x}, us;
  const HorizonQp L{n, d, N};
  std::optional<QpWarmStart> ws;
  bool periodic = false;
  Tick t = 0;
  for (; t < static_cast<Tick>(settings.cycles_max) * P; ++t) {
    auto p = horizon_constraints(spec, L, t, x, nullptr);
    stage_objective(spec, L, t, p);
    const auto sol = solve_qp(p, settings.qp, ws ? &*ws : nullptr);
    if (sol.status != QpStatus::Solved) {
      std::ostringstream os;
      os << "warmup MPC failed at t=" << t << " (" << to_string(sol.status) << ")";
      throw ValidationError(os.str());
    }
    Vector z = sol.z;
    // shift for the next tick
    Vector shifted = z;
    shifted.segment(L.x(0), static_cast<Eigen::Index>(N) * n) = z.segment(L.x(1), static_cast<Eigen::Index>(N) * n);
    shifted.segment(L.u(0), static_cast<Eigen::Index>(N - 1) * d) = z.segment(L.u(1), static_cast<Eigen::Index>(N - 1) * d);
    ws = QpWarmStart{shifted, {}};

    const Vector u = z.segment(L.u(0), d);
    x = eval_dynamics(spec.dynamics, t, x, u);
    us.push_back(u);
    xs.push_back(x);

    const Tick done = t + 1;
    if (done % P == 0 && done >= 2 * P) {
      double worst = 0.0;
      for (Tick k = done - P; k <= done; ++k) {
        worst = std::max(worst, inf_norm(xs[static_cast<std::size_t>(k)] - xs[static_cast<std::size_t>(k - P)]));
      }
      if (worst < settings.tol) {
        periodic = true;
        ++t;
        break;
      }
    }
  }
  if (!periodic) {
    std::ostringstream os;
    os << "warmup MPC did not reach a periodic trajectory within " << settings.cycles_max << " cycles";
    throw ValidationError(os.str());
  }

  // Snap the last period onto x_P = x_0 with minimal deviation.
  const Tick s      = t - P;
  const Vector x0   = xs[static_cast<std::size_t>(s)];
  const HorizonQp F{n, d, P};
  auto p            = horizon_constraints(spec, F, s, x0, &x0);
  std::vector<Triplet> ht;
  for (Eigen::Index i = 0; i < F.size(); ++i) { ht.emplace_back(i, i, 2.0); }
  p.H.setFromTriplets(ht.begin(), ht.end());
  Vector ref(F.size());
  for (int k = 0; k <= P; ++k) { ref.segment(F.x(k), n) = xs[static_cast<std::size_t>(s + k)]; }
  for (int k = 0; k < P; ++k) { ref.segment(F.u(k), d) = us[static_cast<std::size_t>(s + k)]; }
  p.q = -2.0 * ref;
  p.constant = ref.squaredNorm();
  QpWarmStart snap_ws{ref, {}};
  const auto sol = solve_qp(p, settings.qp, &snap_ws);
  if (sol.status != QpStatus::Solved) {
    throw ValidationError("warmup wrap snap failed (" + std::string(to_string(sol.status)) + ")");
  }

  PeriodicTrajectory out;
  out.states.push_back(x0);
  for (int k = 0; k < P; ++k) {
    out.inputs.push_back(sol.z.segment(F.u(k), d));
    out.states.push_back(eval_dynamics(spec.dynamics, k, out.states.back(), out.inputs.back()));
  }
  const auto v = validate_seed(spec, out);
  if (!v.ok) {
    std::ostringstream os;
    os << "warmup seed fails validation:";
    for (const auto & m : v.issues) { os << "\n  " << m; }
    throw ValidationError(os.str());
  }
  return out;
}

void write_sim_csv(std::ostream & os, const SimLog & log, bool with_timing)
{
  const auto n = log.rows.empty() ? log.final_state.size() : log.rows.front().x.size();
  const auto d = log.rows.empty() ? 0 : log.rows.front().u.size();
  os << "t,cycle,tau";
  for (Eigen::Index i = 0; i < n; ++i) { os << ",x" << i; }
  for (Eigen::Index j = 0; j < d; ++j) { os << ",u" << j; }
  os << ",stage_cost,lmpc_cost,status,sqp_iters,solve_ms\n";
  for (const auto & r : log.rows) {
    os << r.t << ',' << r.cycle << ',' << r.tau;
    for (Eigen::Index i = 0; i < n; ++i) { os << ',' << csv::num(r.x(i)); }
    for (Eigen::Index j = 0; j < d; ++j) { os << ',' << csv::num(r.u(j)); }
    os << ',' << csv::num(r.stage_cost) << ',' << (r.lmpc_cost ? csv::num(*r.lmpc_cost) : std::string{}) << ','
       << to_string(r.status) << ',' << r.sqp_iterations << ',';
    if (with_timing && r.status != TickStatus::Seed) { os << csv::num(r.solve_ms); }
    os << '\n';
  }
}

}  // namespace plmpc
