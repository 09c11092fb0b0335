#include "plmpc/controller.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>

namespace plmpc {

namespace {

using Triplet = Eigen::Triplet<double>;
constexpr double kInf = std::numeric_limits<double>::infinity();

int tau_of(const ProblemSpec & spec, Tick t) { return intracycle(t, spec.period).tau; }

void add_block(std::vector<Triplet> & trip, Eigen::Index r0, Eigen::Index c0, const Matrix & B, double scale = 1.0)
{
  for (Eigen::Index c = 0; c < B.cols(); ++c) {
    for (Eigen::Index r = 0; r < B.rows(); ++r) {
      if (B(r, c) != 0.0) { trip.emplace_back(r0 + r, c0 + c, scale * B(r, c)); }
    }
  }
}

Vector pack(const FtocpLayout & L, std::span<const Vector> states, std::span<const Vector> inputs, const Vector & lambda)
{
  Vector z(L.size());
  for (int k = 0; k <= L.N; ++k) { z.segment(L.x(k), L.n) = states[k]; }
  for (int k = 0; k < L.N; ++k) { z.segment(L.u(k), L.d) = inputs[k]; }
  z.segment(L.lambda(0), L.M) = lambda;
  return z;
}

void unpack(const FtocpLayout & L, const Vector & z, std::vector<Vector> & states, std::vector<Vector> & inputs,
  Vector & lambda)
{
  states.resize(L.N + 1);
  inputs.resize(L.N);
  for (int k = 0; k <= L.N; ++k) { states[k] = z.segment(L.x(k), L.n); }
  for (int k = 0; k < L.N; ++k) { inputs[k] = z.segment(L.u(k), L.d); }
  lambda = z.segment(L.lambda(0), L.M);
}

/// Max-norm dynamics defect of a plan and its ℓ1 sum.
std::pair<double, double> dynamics_defect(const ProblemSpec & spec, Tick t, std::span<const Vector> states,
  std::span<const Vector> inputs)
{
  double worst = 0.0, sum = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Vector r = states[k + 1] - eval_dynamics(spec.dynamics, t + static_cast<Tick>(k), states[k], inputs[k]);
    worst = std::max(worst, r.cwiseAbs().maxCoeff());
    sum += r.cwiseAbs().sum();
  }
  return {worst, sum};
}

double terminal_defect(const TerminalData & td, const Vector & xN, const Vector & lambda)
{
  return (xN - td.vertices * lambda).cwiseAbs().maxCoeff();
}

}  // namespace

FtocpQp build_ftocp(const ProblemSpec & spec, const TerminalData & td, Tick t, const Vector & x_t,
  std::span<const AffineModel> models)
{
  const int n = spec.state_dim, d = spec.input_dim, N = spec.horizon, M = td.size();
  if (M == 0) { throw EmptySafeSetError("build_ftocp: empty terminal data"); }
  if (static_cast<int>(models.size()) != N) { throw std::invalid_argument("build_ftocp: need one model per step"); }
  if (x_t.size() != n) { throw DimensionError("build_ftocp: measured state dimension"); }
  if (td.vertices.rows() != n) { throw DimensionError("build_ftocp: terminal vertex dimension"); }

  FtocpQp out;
  FtocpLayout & L = out.layout;
  L = {n, d, N, M};
  const Eigen::Index nv = L.size();

  // objective
  std::vector<Triplet> ht;
  Vector q       = Vector::Zero(nv);
  double constant = 0.0;
  for (int k = 0; k < N; ++k) {
    const auto & h = spec.cost.terms[tau_of(spec, t + k)];
    add_block(ht, L.x(k), L.x(k), h.Q, 2.0);
    add_block(ht, L.u(k), L.u(k), h.R, 2.0);
    q.segment(L.x(k), n) = -2.0 * h.Q * h.x_ref + h.q_lin;
    q.segment(L.u(k), d) = h.r_lin;
    constant += h.x_ref.dot(h.Q * h.x_ref);
  }
  q.segment(L.lambda(0), M) = td.costs;

  // constraints
  Eigen::Index rows = n + static_cast<Eigen::Index>(N) * n + n + 1 + M;
  for (int k = 0; k < N; ++k) {
    if (k >= 1) { rows += spec.constraints.state[tau_of(spec, t + k)].rows(); }
    rows += spec.constraints.input[tau_of(spec, t + k)].rows();
  }
  std::vector<Triplet> at;
  Vector l(rows), u(rows);
  Eigen::Index r = 0;

  const Matrix I = Matrix::Identity(n, n);
  add_block(at, r, L.x(0), I);
  l.segment(r, n) = x_t;
  u.segment(r, n) = x_t;
  r += n;

  for (int k = 0; k < N; ++k) {
    const auto & m = models[k];
    add_block(at, r, L.x(k + 1), I);
    add_block(at, r, L.x(k), m.A, -1.0);
    add_block(at, r, L.u(k), m.B, -1.0);
    l.segment(r, n) = m.c;
    u.segment(r, n) = m.c;
    r += n;
  }

  for (int k = 0; k < N; ++k) {
    const int tau = tau_of(spec, t + k);
    if (k >= 1) {
      const auto & xs = spec.constraints.state[tau];
      add_block(at, r, L.x(k), xs.G);
      l.segment(r, xs.rows()).setConstant(-kInf);
      u.segment(r, xs.rows()) = xs.g;
      r += xs.rows();
    }
    const auto & us = spec.constraints.input[tau];
    add_block(at, r, L.u(k), us.G);
    l.segment(r, us.rows()).setConstant(-kInf);
    u.segment(r, us.rows()) = us.g;
    r += us.rows();
  }

  // x_N = Dλ, 1ᵀλ = 1, λ ≥ 0
  add_block(at, r, L.x(N), I);
  add_block(at, r, L.lambda(0), td.vertices, -1.0);
  l.segment(r, n).setZero();
  u.segment(r, n).setZero();
  r += n;
  add_block(at, r, L.lambda(0), Matrix::Ones(1, M));
  l(r) = u(r) = 1.0;
  r += 1;
  add_block(at, r, L.lambda(0), Matrix::Identity(M, M));
  l.segment(r, M).setZero();
  u.segment(r, M).setConstant(kInf);
  r += M;

  out.qp.H.resize(nv, nv);
  out.qp.H.setFromTriplets(ht.begin(), ht.end());
  out.qp.A.resize(rows, nv);
  out.qp.A.setFromTriplets(at.begin(), at.end());
  out.qp.q        = std::move(q);
  out.qp.l        = std::move(l);
  out.qp.u        = std::move(u);
  out.qp.constant = constant;
  return out;
}

FtocpQp build_ftocp(const ProblemSpec & spec, const TerminalData & td, Tick t, const Vector & x_t)
{
  if (!spec.dynamics.is_linear()) { throw std::invalid_argument("build_ftocp: dynamics is not linear"); }
  std::vector<AffineModel> models;
  models.reserve(spec.horizon);
  for (int k = 0; k < spec.horizon; ++k) { models.push_back(spec.dynamics.linear().models[tau_of(spec, t + k)]); }
  return build_ftocp(spec, td, t, x_t, models);
}

double plan_cost(const ProblemSpec & spec, const TerminalData & td, Tick t, std::span<const Vector> states,
  std::span<const Vector> inputs, const Vector & lambda)
{
  double c = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    c += eval_stage_cost(spec.cost, t + static_cast<Tick>(k), states[k], inputs[k]);
  }
  return c + td.costs.dot(lambda);
}

FtocpSolution solve_lmpc_linear(const ProblemSpec & spec, const TrajectoryStore & store, Tick t, const Vector & x_t,
  const CandidateTrajectory * warm, const ControllerSettings & settings)
{
  if (!spec.dynamics.is_linear()) { throw std::invalid_argument("solve_lmpc_linear: dynamics is not linear"); }
  if (t < spec.period) { throw std::invalid_argument("solve_lmpc_linear: LMPC starts at t = P"); }

  FtocpSolution out;
  out.t        = t;
  out.terminal = terminal_data(store, t, t + spec.horizon, settings.max_cycles_retained);
  const auto f = build_ftocp(spec, out.terminal, t, x_t);

  std::optional<QpWarmStart> ws;
  if (warm != nullptr && warm->lambda.size() == out.terminal.size()) {
    ws = QpWarmStart{pack(f.layout, warm->states, warm->inputs, warm->lambda), {}};
  }
  const auto sol = solve_qp(f.qp, settings.qp, ws ? &*ws : nullptr);
  out.diag.qp_status     = sol.status;
  out.diag.qp_iterations = sol.iterations;
  if (sol.status != QpStatus::Solved) { return out; }

  unpack(f.layout, sol.z, out.states, out.inputs, out.lambda);
  out.states[0]                = x_t;
  out.diag.converged           = true;
  out.diag.dynamics_residual   = dynamics_defect(spec, t, out.states, out.inputs).first;
  out.diag.terminal_residual   = terminal_defect(out.terminal, out.states.back(), out.lambda);
  out.cost                     = plan_cost(spec, out.terminal, t, out.states, out.inputs, out.lambda);
  return out;
}

FtocpSolution solve_lmpc_nonlinear(const ProblemSpec & spec, const TrajectoryStore & store, Tick t, const Vector & x_t,
  const CandidateTrajectory * warm, const ControllerSettings & settings)
{
  if (t < spec.period) { throw std::invalid_argument("solve_lmpc_nonlinear: LMPC starts at t = P"); }
  const auto & sqp = settings.sqp;
  const int N      = spec.horizon;

  FtocpSolution out;
  out.t        = t;
  out.terminal = terminal_data(store, t, t + N, settings.max_cycles_retained);

  CandidateTrajectory guess;
  if (warm != nullptr && warm->lambda.size() == out.terminal.size()) {
    guess = *warm;
  } else {
    guess = replay_candidate(spec, store, t, settings.max_cycles_retained);
  }
  guess.states[0] = x_t;

  std::vector<Vector> xs = guess.states, us = guess.inputs;
  Vector lam             = guess.lambda;
  std::vector<AffineModel> models(N);
  auto linearize = [&] {
    for (int k = 0; k < N; ++k) { models[k] = linearize_dynamics(spec.dynamics, t + k, xs[k], us[k]); }
  };

  linearize();
  auto f  = build_ftocp(spec, out.terminal, t, x_t, models);
  Vector z = pack(f.layout, xs, us, lam);
  const SparseMatrix H = f.qp.H;
  const Vector q       = f.qp.q;
  const double c0      = f.qp.constant;

  auto objective = [&](const Vector & v) { return 0.5 * v.dot(H * v) + q.dot(v) + c0; };
  auto defect    = [&](const Vector & v) {
    std::vector<Vector> sx, su;
    Vector sl;
    unpack(f.layout, v, sx, su, sl);
    return dynamics_defect(spec, t, sx, su);
  };

  double mu = 1.0;
  int iter  = 0;
  bool converged = false;
  for (iter = 1; iter <= sqp.max_iter; ++iter) {
    if (iter > 1) {
      linearize();
      f = build_ftocp(spec, out.terminal, t, x_t, models);
    }
    QpWarmStart ws{z, {}};
    const auto sol = solve_qp(f.qp, settings.qp, &ws);
    out.diag.qp_status = sol.status;
    out.diag.qp_iterations += sol.iterations;
    if (sol.status != QpStatus::Solved) { break; }

    const Vector dz   = sol.z - z;
    const double step = dz.cwiseAbs().maxCoeff();
    const auto [cmax, c1] = defect(z);
    if (step <= sqp.step_tol && cmax <= sqp.dyn_tol) {
      z         = sol.z;
      converged = true;
      break;
    }

    const Vector ydyn = sol.y.segment(f.layout.dynamics_row(0), static_cast<Eigen::Index>(N) * spec.state_dim);
    mu = std::max(mu, 2.0 * ydyn.cwiseAbs().maxCoeff() + 1e-3);

    const double phi0 = objective(z) + mu * c1;
    const double dphi = (H * z + q).dot(dz) - mu * c1;
    double alpha      = 1.0;
    bool accepted     = false;
    Vector trial;
    for (int b = 0; b <= sqp.max_backtracks; ++b) {
      trial = z + alpha * dz;
      const double phi = objective(trial) + mu * defect(trial).second;
      if (phi <= phi0 + sqp.armijo * alpha * std::min(dphi, 0.0)) {
        accepted = true;
        break;
      }
      alpha *= sqp.backtrack;
    }
    if (!accepted) {
      // no merit decrease left at rounding level
      if (step <= sqp.stall_tol && cmax <= sqp.dyn_tol) {
        z         = sol.z;
        converged = true;
      }
      break;
    }
    z = trial;
    unpack(f.layout, z, xs, us, lam);

    if (alpha * step <= sqp.step_tol && defect(z).first <= sqp.dyn_tol) {
      converged = true;
      break;
    }
  }
  out.diag.sqp_iterations = std::min(iter, sqp.max_iter);
  if (!converged) { return out; }

  std::vector<Vector> plan_x, plan_u;
  unpack(f.layout, z, plan_x, plan_u, out.lambda);
  out.diag.dynamics_residual = dynamics_defect(spec, t, plan_x, plan_u).first;

  // Re-integrate the inputs through the true dynamics.
  out.inputs = plan_u;
  out.states.assign(1, x_t);
  for (int k = 0; k < N; ++k) { out.states.push_back(eval_dynamics(spec.dynamics, t + k, out.states[k], out.inputs[k])); }
  out.diag.terminal_residual = terminal_defect(out.terminal, out.states.back(), out.lambda);
  out.diag.converged         = out.diag.terminal_residual <= 1e-6;
  out.cost                   = plan_cost(spec, out.terminal, t, out.states, out.inputs, out.lambda);
  return out;
}

CandidateTrajectory candidate_shift(const ProblemSpec & spec, const FtocpSolution & prev, const TrajectoryStore & store,
  Tick t_next, int max_cycles_retained)
{
  if (t_next != prev.t + 1) { throw std::invalid_argument("candidate_shift: t_next must follow the previous solve"); }
  const int N = spec.horizon;

  CandidateTrajectory c;
  c.t        = t_next;
  c.terminal = terminal_data(store, t_next, t_next + N, max_cycles_retained);

  const auto & old = prev.terminal;
  const int M      = old.size();
  Matrix from_states(spec.state_dim, M);
  Vector next_state = Vector::Zero(spec.state_dim);
  for (int j = 0; j < M; ++j) {
    from_states.col(j) = store.state(old.indices[j]);
    next_state += prev.lambda(j) * store.state(old.indices[j] + 1);
  }

  Vector gamma;
  if (spec.dynamics.is_linear()) {
    gamma   = prev.lambda;
    c.valid = true;
  } else if (spec.dynamics.nonlinear().gamma) {
    gamma   = spec.dynamics.nonlinear().gamma(tau_of(spec, old.slot), from_states, prev.lambda);
    c.valid = true;
  } else {
    gamma   = prev.lambda;
    c.valid = false;
  }
  Vector next_input = Vector::Zero(spec.input_dim);
  for (int j = 0; j < M; ++j) { next_input += gamma(j) * store.input(old.indices[j]); }

  c.states.assign(prev.states.begin() + 1, prev.states.end());
  c.states.push_back(next_state);
  c.inputs.assign(prev.inputs.begin() + 1, prev.inputs.end());
  c.inputs.push_back(next_input);

  // Vertex j of the new set is the successor of vertex j of the old one.
  c.lambda = Vector::Zero(c.terminal.size());
  if (c.terminal.size() < M) {
    c.valid = false;
    c.lambda.setConstant(1.0 / c.terminal.size());
  } else {
    c.lambda.head(M) = prev.lambda;
  }
  return c;
}

CandidateTrajectory replay_candidate(const ProblemSpec & spec, const TrajectoryStore & store, Tick t, int max_cycles_retained)
{
  const int P = spec.period, N = spec.horizon;
  if (t < P) { throw std::invalid_argument("replay_candidate: needs one recorded cycle"); }
  CandidateTrajectory c;
  c.t        = t;
  c.terminal = terminal_data(store, t, t + N, max_cycles_retained);
  for (int k = 0; k <= N; ++k) { c.states.push_back(store.state(t - P + k)); }
  for (int k = 0; k < N; ++k) { c.inputs.push_back(store.input(t - P + k)); }
  c.states[0] = store.state(t);
  c.lambda    = Vector::Zero(c.terminal.size());
  c.lambda(0) = 1.0;
  c.valid     = (store.state(t) - store.state(t - P)).cwiseAbs().maxCoeff() <= 1e-8;
  return c;
}

FtocpSolution candidate_as_solution(const ProblemSpec & spec, const CandidateTrajectory & cand)
{
  FtocpSolution s;
  s.t        = cand.t;
  s.states   = cand.states;
  s.inputs   = cand.inputs;
  s.lambda   = cand.lambda;
  s.terminal = cand.terminal;
  s.cost     = plan_cost(spec, cand.terminal, cand.t, cand.states, cand.inputs, cand.lambda);
  s.diag.dynamics_residual = dynamics_defect(spec, cand.t, cand.states, cand.inputs).first;
  s.diag.terminal_residual = terminal_defect(cand.terminal, cand.states.back(), cand.lambda);
  return s;
}

LmpcController::LmpcController(ProblemSpec spec, ControllerSettings settings)
    : spec_(std::move(spec)), settings_(std::move(settings))
{
  spec_.validate();
  if (settings_.max_cycles_retained > 0) {
    std::clog << "warning: safe set limited to " << settings_.max_cycles_retained
              << " cycles; recursive feasibility and cost guarantees no longer apply\n";
  }
}

LmpcController::Step LmpcController::step(const TrajectoryStore & store, Tick t, const Vector & x_t)
{
  if (t < spec_.period) { throw std::invalid_argument("LmpcController::step: LMPC starts at t = P"); }

  CandidateTrajectory cand = prev_ && prev_->t == t - 1
                               ? candidate_shift(spec_, *prev_, store, t, settings_.max_cycles_retained)
                               : replay_candidate(spec_, store, t, settings_.max_cycles_retained);

  Step s;
  s.candidate_cost = plan_cost(spec_, cand.terminal, t, cand.states, cand.inputs, cand.lambda);

  const auto t0 = std::chrono::steady_clock::now();
  FtocpSolution plan = spec_.dynamics.is_linear() ? solve_lmpc_linear(spec_, store, t, x_t, &cand, settings_)
                                                  : solve_lmpc_nonlinear(spec_, store, t, x_t, &cand, settings_);
  s.solve_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  // a local SQP solution may cost more than the shifted candidate
  const bool dominated = cand.valid && s.candidate_cost && plan.cost > *s.candidate_cost + 1e-12 * (1.0 + std::abs(*s.candidate_cost));
  if (plan.diag.converged && !dominated) {
    s.u    = plan.inputs.front();
    s.plan = std::move(plan);
  } else {
    if (!cand.valid) {
      std::ostringstream os;
      os << "LMPC solve failed at t=" << t << " (" << to_string(plan.diag.qp_status)
         << ") and no feasible candidate is available";
      throw std::runtime_error(os.str());
    }
    s.fallback = true;
    s.u        = cand.inputs.front();
    auto diag  = plan.diag;
    s.plan     = candidate_as_solution(spec_, cand);
    s.plan.diag.qp_status      = diag.qp_status;
    s.plan.diag.qp_iterations  = diag.qp_iterations;
    s.plan.diag.sqp_iterations = diag.sqp_iterations;
  }
  prev_ = s.plan;
  return s;
}

}  // namespace plmpc
