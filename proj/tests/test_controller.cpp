#include "fixtures.hpp"
#include "oracles.hpp"

#include <plmpc/controller.hpp>
#include <plmpc/scenarios.hpp>
#include <plmpc/simulation.hpp>

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace plmpc;
using fixture::mat;
using fixture::vec;

namespace {

TrajectoryStore replay_seed(const ProblemSpec & spec, const PeriodicTrajectory & seed)
{
  TrajectoryStore store(spec.period, seed.states.front());
  for (int t = 0; t < spec.period; ++t) {
    const auto & x = seed.states[static_cast<std::size_t>(t)];
    const auto & u = seed.inputs[static_cast<std::size_t>(t)];
    store.record_step(t, u, eval_dynamics(spec.dynamics, t, x, u), eval_stage_cost(spec.cost, t, x, u));
  }
  return store;
}

Vector pack(const FtocpLayout & L, const std::vector<Vector> & xs, const std::vector<Vector> & us, const Vector & lam)
{
  Vector z(L.size());
  for (int k = 0; k <= L.N; ++k) { z.segment(L.x(k), L.n) = xs[static_cast<std::size_t>(k)]; }
  for (int k = 0; k < L.N; ++k) { z.segment(L.u(k), L.d) = us[static_cast<std::size_t>(k)]; }
  z.segment(L.lambda(0), L.M) = lam;
  return z;
}

double bound_violation(const QpProblem & p, const Vector & z)
{
  const Vector Az = p.A * z;
  return std::max((p.l - Az).maxCoeff(), (Az - p.u).maxCoeff());
}

}  // namespace

TEST_CASE("FTOCP layout arithmetic")
{
  const FtocpLayout L{2, 1, 25, 3};
  CHECK(L.size() == 26 * 2 + 25 + 3);
  CHECK(L.size() == 80);
  CHECK(L.u(0) == 52);
  CHECK(L.lambda(0) == 77);
}

TEST_CASE("seed candidate is feasible for the first FTOCP")
{
  const auto cfg   = builtin("s1_tv_dynamics");
  const auto seed  = make_seed(cfg);
  const auto store = replay_seed(cfg.spec, seed);
  const int P = cfg.spec.period, N = cfg.spec.horizon;
  const auto td    = terminal_data(store, P, P + N);
  const auto f     = build_ftocp(cfg.spec, td, P, store.state(P));

  const auto cand = replay_candidate(cfg.spec, store, P);
  REQUIRE(cand.lambda.size() == td.size());
  CHECK(bound_violation(f.qp, pack(f.layout, cand.states, cand.inputs, cand.lambda)) <= 1e-12);

  SUBCASE("unit λ on each vertex satisfies the terminal rows")
  {
    for (int j = 0; j < td.size(); ++j) {
      Vector lam = Vector::Zero(td.size());
      lam(j)     = 1.0;
      Vector z   = Vector::Zero(f.layout.size());
      z.segment(f.layout.x(N), 2) = td.vertices.col(j);
      z.segment(f.layout.lambda(0), td.size()) = lam;
      const Vector Az = f.qp.A * z;
      // terminal equality and simplex rows sit at the end, before λ ≥ 0
      const Eigen::Index M = td.size(), n = 2;
      const Eigen::Index first = f.qp.A.rows() - M - 1 - n;
      for (Eigen::Index r = first; r < first + n + 1; ++r) {
        CHECK(std::abs(Az(r) - f.qp.l(r)) <= 1e-15);
        CHECK(f.qp.l(r) == f.qp.u(r));
      }
    }
  }
}

TEST_CASE("already optimal steady state")
{
  auto spec = fixture::double_integrator(10, 3, 0.0, 1.0);
  PeriodicTrajectory seed;
  seed.states.assign(11, Vector::Zero(2));
  seed.inputs.assign(10, Vector::Zero(1));
  const auto store = replay_seed(spec, seed);
  const auto sol   = solve_lmpc_linear(spec, store, 10, Vector::Zero(2));
  REQUIRE(sol.diag.converged);
  CHECK(sol.cost == doctest::Approx(0.0).scale(1.0));
  CHECK(std::abs(sol.inputs.front()(0)) <= 1e-9);
}

TEST_CASE("scenario 1 first solve improves on the shifted seed")
{
  const auto cfg   = builtin("s1_tv_dynamics");
  const auto store = replay_seed(cfg.spec, make_seed(cfg));
  const int P      = cfg.spec.period;
  const auto sol   = solve_lmpc_linear(cfg.spec, store, P, store.state(P));
  REQUIRE(sol.diag.converged);
  const auto cand  = replay_candidate(cfg.spec, store, P);
  const double cc  = plan_cost(cfg.spec, cand.terminal, P, cand.states, cand.inputs, cand.lambda);
  CHECK(sol.cost <= cc + 1e-9);
  // the seed is the origin with h = 0.04 per tick
  CHECK(cc == doctest::Approx(4.0));

  SUBCASE("plan invariants")
  {
    CHECK(sol.states.front() == store.state(P));
    CHECK((sol.terminal.vertices * sol.lambda - sol.states.back()).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(sol.lambda.sum() == doctest::Approx(1.0));
    CHECK(sol.lambda.minCoeff() >= -1e-12);
    CHECK(sol.cost == doctest::Approx(plan_cost(cfg.spec, sol.terminal, P, sol.states, sol.inputs, sol.lambda)));
  }
}

TEST_CASE("two-step problem matches an input-grid search")
{
  // P = 5, N = 2; three recorded cycles give three terminal vertices.
  auto spec = fixture::double_integrator(5, 2, 0.3, 0.5);
  TrajectoryStore store(5, vec({0, 0}));
  Vector x = vec({0, 0});
  for (int t = 0; t < 15; ++t) {
    const Vector u  = vec({0.5 * std::sin(0.9 * t) + 0.1 * (t / 5)});
    const Vector xn = eval_dynamics(spec.dynamics, t, x, u);
    store.record_step(t, u, xn, eval_stage_cost(spec.cost, t, x, u));
    x = xn;
  }
  const Tick t  = 15;
  const auto td = terminal_data(store, t, t + 2);
  REQUIRE(td.size() == 3);
  const auto sol = solve_lmpc_linear(spec, store, t, store.state(t));
  REQUIRE(sol.diag.converged);

  const Vector x0 = store.state(t);
  auto total = [&](double u0, double u1) -> std::optional<double> {
    const Vector x1 = eval_dynamics(spec.dynamics, t, x0, vec({u0}));
    const Vector x2 = eval_dynamics(spec.dynamics, t + 1, x1, vec({u1}));
    const auto q    = oracle::q_function_enum(td.vertices, td.costs, x2);
    if (!q) { return std::nullopt; }
    return eval_stage_cost(spec.cost, t, x0, vec({u0})) + eval_stage_cost(spec.cost, t + 1, x1, vec({u1})) + *q;
  };
  // The map (u0,u1) → x2 is an affine bijection, so a coarse grid brackets the
  // feasible region and finer grids around the best point resolve it.
  double best = std::numeric_limits<double>::infinity(), bu0 = 0, bu1 = 0;
  auto scan = [&](double c0, double c1, double half, double step) {
    for (double u0 = c0 - half; u0 <= c0 + half; u0 += step) {
      for (double u1 = c1 - half; u1 <= c1 + half; u1 += step) {
        const auto v = total(u0, u1);
        if (v && *v < best) {
          best = *v;
          bu0  = u0;
          bu1  = u1;
        }
      }
    }
  };
  scan(0.0, 0.0, 30.0, 0.1);
  REQUIRE(std::isfinite(best));
  // re-center each grid level until the best point stops moving
  for (const double step : {0.01, 1e-3}) {
    for (double prev = std::numeric_limits<double>::infinity(); best < prev - 1e-12;) {
      prev = best;
      scan(bu0, bu1, 20.0 * step, step);
    }
  }
  CHECK(sol.cost <= best + 1e-9);
  CHECK(best - sol.cost <= 1e-3 * std::max(1.0, std::abs(best)));
}

TEST_CASE("linear dynamics through the SQP path")
{
  const auto cfg   = builtin("s1_tv_dynamics");
  auto spec        = cfg.spec;
  const auto lin   = cfg.spec.dynamics.linear();
  NonlinearDynamics nl;
  nl.map   = [lin](int tau, const Vector & x, const Vector & u) { return lin.models[tau].apply(x, u); };
  nl.gamma = [](int, const Matrix &, const Vector & lambda) { return lambda; };
  spec.dynamics = Dynamics(nl, spec.period, 2, 1);

  const auto store = replay_seed(cfg.spec, make_seed(cfg));
  const int P      = spec.period;
  const Vector x0  = vec({0.05, -0.02});
  const auto a     = solve_lmpc_linear(cfg.spec, store, P, x0);
  const auto b     = solve_lmpc_nonlinear(spec, store, P, x0);
  REQUIRE(a.diag.converged);
  REQUIRE(b.diag.converged);
  CHECK(b.cost == doctest::Approx(a.cost).epsilon(1e-6));
  for (std::size_t k = 0; k < a.inputs.size(); ++k) { CHECK(std::abs(a.inputs[k](0) - b.inputs[k](0)) <= 1e-6); }
}

TEST_CASE("scenario 4 first solve against a reduced-horizon direct search")
{
  auto cfg          = builtin("s4_nonlinear");
  cfg.spec.horizon  = 4;
  const auto & spec = cfg.spec;
  const auto store  = replay_seed(spec, make_seed(cfg));
  const int P       = spec.period;
  const auto sol    = solve_lmpc_nonlinear(spec, store, P, store.state(P));
  REQUIRE(sol.diag.converged);
  CHECK(sol.states[1](0) >= 0.5);
  CHECK(std::abs(sol.inputs.front()(0)) <= 5.0);

  // Only x_4 = (1, 0) is in the safe set. Grid (u0, u1) and solve for (u2, u3)
  // so that the terminal state is reached exactly.
  const double J_term = store.return_cost(P, 4);
  auto s = [&](int k) { return 5.0 * std::sin(2.0 * std::numbers::pi * ((P + k) % P) / P); };
  double best = std::numeric_limits<double>::infinity();
  for (double u0 = -5; u0 <= 5 + 1e-12; u0 += 0.05) {
    for (double u1 = -5; u1 <= 5 + 1e-12; u1 += 0.05) {
      double p = 1.0, q = 0.0, cost = 0.0;
      bool ok = true;
      double us[4] = {u0, u1, 0, 0};
      for (int k = 0; k < 4 && ok; ++k) {
        if (k == 2) { us[2] = (1.0 - p - 0.2 * q) / (0.01 * p) - s(2); }
        if (k == 3) { us[3] = -q / (0.1 * p) - s(3); }
        if (std::abs(us[k]) > 5.0) { ok = false; }
        cost += (p - 2.0) * (p - 2.0);
        const double pn = p + 0.1 * q, qn = q + 0.1 * p * (s(k) + us[k]);
        p = pn;
        q = qn;
        if (k < 3 && p < 0.5) { ok = false; }
      }
      if (!ok || std::abs(p - 1.0) > 1e-9 || std::abs(q) > 1e-9) { continue; }
      best = std::min(best, cost + J_term);
    }
  }
  REQUIRE(std::isfinite(best));
  CHECK(sol.cost <= best * 1.02);
  CHECK(best <= sol.cost * 1.02);
}

TEST_CASE("scenario 4 convex-combination witness")
{
  const auto s4 = builtin("s4_nonlinear");
  const auto & nl = s4.spec.dynamics.nonlinear();
  REQUIRE(nl.gamma);
  const Vector g = nl.gamma(0, mat({{1, 2}, {0, 0}}), vec({0.5, 0.5}));
  CHECK(g(0) == doctest::Approx(1.0 / 3.0));
  CHECK(g(1) == doctest::Approx(2.0 / 3.0));

  std::mt19937 gen(9);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int M = 1 + trial % 5;
    Matrix X(2, M);
    Matrix U(1, M);
    Vector lam(M);
    for (int j = 0; j < M; ++j) {
      X(0, j) = 0.5 + 2.0 * ud(gen);
      X(1, j) = 4.0 * ud(gen) - 2.0;
      U(0, j) = 10.0 * ud(gen) - 5.0;
      lam(j)  = ud(gen);
    }
    lam /= lam.sum();
    const int tau  = trial % 100;
    const Vector gm = nl.gamma(tau, X, lam);
    CHECK(gm.minCoeff() >= 0.0);
    CHECK(gm.sum() == doctest::Approx(1.0).epsilon(1e-12));
    Vector lhs = eval_dynamics(s4.spec.dynamics, tau, X * lam, U * gm);
    Vector rhs = Vector::Zero(2);
    for (int j = 0; j < M; ++j) { rhs += lam(j) * eval_dynamics(s4.spec.dynamics, tau, X.col(j), U.col(j)); }
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("shifted candidate stays feasible")
{
  const auto cfg = builtin("s1_tv_dynamics");
  const auto & spec = cfg.spec;
  auto store        = replay_seed(spec, make_seed(cfg));
  const int P = spec.period, N = spec.horizon;
  const auto sol = solve_lmpc_linear(spec, store, P, store.state(P));
  REQUIRE(sol.diag.converged);

  SUBCASE("singleton safe set appends the next recorded state")
  {
    const Vector xn = eval_dynamics(spec.dynamics, P, store.state(P), sol.inputs.front());
    store.record_step(P, sol.inputs.front(), xn, eval_stage_cost(spec.cost, P, store.state(P), sol.inputs.front()));
    const auto cand = candidate_shift(spec, sol, store, P + 1);
    REQUIRE(cand.valid);
    CHECK(cand.states.back() == store.state(P + 1 + N - P));

    const auto f = build_ftocp(spec, cand.terminal, P + 1, store.state(P + 1));
    CHECK(bound_violation(f.qp, pack(f.layout, cand.states, cand.inputs, cand.lambda)) <= 1e-8);
  }
  SUBCASE("only the next tick may shift")
  {
    CHECK_THROWS_AS(candidate_shift(spec, sol, store, P + 2), std::invalid_argument);
  }
}

TEST_CASE("controller steps never raise the open-loop cost")
{
  const auto cfg = builtin("s3_tv_cost");
  const auto log = run_closed_loop(cfg.spec, make_seed(cfg), 3);
  std::optional<double> prev;
  for (const auto & row : log.rows) {
    if (!row.lmpc_cost) { continue; }
    REQUIRE(row.candidate_cost.has_value());
    CHECK(*row.lmpc_cost <= *row.candidate_cost + 1e-9);
    if (prev) { CHECK(*row.lmpc_cost <= *prev + 1e-9); }
    prev = row.lmpc_cost;
  }
}
