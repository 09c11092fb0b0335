#pragma once

/**
 * @file
 * @brief Closed-loop simulation, periodic-convergence detection and
 * machine-checked closed-loop properties.
 */

#include "plmpc/controller.hpp"
#include "plmpc/model.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace plmpc {

/// One period of states x_0..x_P and inputs u_0..u_{P−1} with x_P = x_0.
struct PeriodicTrajectory
{
  std::vector<Vector> states;
  std::vector<Vector> inputs;
};

struct SeedValidation
{
  bool ok = false;
  double dynamics_error  = 0.0;
  double constraint_violation = 0.0;
  double wrap_error      = 0.0;
  /// One message per failing tick.
  std::vector<std::string> issues;
};

/// Checks dynamics consistency, constraint feasibility and x_P = x_0 to `tol`.
SeedValidation validate_seed(const ProblemSpec & spec, const PeriodicTrajectory & seed, double tol = 1e-8);

enum class TickStatus { Seed, Solved, Fallback };

const char * to_string(TickStatus s);

struct SimRow
{
  Tick t = 0;
  Tick cycle = 0;
  int tau = 0;
  Vector x;
  Vector u;
  double stage_cost = 0.0;
  std::optional<double> lmpc_cost;
  std::optional<double> candidate_cost;
  TickStatus status = TickStatus::Seed;
  QpStatus qp_status = QpStatus::Solved;
  int qp_iterations  = 0;
  int sqp_iterations = 0;
  double solve_ms    = 0.0;
  /// Open-loop states x*_{t|t}..x*_{t+N|t}; empty for seed ticks.
  std::vector<Vector> plan_states;
};

struct SimLog
{
  int period  = 0;
  int horizon = 0;
  std::vector<SimRow> rows;
  /// x at t = rows.size()
  Vector final_state;

  int cycles() const { return period > 0 ? static_cast<int>(rows.size()) / period : 0; }
  /// J_{t→t+P} = Σ_{k=t}^{t+P−1} h_k; requires t + P ≤ rows.size().
  double closed_loop_cost(Tick t) const;
  /// Closed-loop cost of every complete cycle.
  std::vector<double> cycle_costs() const;
  const Vector & state(Tick t) const;
};

struct SimSettings
{
  ControllerSettings controller;
  /// Seed-validation tolerance.
  double seed_tol = 1e-8;
};

/**
 * @brief Replays the seed for ticks 0..P−1, then applies the LMPC.
 *
 * Produces cycles·P rows. Throws ValidationError when the seed fails
 * validate_seed.
 */
SimLog run_closed_loop(const ProblemSpec & spec, const PeriodicTrajectory & seed, int cycles, const SimSettings & settings = {});

/**
 * @brief Smallest cycle c ≥ 1 such that every later recorded cycle satisfies
 * max_τ ‖x_t − x_{t−P}‖∞ < tol.
 */
std::optional<int> detect_periodic_convergence(const SimLog & log, double tol = 1e-4);

struct PropertyTolerances
{
  double feasibility  = 1e-6;
  double monotonicity = 1e-6;
  double period_cost  = 1e-3;
  double deviation    = 1e-4;
  double convergence  = 1e-4;
  double consistency  = 1e-9;
};

struct PropertyReport
{
  double max_violation = 0.0;
  std::optional<Tick> violation_tick;
  double max_cost_increase = 0.0;
  std::optional<Tick> increase_tick;
  int fallbacks = 0;
  /// max ‖x_{t+1} − f_t(x_t,u_t)‖∞ and |h_t − h(x_t,u_t)| over the log
  double dynamics_error   = 0.0;
  double stage_cost_error = 0.0;
  std::optional<int> converged_cycle;
  /// max |J_{t→t+P} − J^LMPC_t| for t after the converged cycle
  std::optional<double> period_cost_gap;
  /// max_k ‖x*_{t+k|t} − x_{t+k}‖∞ for t after the converged cycle
  std::optional<double> open_closed_deviation;
  bool strictly_convex = false;

  bool feasibility_ok(const PropertyTolerances & tol) const { return max_violation < tol.feasibility; }
  bool monotonicity_ok(const PropertyTolerances & tol) const { return max_cost_increase < tol.monotonicity; }
  /// Equality of open- and closed-loop cost and trajectory, only asserted for
  /// strictly convex costs that converged.
  bool performance_ok(const PropertyTolerances & tol) const;
  bool passes(const PropertyTolerances & tol) const;
};

/// Re-evaluates every quantity from the log and the spec.
PropertyReport verify_properties(const SimLog & log, const ProblemSpec & spec, const PropertyTolerances & tol = {});

struct WarmupSettings
{
  int cycles_max = 40;
  double tol     = 1e-6;
  /// Initial state; zero when empty.
  Vector x0;
  QpSettings qp;
};

/**
 * @brief Periodic seed from an MPC with no terminal ingredients.
 *
 * Runs the MPC until two consecutive cycles agree to `tol`, then re-solves the
 * last period with x_P = x_0 enforced (minimal deviation from the converged
 * inputs and states). Linear dynamics only. Throws ValidationError when no
 * periodic behaviour appears within cycles_max.
 */
PeriodicTrajectory warmup_mpc(const ProblemSpec & spec, const WarmupSettings & settings = {});

/// `t,cycle,tau,x0..,u0..,stage_cost,lmpc_cost,status,sqp_iters,solve_ms`.
/// solve_ms is left empty unless `with_timing`, keeping the file reproducible.
void write_sim_csv(std::ostream & os, const SimLog & log, bool with_timing = false);

}  // namespace plmpc
