#pragma once

/**
 * @file
 * @brief Learning MPC: finite-time optimal control problem with the convex
 * safe set as terminal constraint and the Q-function as terminal cost.
 */

#include "plmpc/model.hpp"
#include "plmpc/qp.hpp"
#include "plmpc/safe_set.hpp"

#include <optional>
#include <span>
#include <vector>

namespace plmpc {

/// Position of each block in the stacked decision vector [x_0..x_N, u_0..u_{N-1}, λ].
struct FtocpLayout
{
  int n = 0, d = 0, N = 0, M = 0;

  Eigen::Index x(int k) const { return static_cast<Eigen::Index>(k) * n; }
  Eigen::Index u(int k) const { return static_cast<Eigen::Index>(N + 1) * n + static_cast<Eigen::Index>(k) * d; }
  Eigen::Index lambda(int j) const { return static_cast<Eigen::Index>(N + 1) * n + static_cast<Eigen::Index>(N) * d + j; }
  Eigen::Index size() const { return lambda(M); }

  /// Row offset of the dynamics equalities x_{k+1} − A x_k − B u_k = c.
  Eigen::Index dynamics_row(int k) const { return n + static_cast<Eigen::Index>(k) * n; }
};

struct FtocpQp
{
  QpProblem qp;
  FtocpLayout layout;
};

/**
 * @brief Stacks the FTOCP at time t as a sparse QP.
 *
 * `models[k]` is the affine model used for step t+k. Encodes the initial
 * condition, dynamics, 𝒰 on every step, 𝒳 on steps 1..N−1, x_N = Dλ with λ on
 * the simplex, and objective Σ h_{t+k} + Jᵀλ. The measured state is pinned, so
 * 𝒳_t is only checked by the caller.
 */
FtocpQp build_ftocp(const ProblemSpec & spec, const TerminalData & td, Tick t, const Vector & x_t,
  std::span<const AffineModel> models);

/// Same with the LTV models of the spec.
FtocpQp build_ftocp(const ProblemSpec & spec, const TerminalData & td, Tick t, const Vector & x_t);

struct SolveDiagnostics
{
  QpStatus qp_status  = QpStatus::MaxIter;
  int qp_iterations   = 0;
  int sqp_iterations  = 0;
  bool converged      = false;
  /// max ‖x_{k+1} − f(x_k,u_k)‖∞ of the returned plan
  double dynamics_residual = 0.0;
  /// ‖x_N − Dλ‖∞
  double terminal_residual = 0.0;
};

struct FtocpSolution
{
  Tick t = 0;
  std::vector<Vector> states;
  std::vector<Vector> inputs;
  Vector lambda;
  TerminalData terminal;
  /// Σ h_k(x*,u*) + Jᵀλ*
  double cost = 0.0;
  SolveDiagnostics diag;
};

/// Feasible plan for time t built from the plan at t−1 plus one safe-set step.
struct CandidateTrajectory
{
  Tick t = 0;
  std::vector<Vector> states;
  std::vector<Vector> inputs;
  /// Aligned with terminal_data(store, t, t+N).
  Vector lambda;
  TerminalData terminal;
  /// False when the dynamics has no convex-combination witness.
  bool valid = false;
};

struct SqpSettings
{
  int max_iter       = 30;
  double step_tol    = 1e-7;
  double dyn_tol     = 1e-8;
  /// Step size below which a failed line search counts as converged.
  double stall_tol   = 1e-5;
  double backtrack   = 0.5;
  double armijo      = 1e-4;
  int max_backtracks = 40;
};

struct ControllerSettings
{
  QpSettings qp;
  SqpSettings sqp;
  /// Zero keeps every past cycle in the safe set.
  int max_cycles_retained = 0;
};

/// Σ_{k} h_{t+k}(x_k, u_k) + Jᵀλ.
double plan_cost(const ProblemSpec & spec, const TerminalData & td, Tick t, std::span<const Vector> states,
  std::span<const Vector> inputs, const Vector & lambda);

FtocpSolution solve_lmpc_linear(const ProblemSpec & spec, const TrajectoryStore & store, Tick t, const Vector & x_t,
  const CandidateTrajectory * warm = nullptr, const ControllerSettings & settings = {});

/// SQP over the QP solver with an ℓ1 merit function and backtracking line search.
FtocpSolution solve_lmpc_nonlinear(const ProblemSpec & spec, const TrajectoryStore & store, Tick t, const Vector & x_t,
  const CandidateTrajectory * warm = nullptr, const ControllerSettings & settings = {});

/**
 * @brief Shifted candidate for time t_next = prev.t + 1.
 *
 * States [x*_{1..N}, Σλ_j x_{i_j+1}], inputs [u*_{1..N−1}, Σγ_j u_{i_j}] where
 * i_j are the terminal vertices of prev; γ = λ for linear dynamics and the
 * registered witness otherwise. Requires x_{t_next} to be recorded.
 */
CandidateTrajectory candidate_shift(const ProblemSpec & spec, const FtocpSolution & prev, const TrajectoryStore & store,
  Tick t_next, int max_cycles_retained = 0);

/// Replays the previous cycle: states x_{t−P..t−P+N}, λ on the newest vertex.
CandidateTrajectory replay_candidate(const ProblemSpec & spec, const TrajectoryStore & store, Tick t,
  int max_cycles_retained = 0);

/// Evaluates a candidate as a plan (for fallback and dominance checks).
FtocpSolution candidate_as_solution(const ProblemSpec & spec, const CandidateTrajectory & cand);

class LmpcController
{
public:
  struct Step
  {
    Vector u;
    FtocpSolution plan;
    bool fallback   = false;
    double solve_ms = 0.0;
    /// Cost of the shifted candidate the solve was compared against.
    std::optional<double> candidate_cost;
  };

  LmpcController(ProblemSpec spec, ControllerSettings settings = {});

  /// Solves the FTOCP at t (t ≥ P); store must hold x_0..x_t.
  Step step(const TrajectoryStore & store, Tick t, const Vector & x_t);

  const ProblemSpec & spec() const { return spec_; }

private:
  ProblemSpec spec_;
  ControllerSettings settings_;
  std::optional<FtocpSolution> prev_;
};

}  // namespace plmpc
