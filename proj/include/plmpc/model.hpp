#pragma once

/**
 * @file
 * @brief Periodic control problem: dynamics, constraints, stage costs and
 * the tick arithmetic that ties them to a period.
 */

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace plmpc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Absolute discrete time index.
using Tick = std::int64_t;

/// Thrown when vector or matrix sizes disagree with the problem dimensions.
class DimensionError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a problem, trajectory or file violates a structural invariant.
class ValidationError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

struct CycleTime
{
  Tick cycle;
  int tau;

  bool operator==(const CycleTime &) const = default;
};

/// Splits t into the completed-cycle count and the position inside the cycle.
CycleTime intracycle(Tick t, int period);

/// x⁺ = A x + B u + c
struct AffineModel
{
  Matrix A;
  Matrix B;
  Vector c;

  Vector apply(const Vector & x, const Vector & u) const { return A * x + B * u + c; }
};

/**
 * @brief Builds input multipliers γ for a convex combination of recorded
 * state/input pairs so that f(Σλx, Σγu) = Σλ f(x,u).
 *
 * Arguments are the intracycle time, the recorded states as columns and the
 * state multipliers λ.
 */
using GammaConstructor = std::function<Vector(int tau, const Matrix & states, const Vector & lambda)>;

struct LinearDynamics
{
  /// One affine model per intracycle time.
  std::vector<AffineModel> models;
};

struct NonlinearDynamics
{
  std::function<Vector(int tau, const Vector & x, const Vector & u)> map;
  /// Optional analytic Jacobians (∂f/∂x, ∂f/∂u). Central differences otherwise.
  std::function<std::pair<Matrix, Matrix>(int tau, const Vector & x, const Vector & u)> jacobian;
  /// Optional convex-combination witness; without it shifted candidates carry no
  /// feasibility guarantee.
  GammaConstructor gamma;
};

class Dynamics
{
public:
  Dynamics() = default;
  Dynamics(LinearDynamics lin, int state_dim, int input_dim, std::string builtin = {});
  Dynamics(NonlinearDynamics nl, int period, int state_dim, int input_dim, std::string builtin = {});

  bool is_linear() const { return std::holds_alternative<LinearDynamics>(impl_); }
  const LinearDynamics & linear() const { return std::get<LinearDynamics>(impl_); }
  const NonlinearDynamics & nonlinear() const { return std::get<NonlinearDynamics>(impl_); }

  int period() const { return period_; }
  int state_dim() const { return n_; }
  int input_dim() const { return d_; }

  /// Name of the builtin generator, empty for explicitly given matrices.
  const std::string & builtin_name() const { return builtin_; }

private:
  std::variant<LinearDynamics, NonlinearDynamics> impl_;
  int period_ = 0;
  int n_      = 0;
  int d_      = 0;
  std::string builtin_;
};

/// {z : G z ≤ g}; zero rows means unconstrained.
struct Polyhedron
{
  Matrix G;
  Vector g;

  static Polyhedron unconstrained(int dim) { return {Matrix(0, dim), Vector(0)}; }
  /// Axis-aligned box; infinite entries drop the corresponding row.
  static Polyhedron box(const Vector & lower, const Vector & upper);

  int dim() const { return static_cast<int>(G.cols()); }
  int rows() const { return static_cast<int>(G.rows()); }
  bool operator==(const Polyhedron & o) const;
};

struct ConstraintSchedule
{
  std::vector<Polyhedron> state;
  std::vector<Polyhedron> input;
};

/// h(x,u) = (x − x_ref)ᵀQ(x − x_ref) + uᵀRu + q_linᵀx + r_linᵀu
struct QuadraticCost
{
  Matrix Q;
  Matrix R;
  Vector x_ref;
  Vector q_lin;
  Vector r_lin;

  static QuadraticCost tracking(Matrix Q, Matrix R, Vector x_ref);

  double operator()(const Vector & x, const Vector & u) const;
  bool operator==(const QuadraticCost & o) const;
};

struct StageCostSchedule
{
  std::vector<QuadraticCost> terms;

  /// Some R(τ) or r_lin(τ) is nonzero.
  bool input_dependent() const;
  /// R(τ) ≻ 0 and Q(τ) ≠ 0 for every τ: the cost penalizes both the input and
  /// the state, which makes the FTOCP trajectory unique for LTV dynamics.
  bool strictly_convex() const;
};

struct ProblemSpec
{
  int period  = 0;
  int horizon = 0;
  int state_dim = 0;
  int input_dim = 0;
  Dynamics dynamics;
  ConstraintSchedule constraints;
  StageCostSchedule cost;

  /// Throws ValidationError naming the violated rule.
  void validate() const;
};

Vector eval_dynamics(const Dynamics & dyn, Tick t, const Vector & x, const Vector & u);

double eval_stage_cost(const StageCostSchedule & cost, Tick t, const Vector & x, const Vector & u);

struct ConstraintReport
{
  /// G x − g per state row (positive = violated).
  Vector state_margin;
  /// G u − g per input row.
  Vector input_margin;
  /// Largest positive margin over all rows, 0 when strictly inside.
  double max_violation = 0.0;
  bool feasible        = true;
};

ConstraintReport check_constraints(
  const ConstraintSchedule & cs, Tick t, const Vector & x, const Vector & u, double tol = 1e-9);

/**
 * @brief First-order model of the dynamics around (x̄, ū) at time t.
 *
 * Returns A, B and the offset c such that f(x,u) ≈ A x + B u + c. Exact for
 * linear dynamics. Uses central differences with relative step 1e-6 when no
 * analytic Jacobian is registered.
 */
AffineModel linearize_dynamics(const Dynamics & dyn, Tick t, const Vector & xbar, const Vector & ubar);

}  // namespace plmpc
