#pragma once

/**
 * @file
 * @brief Sparse convex QP solver (operator splitting with a polish step).
 *
 * Solves
 *
 *   min ½ zᵀHz + qᵀz   s.t.  l ≤ Az ≤ u
 *
 * with H symmetric positive semidefinite. Equality rows have l = u, one-sided
 * rows use ±infinity. Dual sign convention: y > 0 on rows active at the upper
 * bound, y < 0 at the lower bound, and Hz + q + Aᵀy = 0 at the optimum.
 */

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <iosfwd>
#include <optional>
#include <string_view>

namespace plmpc {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct QpProblem
{
  /// Full symmetric cost matrix (both triangles stored).
  SparseMatrix H;
  Eigen::VectorXd q;
  SparseMatrix A;
  Eigen::VectorXd l;
  Eigen::VectorXd u;
  /// Added to the reported objective.
  double constant = 0.0;

  Eigen::Index num_variables() const { return q.size(); }
  Eigen::Index num_constraints() const { return l.size(); }

  /// Throws std::invalid_argument on malformed data or indefinite H.
  void validate() const;
};

enum class QpStatus { Solved, MaxIter, PrimalInfeasible, DualInfeasible };

std::string_view to_string(QpStatus s);

struct QpSettings
{
  double eps_abs = 1e-8;
  double eps_rel = 1e-8;
  int max_iter   = 20000;

  /// initial penalty parameter
  double rho = 0.1;
  /// primal regularization
  double sigma = 1e-6;
  /// over-relaxation
  double alpha = 1.6;

  bool scaling      = true;
  int scaling_iter  = 10;
  bool adaptive_rho = true;

  /// iterations between termination checks
  int check_interval = 25;

  double eps_prim_inf = 1e-5;
  double eps_dual_inf = 1e-5;

  bool polish = true;
  /// ADMM residual level (relative) at which polishing is first attempted
  double polish_trigger = 1e-3;
  double polish_delta   = 1e-7;
  int polish_refine     = 12;

  /// Re-solve with a dense primal-dual interior-point method when ADMM stalls
  /// (nearly degenerate feasible sets, e.g. clustered safe-set vertices).
  bool ipm_fallback = true;
  int ipm_max_iter  = 100;
  /// Largest problem (variables + constraints) handed to the dense fallback.
  int ipm_max_dim   = 2000;
};

struct QpWarmStart
{
  Eigen::VectorXd z;
  /// May be empty.
  Eigen::VectorXd y;
};

struct QpSolution
{
  Eigen::VectorXd z;
  Eigen::VectorXd y;
  double objective = 0.0;
  QpStatus status  = QpStatus::MaxIter;
  int iterations   = 0;
  double primal_residual = 0.0;
  double dual_residual   = 0.0;
  bool polished          = false;
  /// Result comes from the interior-point fallback.
  bool interior_point    = false;
};

QpSolution solve_qp(const QpProblem & p, const QpSettings & settings = {}, const QpWarmStart * warm = nullptr);

/// min cᵀz s.t. l ≤ Az ≤ u. Degenerate optimal faces return any optimizer.
QpSolution solve_lp(
  const Eigen::VectorXd & c,
  const SparseMatrix & A,
  const Eigen::VectorXd & l,
  const Eigen::VectorXd & u,
  const QpSettings & settings = {});

struct KktResiduals
{
  /// ‖Az − Π[l,u](Az)‖∞
  double primal = 0.0;
  /// ‖Hz + q + Aᵀy‖∞
  double dual = 0.0;
  /// max_i |y_i| × distance of (Az)_i to the bound its sign selects
  double complementarity = 0.0;
};

/// Recomputes residuals of (s.z, s.y) from the problem data alone.
KktResiduals kkt_residuals(const QpProblem & p, const QpSolution & s);

/**
 * @brief Text dump for offline debugging.
 *
 * Format (version 1): a `plmpc-qp 1` header line, a `dims <m> <p>` line, then
 * sections `H <nnz>` and `A <nnz>` with one `row col value` triplet per line,
 * and `q`, `l`, `u` lines holding whitespace-separated values (`inf`/`-inf`
 * allowed), and finally `constant <value>`.
 */
void write_problem(std::ostream & os, const QpProblem & p);
QpProblem read_problem(std::istream & is);

}  // namespace plmpc
