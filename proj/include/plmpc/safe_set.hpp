#pragma once

/**
 * @file
 * @brief Recorded closed-loop data, sampled safe sets and the Q-function.
 *
 * The store keeps prefix sums C_i = Σ_{k<i} h_k so the return cost of any
 * recorded state, J_t(x_i) = C_t − C_i, is O(1).
 */

#include "plmpc/model.hpp"
#include "plmpc/qp.hpp"

#include <iosfwd>
#include <stdexcept>
#include <vector>

namespace plmpc {

class TrajectoryStore
{
public:
  TrajectoryStore(int period, Vector x0);

  /**
   * @brief Appends u_t, x_{t+1} and C_{t+1} = C_t + h.
   *
   * t must equal current_time(). When dynamics are supplied the step is checked
   * against x_{t+1} = f_t(x_t, u_t) to 1e-9; a mismatch is a harness bug and
   * throws std::logic_error.
   */
  void record_step(Tick t, const Vector & u, const Vector & x_next, double h, const Dynamics * dyn = nullptr);

  /// Index of the latest recorded state.
  Tick current_time() const { return static_cast<Tick>(states_.size()) - 1; }
  int period() const { return period_; }

  const Vector & state(Tick i) const { return states_.at(static_cast<std::size_t>(i)); }
  const Vector & input(Tick i) const { return inputs_.at(static_cast<std::size_t>(i)); }
  double stage_cost(Tick i) const { return cost_prefix(i + 1) - cost_prefix(i); }
  double cost_prefix(Tick i) const { return prefix_.at(static_cast<std::size_t>(i)); }

  std::size_t num_states() const { return states_.size(); }
  std::size_t num_inputs() const { return inputs_.size(); }

  /// J_t(x_i) = Σ_{k=i}^{t-1} h_k. Requires 0 ≤ i ≤ t ≤ current_time().
  double return_cost(Tick t, Tick i) const;

  /// Columns t, tau, cycle, x…, u…, h, C; the final row has empty u and h.
  void write_csv(std::ostream & os) const;

private:
  int period_;
  std::vector<Vector> states_;
  std::vector<Vector> inputs_;
  std::vector<double> prefix_;
};

/// Vertices and return costs of the sampled safe set for one slot time.
struct TerminalData
{
  Tick slot = 0;
  /// n × M, column j−1 holds x_{slot − jP}.
  Matrix vertices;
  /// return costs J_t of each vertex
  Vector costs;
  std::vector<Tick> indices;

  int size() const { return static_cast<int>(costs.size()); }
};

/// Thrown when the safe set for a slot has no recorded vertex.
class EmptySafeSetError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Thrown when a Q-function query lies outside the convex hull of the vertices.
class OutsideSafeSetError : public std::runtime_error
{
public:
  OutsideSafeSetError(const std::string & msg, double distance) : std::runtime_error(msg), distance(distance) {}
  /// Euclidean distance from the query to the convex hull.
  double distance;
};

/**
 * @brief Sampled safe set for slot k = t + N with return costs J_t.
 *
 * Collects every recorded x_{k−jP}, j ≥ 1, k − jP ≥ 0. A positive
 * `max_cycles_retained` keeps only the most recent vertices.
 */
TerminalData terminal_data(const TrajectoryStore & store, Tick t, Tick k, int max_cycles_retained = 0);

struct QValue
{
  double value = 0.0;
  Vector lambda;
};

/// min_λ Jᵀλ  s.t.  Dλ = x, 1ᵀλ = 1, λ ≥ 0.
QValue q_function(const TerminalData & td, const Vector & x, const QpSettings & settings = {});

/// Squared distance from x to conv(columns of D) and the minimizing weights.
QValue hull_distance(const Matrix & vertices, const Vector & x, const QpSettings & settings = {});

}  // namespace plmpc
