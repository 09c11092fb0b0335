#pragma once

#include <plmpc/model.hpp>

#include <initializer_list>
#include <limits>

namespace plmpc::fixture {

inline constexpr double inf = std::numeric_limits<double>::infinity();

inline Matrix mat(std::initializer_list<std::initializer_list<double>> rows)
{
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto & row : rows) {
    Eigen::Index c = 0;
    for (double v : row) { m(r, c++) = v; }
    ++r;
  }
  return m;
}

inline Vector vec(std::initializer_list<double> v)
{
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) { out(i++) = x; }
  return out;
}

/// Double integrator with step 0.1, no constraints, h = (p − ref)² + r·u².
inline ProblemSpec double_integrator(int P, int N, double ref = 0.0, double r = 1.0)
{
  ProblemSpec s;
  s.period    = P;
  s.horizon   = N;
  s.state_dim = 2;
  s.input_dim = 1;
  LinearDynamics lin;
  lin.models.assign(P, AffineModel{mat({{1, 0.1}, {0, 1}}), mat({{0}, {0.1}}), Vector::Zero(2)});
  s.dynamics = Dynamics(lin, 2, 1);
  s.constraints.state.assign(P, Polyhedron::unconstrained(2));
  s.constraints.input.assign(P, Polyhedron::unconstrained(1));
  s.cost.terms.assign(P, QuadraticCost::tracking(mat({{1, 0}, {0, 0}}), mat({{r}}), vec({ref, 0})));
  return s;
}

}  // namespace plmpc::fixture
