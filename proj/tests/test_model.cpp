#include "fixtures.hpp"

#include <plmpc/scenarios.hpp>

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace plmpc;
using fixture::mat;
using fixture::vec;

TEST_CASE("intracycle splits ticks into cycle and tau")
{
  CHECK(intracycle(0, 100) == CycleTime{0, 0});
  CHECK(intracycle(304, 100) == CycleTime{3, 4});
  CHECK(intracycle(3 * 6 + 1, 6) == CycleTime{3, 1});
  CHECK(intracycle(99, 100) == CycleTime{0, 99});
  CHECK(intracycle(100, 100) == CycleTime{1, 0});
}

TEST_CASE("dynamics evaluation")
{
  SUBCASE("identity LTV")
  {
    LinearDynamics lin;
    lin.models.assign(3, AffineModel{Matrix::Identity(2, 2), Matrix::Zero(2, 1), Vector::Zero(2)});
    const Dynamics dyn(lin, 2, 1);
    CHECK(eval_dynamics(dyn, 1, vec({1, 2}), vec({5})) == vec({1, 2}));
  }
  SUBCASE("scenario 1 at t = 0")
  {
    const auto s1 = builtin("s1_tv_dynamics");
    const Vector x = eval_dynamics(s1.spec.dynamics, 0, vec({0.1, 0}), vec({0}));
    CHECK(x(0) == doctest::Approx(0.1));
    CHECK(x(1) == doctest::Approx(0.01));
  }
  SUBCASE("scenario 4 at t = 0")
  {
    const auto s4 = builtin("s4_nonlinear");
    const Vector x = eval_dynamics(s4.spec.dynamics, 0, vec({1, 0}), vec({0}));
    CHECK(x(0) == doctest::Approx(1.0));
    CHECK(x(1) == doctest::Approx(0.0));
  }
  SUBCASE("evaluation is P-periodic")
  {
    const auto s1 = builtin("s1_tv_dynamics");
    const Vector x = vec({0.13, -0.07}), u = vec({0.2});
    for (Tick t : {0, 17, 63}) {
      CHECK(eval_dynamics(s1.spec.dynamics, t, x, u) == eval_dynamics(s1.spec.dynamics, t + 100, x, u));
      CHECK(eval_dynamics(s1.spec.dynamics, t, x, u) == eval_dynamics(s1.spec.dynamics, t + 700, x, u));
    }
  }
  SUBCASE("dimension mismatch")
  {
    const auto s1 = builtin("s1_tv_dynamics");
    CHECK_THROWS_AS(eval_dynamics(s1.spec.dynamics, 0, vec({1}), vec({0})), DimensionError);
  }
}

TEST_CASE("stage costs")
{
  const auto s1 = builtin("s1_tv_dynamics");
  CHECK(eval_stage_cost(s1.spec.cost, 0, vec({0.2, 5.0}), vec({0})) == doctest::Approx(0.0));
  CHECK(eval_stage_cost(s1.spec.cost, 0, vec({0, 0}), vec({0})) == doctest::Approx(0.04));
  CHECK(eval_stage_cost(s1.spec.cost, 0, vec({0, 0}), vec({0.5})) == doctest::Approx(0.29));

  const auto s3 = builtin("s3_tv_cost");
  CHECK(eval_stage_cost(s3.spec.cost, 50, vec({0, 0}), vec({0})) == doctest::Approx(0.04));
  CHECK(eval_stage_cost(s3.spec.cost, 10, vec({-0.2, 0}), vec({0})) == doctest::Approx(0.0));
  CHECK(eval_stage_cost(s3.spec.cost, 60, vec({0.2, 0}), vec({0})) == doctest::Approx(0.0));

  QuadraticCost h = QuadraticCost::tracking(mat({{2, 0}, {0, 1}}), mat({{3}}), vec({1, 0}));
  h.q_lin = vec({1, -1});
  h.r_lin = vec({2});
  // 2·(0)² + 1·2² + 3·1 + (1·1 − 1·2) + 2·1
  CHECK(h(vec({1, 2}), vec({1})) == doctest::Approx(4 + 3 - 1 + 2));
}

TEST_CASE("constraint reports")
{
  const auto s1 = builtin("s1_tv_dynamics");
  auto rep      = check_constraints(s1.spec.constraints, 0, vec({0.31, 0}), vec({0}));
  CHECK_FALSE(rep.feasible);
  CHECK(rep.max_violation == doctest::Approx(0.01));

  rep = check_constraints(s1.spec.constraints, 0, vec({0.1, 0}), vec({0}));
  CHECK(rep.feasible);
  CHECK(rep.max_violation == 0.0);
  CHECK(rep.state_margin.maxCoeff() < 0.0);

  const auto s2 = builtin("s2_tv_constraints");
  rep           = check_constraints(s2.spec.constraints, 17, vec({0, 0}), vec({0}));
  CHECK(rep.max_violation == doctest::Approx(0.2));
}

TEST_CASE("linearization")
{
  SUBCASE("LTV returns its own model")
  {
    const auto s1 = builtin("s1_tv_dynamics");
    const auto m  = linearize_dynamics(s1.spec.dynamics, 30, vec({0.3, 1}), vec({2}));
    const auto & ref = s1.spec.dynamics.linear().models[30];
    CHECK(m.A == ref.A);
    CHECK(m.B == ref.B);
    CHECK(m.c == ref.c);
  }
  SUBCASE("scenario 4 input sensitivity")
  {
    const auto s4 = builtin("s4_nonlinear");
    const auto m  = linearize_dynamics(s4.spec.dynamics, 0, vec({1, 0}), vec({0}));
    CHECK(m.B(1, 0) == doctest::Approx(0.1));
    CHECK(m.B(0, 0) == doctest::Approx(0.0));
  }
  SUBCASE("analytic Jacobian matches central differences")
  {
    const auto s4 = builtin("s4_nonlinear");
    NonlinearDynamics nl = s4.spec.dynamics.nonlinear();
    nl.jacobian          = nullptr;
    const Dynamics numeric(nl, 100, 2, 1);

    std::mt19937 gen(3);
    std::uniform_real_distribution<double> ud(-2.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
      const Vector x = vec({ud(gen), ud(gen)}), u = vec({ud(gen)});
      const Tick t   = trial * 7;
      const auto a   = linearize_dynamics(s4.spec.dynamics, t, x, u);
      const auto b   = linearize_dynamics(numeric, t, x, u);
      CHECK((a.A - b.A).cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + a.A.cwiseAbs().maxCoeff()));
      CHECK((a.B - b.B).cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + a.B.cwiseAbs().maxCoeff()));
      // the affine offset reproduces f at the linearization point
      CHECK((a.apply(x, u) - eval_dynamics(s4.spec.dynamics, t, x, u)).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("problem definition validation")
{
  CHECK_NOTHROW(fixture::double_integrator(10, 3).validate());

  SUBCASE("horizon must be shorter than the period")
  {
    auto s = fixture::double_integrator(10, 10);
    CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("N < P"), ValidationError);
  }
  SUBCASE("schedules need P entries")
  {
    auto s = fixture::double_integrator(10, 3);
    s.cost.terms.pop_back();
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = fixture::double_integrator(10, 3);
    s.constraints.state.pop_back();
    CHECK_THROWS_AS(s.validate(), ValidationError);
  }
  SUBCASE("indefinite Q")
  {
    auto s          = fixture::double_integrator(10, 3);
    s.cost.terms[4].Q = mat({{1, 0}, {0, -1}});
    CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("positive semidefinite"), ValidationError);
  }
  SUBCASE("empty polyhedron")
  {
    auto s                  = fixture::double_integrator(10, 3);
    s.constraints.state[2] = Polyhedron::box(vec({1, -fixture::inf}), vec({0, fixture::inf}));
    CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("empty"), ValidationError);
  }
  SUBCASE("nonlinear dynamics with input cost")
  {
    auto s            = builtin("s4_nonlinear").spec;
    s.cost.terms[0].R = mat({{1}});
    CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("R = 0"), ValidationError);
  }
}

TEST_CASE("strict convexity flag")
{
  CHECK(builtin("s1_tv_dynamics").spec.cost.strictly_convex());
  CHECK(builtin("s3_tv_cost").spec.cost.strictly_convex());
  CHECK_FALSE(builtin("s2_tv_constraints").spec.cost.strictly_convex());
  CHECK_FALSE(builtin("s4_nonlinear").spec.cost.strictly_convex());
  CHECK_FALSE(builtin("s4_nonlinear").spec.cost.input_dependent());
}
