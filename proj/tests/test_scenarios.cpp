#include "fixtures.hpp"

#include <plmpc/scenarios.hpp>

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

using namespace plmpc;
using fixture::vec;

namespace {

ScenarioConfig parse(const std::string & text) {
  std::istringstream is(text);
  return parse_scenario(is, "test.cfg");
}

const char * kMinimal = R"(name tiny
period 10
horizon 3
state_dim 2
input_dim 1
cycles 4
seed steady_state_origin
dynamics_linear 0 10 A [1 0.1; 0 1] B [0; 0.1] c [0; 0]
cost 0 10 Q [1 0; 0 0] R [1] x_ref [0; 0]
)";

/// Replaces the first line starting with `key` by `line`.
std::string with_line(const std::string & key, const std::string & line) {
  std::string text = kMinimal;
  const auto at = text.find(key);
  const auto end = text.find('\n', at);
  return text.replace(at, end - at, line);
}

int parse_error_line(const std::string & text) {
  try {
    parse(text);
  } catch (const ParseError & e) {
    return e.line;
  }
  return -1;
}

}  // namespace

TEST_CASE("builtin parameters") {
  CHECK(builtin_names().size() == 4);
  CHECK_THROWS_AS(builtin("nope"), std::invalid_argument);

  const auto s1 = builtin("s1_tv_dynamics");
  CHECK(s1.spec.period == 100);
  CHECK(s1.spec.horizon == 25);
  CHECK(s1.cycles == 10);

  const auto s2 = builtin("s2_tv_constraints");
  CHECK(s2.spec.horizon == 30);
  CHECK(s2.seed.kind == SeedKind::WarmupMpc);

  const auto s3 = builtin("s3_tv_cost");
  CHECK(s3.spec.horizon == 15);
  CHECK(s3.spec.cost.terms[49].x_ref == vec({-0.2, 0}));
  CHECK(s3.spec.cost.terms[50].x_ref == vec({0.2, 0}));

  const auto s4 = builtin("s4_nonlinear");
  CHECK(s4.spec.horizon == 8);
  CHECK(s4.seed.kind == SeedKind::HoldState);
  CHECK(s4.seed.hold_state == vec({1, 0}));
  CHECK(s4.spec.cost.terms[0].R.norm() == 0.0);

  for (const auto & name : builtin_names()) { CHECK_NOTHROW(builtin(name).spec.validate()); }
}

TEST_CASE("scenario 2 position bands") {
  // band index floor(6τ/P), bounds lo ≤ p ≤ hi
  const double lo[] = {-0.4, -0.4, -0.4, -0.1, 0.2, -0.1};
  const double hi[] = {0.1, -0.2, 0.1, 0.4, 0.4, 0.4};
  const auto s2 = builtin("s2_tv_constraints");
  for (int tau = 0; tau < 100; ++tau) {
    const int band = 6 * tau / 100;
    CAPTURE(tau);
    const double eps = 1e-9;
    CHECK(check_constraints(s2.spec.constraints, tau, vec({lo[band], 0}), vec({0})).max_violation <= eps);
    CHECK(check_constraints(s2.spec.constraints, tau, vec({hi[band], 0}), vec({0})).max_violation <= eps);
    CHECK(check_constraints(s2.spec.constraints, tau, vec({lo[band] - 0.01, 0}), vec({0})).max_violation ==
          doctest::Approx(0.01));
    CHECK(check_constraints(s2.spec.constraints, tau, vec({hi[band] + 0.01, 0}), vec({0})).max_violation ==
          doctest::Approx(0.01));
  }
  CHECK(check_constraints(s2.spec.constraints, 50, vec({-0.1, 0}), vec({0})).feasible);
  CHECK_FALSE(check_constraints(s2.spec.constraints, 50, vec({-0.11, 0}), vec({0})).feasible);
}

TEST_CASE("builtin seeds") {
  SUBCASE("origin seed of scenario 1") {
    const auto cfg = builtin("s1_tv_dynamics");
    const auto seed = make_seed(cfg);
    REQUIRE(seed.states.size() == 101);
    REQUIRE(seed.inputs.size() == 100);
    double cost = 0.0;
    for (int tau = 0; tau < 100; ++tau) {
      cost += eval_stage_cost(cfg.spec.cost, tau, seed.states[tau], seed.inputs[tau]);
    }
    CHECK(cost == doctest::Approx(4.0));
  }
  SUBCASE("held state of scenario 4") {
    const auto cfg = builtin("s4_nonlinear");
    const auto seed = make_seed(cfg);
    for (const auto & x : seed.states) { CHECK((x - vec({1, 0})).cwiseAbs().maxCoeff() <= 1e-12); }
    for (int t = 0; t < 100; ++t) {
      CAPTURE(t);
      const double expect = -5.0 * std::sin(2.0 * std::numbers::pi * t / 100.0);
      CHECK(seed.inputs[t](0) == doctest::Approx(expect).epsilon(1e-9).scale(1.0));
    }
    CHECK(std::abs(seed.inputs[0](0)) <= 1e-12);
  }
  SUBCASE("all builtin seeds validate") {
    for (const auto & name : builtin_names()) {
      CAPTURE(name);
      const auto cfg = builtin(name);
      CHECK(validate_seed(cfg.spec, make_seed(cfg)).ok);
    }
  }
}

TEST_CASE("scenario files round-trip") {
  for (const auto & name : builtin_names()) {
    CAPTURE(name);
    const auto cfg = builtin(name);
    std::ostringstream os;
    save_scenario(os, cfg);
    const auto back = parse(os.str());
    CHECK(equivalent(cfg, back));

    std::ostringstream again;
    save_scenario(again, back);
    CHECK(again.str() == os.str());
  }
}

TEST_CASE("shipped scenario files match the builtins") {
  const std::filesystem::path dir = std::filesystem::path(PLMPC_SOURCE_DIR) / "scenarios";
  const std::pair<const char *, const char *> files[] = {
      {"s1_tv_dynamics", "s1_tv_dynamics.cfg"},
      {"s2_tv_constraints", "s2_tv_constraints.cfg"},
      {"s3_tv_cost", "s3_tv_cost.cfg"},
      {"s4_nonlinear", "s4_nonlinear.cfg"},
  };
  for (const auto & [name, file] : files) {
    CAPTURE(name);
    REQUIRE(std::filesystem::exists(dir / file));
    CHECK(equivalent(load_scenario(dir / file), builtin(name)));
  }
}

TEST_CASE("parser accepts a minimal file") {
  const auto cfg = parse(kMinimal);
  CHECK(cfg.name == "tiny");
  CHECK(cfg.cycles == 4);
  CHECK(cfg.spec.period == 10);
  CHECK(cfg.spec.constraints.state[7].rows() == 0);
  CHECK(equivalent(cfg, parse(std::string(kMinimal) + "# trailing comment\n\n")));
}

TEST_CASE("parser rejects invalid files with a line number") {
  SUBCASE("horizon not shorter than the period") {
    const auto text = with_line("horizon", "horizon 10");
    CHECK(parse_error_line(text) == 3);
    CHECK_THROWS_WITH_AS(parse(text), doctest::Contains("N < P"), ParseError);
  }
  SUBCASE("indefinite Q") {
    const auto text = with_line("cost", "cost 0 10 Q [1 0; 0 -1] R [1] x_ref [0; 0]");
    CHECK(parse_error_line(text) == 9);
    CHECK_THROWS_WITH_AS(parse(text), doctest::Contains("positive semidefinite"), ParseError);
  }
  SUBCASE("unknown key") { CHECK(parse_error_line(std::string(kMinimal) + "bogus 1\n") == 10); }
  SUBCASE("ragged matrix") {
    CHECK(parse_error_line(with_line("dynamics_linear", "dynamics_linear 0 10 A [1 0.1; 0] B [0; 0.1] c [0; 0]")) ==
          8);
  }
  SUBCASE("uncovered tau") {
    const auto text = with_line("cost", "cost 0 9 Q [1 0; 0 0] R [1] x_ref [0; 0]");
    CHECK_THROWS_WITH_AS(parse(text), doctest::Contains("no cost for tau 9"), ParseError);
  }
  SUBCASE("overlapping ranges") {
    const auto text = std::string(kMinimal) + "cost 5 6 Q [1 0; 0 0] R [1] x_ref [0; 0]\n";
    CHECK(parse_error_line(text) == 10);
  }
  SUBCASE("range outside the period") {
    CHECK(parse_error_line(with_line("cost", "cost 0 11 Q [1 0; 0 0] R [1] x_ref [0; 0]")) == 9);
  }
  SUBCASE("missing key") {
    std::string text = kMinimal;
    text.erase(text.find("input_dim"), std::string("input_dim 1\n").size());
    CHECK_THROWS_WITH_AS(parse(text), doctest::Contains("input_dim"), ParseError);
  }
  SUBCASE("cycles defaults to ten") {
    std::string text = kMinimal;
    text.erase(text.find("cycles"), std::string("cycles 4\n").size());
    CHECK(parse(text).cycles == 10);
  }
  SUBCASE("message carries source and line") {
    CHECK_THROWS_WITH_AS(parse(with_line("period", "period x")), doctest::Contains("test.cfg:2:"), ParseError);
  }
  SUBCASE("bad hold state") { CHECK(parse_error_line(with_line("seed", "seed hold_state [1]")) == 7); }
}

TEST_CASE("seed csv") {
  const auto cfg = builtin("s4_nonlinear");
  const auto seed = make_seed(cfg);
  std::ostringstream os;
  write_seed_csv(os, seed);
  std::istringstream is(os.str());
  const auto back = read_seed_csv(is, 2, 1);
  REQUIRE(back.states.size() == seed.states.size());
  REQUIRE(back.inputs.size() == seed.inputs.size());
  for (std::size_t i = 0; i < seed.states.size(); ++i) { CHECK(back.states[i] == seed.states[i]); }
  for (std::size_t i = 0; i < seed.inputs.size(); ++i) { CHECK(back.inputs[i] == seed.inputs[i]); }

  SUBCASE("corrupted value") {
    std::string text = os.str();
    const auto at = text.find('\n', text.find('\n') + 1) + 3;
    text.insert(at, "zz");
    std::istringstream bad(text);
    CHECK_THROWS_AS(read_seed_csv(bad, 2, 1), ParseError);
  }
  SUBCASE("wrong column count") {
    std::istringstream bad(os.str());
    CHECK_THROWS_AS(read_seed_csv(bad, 3, 1), ParseError);
  }
  SUBCASE("empty") {
    std::istringstream bad("");
    CHECK_THROWS_AS(read_seed_csv(bad, 2, 1), ParseError);
  }
}
