#pragma once

/**
 * @file
 * @brief Scenario definitions, the four benchmark builtins, seed
 * constructors and the scenario text format.
 *
 * Scenario files are line oriented. `#` starts a comment. Matrices are written
 * `[a b; c d]` with rows separated by `;`. Ranges `<b> <e>` cover intracycle
 * times b ≤ τ < e.
 *
 *     name s3_tv_cost
 *     period 100
 *     horizon 15
 *     state_dim 2
 *     input_dim 1
 *     cycles 10
 *     seed steady_state_origin          # or: warmup_mpc | hold_state [1; 0]
 *     dynamics_builtin tv_spring        # or one dynamics_linear line per range
 *     dynamics_linear 0 100 A [1 0.1; 0 1] B [0; 0.1] c [0; 0]
 *     state_constraint 0 100 G [0 1; 0 -1] g [0.1; 0.1]
 *     input_constraint 0 100 G [1; -1] g [5; 5]
 *     cost 0 50 Q [1 0; 0 0] R [1] x_ref [-0.2; 0]   # optional q_lin, r_lin
 *
 * Every τ needs exactly one dynamics and one cost entry; constraint lines are
 * optional and at most one per τ.
 */

#include "plmpc/model.hpp"
#include "plmpc/simulation.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace plmpc {

enum class SeedKind {
  SteadyStateOrigin,
  WarmupMpc,
  /// Constant state x0 held by inputs solving f_τ(x0, u) = x0.
  HoldState,
};

struct SeedPolicy
{
  SeedKind kind = SeedKind::SteadyStateOrigin;
  Vector hold_state;
  bool operator==(const SeedPolicy & o) const;
};

struct ScenarioConfig
{
  std::string name;
  ProblemSpec spec;
  SeedPolicy seed;
  int cycles = 10;
};

/// Thrown by the scenario parser; the message starts with `source:line:`.
class ParseError : public ValidationError
{
public:
  ParseError(const std::string & source, int line, const std::string & msg);
  int line;
};

std::vector<std::string> builtin_names();

/// Throws std::invalid_argument for an unknown name.
ScenarioConfig builtin(std::string_view name);

/// Builtin dynamics generators referenced by `dynamics_builtin`.
Dynamics builtin_dynamics(std::string_view name, int period);

/// Builds and validates the seed; throws ValidationError with per-tick diagnostics.
PeriodicTrajectory make_seed(const ScenarioConfig & cfg);

ScenarioConfig parse_scenario(std::istream & is, const std::string & source = "<input>");
ScenarioConfig load_scenario(const std::filesystem::path & path);
void save_scenario(std::ostream & os, const ScenarioConfig & cfg);

/// Same name, cycles, seed policy and per-τ dynamics, constraints and costs.
bool equivalent(const ScenarioConfig & a, const ScenarioConfig & b);

/// Seed as CSV `tau,x0..,u0..` with P+1 rows; the last row has empty inputs.
void write_seed_csv(std::ostream & os, const PeriodicTrajectory & seed);
PeriodicTrajectory read_seed_csv(std::istream & is, int state_dim, int input_dim, const std::string & source = "<seed>");

}  // namespace plmpc
