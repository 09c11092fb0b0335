#pragma once

/**
 * @file
 * @brief `plmpc` command-line interface: run, check, export-figures-data.
 *
 * Exit codes: 0 success, 1 property or seed violation, 2 usage or
 * configuration error.
 */

#include "plmpc/scenarios.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace plmpc::cli {

inline constexpr int kExitOk        = 0;
inline constexpr int kExitViolation = 1;
inline constexpr int kExitUsage     = 2;

/// Overrides the default output root `runs/` when --out is not given.
inline constexpr const char * kOutDirEnv = "PLMPC_OUT_DIR";

struct RunOptions
{
  std::vector<std::string> scenarios;
  std::optional<int> cycles;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> seed_override;
  bool record_timing = false;
  int jobs           = 1;
};

/// Builtin name or scenario file path.
ScenarioConfig resolve_scenario(const std::string & name_or_path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 14695981039346656037ULL);

/// Hash over the serialized scenario, cycle count, seed and controller settings.
std::string settings_hash(const ScenarioConfig & cfg, int cycles, const PeriodicTrajectory & seed, const SimSettings & sim);

int cmd_run(const RunOptions & opt, std::ostream & out, std::ostream & err);
int cmd_check(const RunOptions & opt, std::ostream & out, std::ostream & err);
int cmd_export_figures_data(const std::filesystem::path & run_dir, const std::optional<std::filesystem::path> & out_dir,
  std::ostream & out, std::ostream & err);

/// Parses argv and dispatches; never throws.
int run_main(int argc, const char * const * argv, std::ostream & out, std::ostream & err);

}  // namespace plmpc::cli
