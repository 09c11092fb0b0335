#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

namespace plmpc::cli {

namespace fs = std::filesystem;
using json   = nlohmann::ordered_json;

namespace {

std::string num(double v)
{
  char buf[32];
  for (int prec = 15; prec < 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) { return buf; }
  }
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json opt_json(const std::optional<double> & v) { return v ? json(*v) : json(nullptr); }
json opt_json(const std::optional<int> & v) { return v ? json(*v) : json(nullptr); }

void write_atomic(const fs::path & path, const std::string & text)
{
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) { throw std::runtime_error("cannot write " + tmp.string()); }
    os << text;
    if (!os.flush()) { throw std::runtime_error("write failed: " + tmp.string()); }
  }
  fs::rename(tmp, path);
}

/// Failure kinds mapped onto the exit-code contract.
struct Failure
{
  int code;
  std::string kind;
  std::string message;
};

json report_json(const PropertyReport & r, const PropertyTolerances & tol)
{
  json j;
  j["max_violation"]         = r.max_violation;
  j["violation_tick"]        = r.violation_tick ? json(*r.violation_tick) : json(nullptr);
  j["max_cost_increase"]     = r.max_cost_increase;
  j["increase_tick"]         = r.increase_tick ? json(*r.increase_tick) : json(nullptr);
  j["fallbacks"]             = r.fallbacks;
  j["dynamics_error"]        = r.dynamics_error;
  j["stage_cost_error"]      = r.stage_cost_error;
  j["converged_cycle"]       = opt_json(r.converged_cycle);
  j["period_cost_gap"]       = opt_json(r.period_cost_gap);
  j["open_closed_deviation"] = opt_json(r.open_closed_deviation);
  j["strictly_convex"]       = r.strictly_convex;
  j["feasibility_ok"]        = r.feasibility_ok(tol);
  j["monotonicity_ok"]       = r.monotonicity_ok(tol);
  j["performance_ok"]        = r.performance_ok(tol);
  j["passes"]                = r.passes(tol);
  return j;
}

json tolerances_json(const PropertyTolerances & t)
{
  return json{{"feasibility", t.feasibility},   {"monotonicity", t.monotonicity}, {"period_cost", t.period_cost},
              {"deviation", t.deviation},       {"convergence", t.convergence},   {"consistency", t.consistency}};
}

struct Prepared
{
  ScenarioConfig cfg;
  std::string source;
  int cycles = 10;
  PeriodicTrajectory seed;
};

/// Loads the scenario and seed; throws Failure.
Prepared prepare(const std::string & scenario, const RunOptions & opt)
{
  Prepared p;
  try {
    p.cfg    = resolve_scenario(scenario);
    p.source = fs::exists(scenario) ? scenario : "builtin:" + scenario;
  } catch (const std::exception & e) {
    throw Failure{kExitUsage, "config", e.what()};
  }
  p.cycles = opt.cycles.value_or(p.cfg.cycles);
  if (p.cycles < 2) { throw Failure{kExitUsage, "usage", "--cycles must be at least 2"}; }

  if (opt.seed_override) {
    std::ifstream is(*opt.seed_override);
    if (!is) { throw Failure{kExitUsage, "config", "cannot open seed file " + opt.seed_override->string()}; }
    try {
      p.seed = read_seed_csv(is, p.cfg.spec.state_dim, p.cfg.spec.input_dim, opt.seed_override->string());
    } catch (const std::exception & e) {
      throw Failure{kExitUsage, "config", e.what()};
    }
    const auto v = validate_seed(p.cfg.spec, p.seed);
    if (!v.ok) {
      std::ostringstream os;
      os << "seed fails validation:";
      for (const auto & m : v.issues) { os << "\n  " << m; }
      throw Failure{kExitViolation, "seed_validation", os.str()};
    }
  } else {
    try {
      p.seed = make_seed(p.cfg);
    } catch (const ValidationError & e) {
      throw Failure{kExitViolation, "seed_validation", e.what()};
    } catch (const std::exception & e) {
      throw Failure{kExitUsage, "config", e.what()};
    }
  }
  return p;
}

SimLog simulate(const Prepared & p, const SimSettings & sim)
{
  try {
    return run_closed_loop(p.cfg.spec, p.seed, p.cycles, sim);
  } catch (const ValidationError & e) {
    throw Failure{kExitViolation, "seed_validation", e.what()};
  } catch (const std::exception & e) {
    throw Failure{kExitViolation, "controller", e.what()};
  }
}

fs::path output_dir(const RunOptions & opt, const std::string & name, bool many)
{
  fs::path root;
  if (opt.out) {
    root = *opt.out;
  } else if (const char * env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') {
    root = env;
  } else {
    root = "runs";
  }
  return (opt.out && !many) ? root : root / name;
}

std::string scenario_stem(const std::string & scenario)
{
  const fs::path p(scenario);
  return p.has_extension() || p.has_parent_path() ? p.stem().string() : scenario;
}

int run_one(const std::string & scenario, const RunOptions & opt, bool many, std::ostream & out, std::ostream & err)
{
  const fs::path dir = output_dir(opt, scenario_stem(scenario), many);
  json manifest;
  manifest["scenario"]      = scenario;
  manifest["source"]        = nullptr;
  manifest["settings_hash"] = nullptr;
  manifest["outputs"]       = json::array();

  auto fail = [&](const Failure & f) {
    err << "error: " << f.message << '\n';
    manifest["exit_status"] = f.code;
    manifest["error"]       = json{{"kind", f.kind}, {"message", f.message}};
    try {
      fs::create_directories(dir);
      write_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
    } catch (const std::exception & e) {
      err << "error: " << e.what() << '\n';
    }
    return f.code;
  };

  try {
    const auto p = prepare(scenario, opt);
    const SimSettings sim;
    manifest["scenario"]      = p.cfg.name;
    manifest["source"]        = p.source;
    manifest["cycles"]        = p.cycles;
    manifest["settings_hash"] = settings_hash(p.cfg, p.cycles, p.seed, sim);

    const auto log = simulate(p, sim);
    const PropertyTolerances tol;
    const auto rep = verify_properties(log, p.cfg.spec, tol);

    try {
      fs::create_directories(dir);
      std::ostringstream csv;
      write_sim_csv(csv, log, opt.record_timing);
      write_atomic(dir / "trajectory.csv", csv.str());

      std::ostringstream cfg;
      save_scenario(cfg, p.cfg);
      write_atomic(dir / "scenario.cfg", cfg.str());

      json summary;
      summary["scenario"]        = p.cfg.name;
      summary["cycles"]          = p.cycles;
      summary["period"]          = log.period;
      summary["horizon"]         = log.horizon;
      summary["ticks"]           = log.rows.size();
      summary["converged_cycle"] = opt_json(rep.converged_cycle);
      summary["cycle_costs"]     = log.cycle_costs();
      summary["tolerances"]      = tolerances_json(tol);
      summary["properties"]      = report_json(rep, tol);
      write_atomic(dir / "summary.json", summary.dump(2) + "\n");
    } catch (const std::exception & e) {
      throw Failure{kExitUsage, "io", e.what()};
    }

    const bool ok              = rep.passes(tol);
    const int code             = ok ? kExitOk : kExitViolation;
    manifest["outputs"]        = {"trajectory.csv", "summary.json", "scenario.cfg"};
    manifest["exit_status"]    = code;
    manifest["properties"]     = json{{"feasibility_ok", rep.feasibility_ok(tol)},
                                      {"monotonicity_ok", rep.monotonicity_ok(tol)},
                                      {"performance_ok", rep.performance_ok(tol)},
                                      {"passes", ok}};
    manifest["error"]          = ok ? json(nullptr) : json{{"kind", "property_violation"}, {"message", "property report has violations"}};
    write_atomic(dir / "manifest.json", manifest.dump(2) + "\n");

    out << p.cfg.name << ": " << log.rows.size() << " ticks, " << rep.fallbacks << " fallbacks, converged cycle "
        << (rep.converged_cycle ? std::to_string(*rep.converged_cycle) : "-") << ", " << (ok ? "ok" : "VIOLATION") << " -> "
        << dir.string() << '\n';
    return code;
  } catch (const Failure & f) {
    return fail(f);
  } catch (const std::exception & e) {
    return fail({kExitUsage, "io", e.what()});
  }
}

void print_check_table(std::ostream & out, const PropertyReport & r, const PropertyTolerances & tol)
{
  auto row = [&](const std::string & name, const std::string & value, const std::string & limit, const std::string & status) {
    out << std::left << std::setw(26) << name << std::setw(24) << value << std::setw(12) << limit << status << '\n';
  };
  auto fmt = [](double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
  };
  auto ok = [](bool b) { return std::string(b ? "ok" : "FAIL"); };
  row("property", "value", "tolerance", "status");
  row("max_violation", fmt(r.max_violation), fmt(tol.feasibility), ok(r.feasibility_ok(tol)));
  row("max_cost_increase", fmt(r.max_cost_increase), fmt(tol.monotonicity), ok(r.monotonicity_ok(tol)));
  row("dynamics_error", fmt(r.dynamics_error), fmt(tol.consistency), ok(r.dynamics_error <= tol.consistency));
  row("stage_cost_error", fmt(r.stage_cost_error), fmt(tol.consistency), ok(r.stage_cost_error <= tol.consistency));
  const bool assert_perf = r.strictly_convex && r.converged_cycle;
  row("period_cost_gap", r.period_cost_gap ? fmt(*r.period_cost_gap) : "-", fmt(tol.period_cost),
    assert_perf ? ok(r.period_cost_gap.value_or(0.0) <= tol.period_cost) : "skipped");
  row("open_closed_deviation", r.open_closed_deviation ? fmt(*r.open_closed_deviation) : "-", fmt(tol.deviation),
    assert_perf ? ok(r.open_closed_deviation.value_or(0.0) <= tol.deviation) : "skipped");
  row("converged_cycle", r.converged_cycle ? std::to_string(*r.converged_cycle) : "-", fmt(tol.convergence), "info");
  row("fallbacks", std::to_string(r.fallbacks), "-", "info");
}

int check_one(const std::string & scenario, const RunOptions & opt, std::ostream & out, std::ostream & err)
{
  try {
    const auto p   = prepare(scenario, opt);
    const auto log = simulate(p, SimSettings{});
    const PropertyTolerances tol;
    const auto rep = verify_properties(log, p.cfg.spec, tol);
    out << p.cfg.name << " (" << p.cycles << " cycles)\n";
    print_check_table(out, rep, tol);
    return rep.passes(tol) ? kExitOk : kExitViolation;
  } catch (const Failure & f) {
    err << "error: " << f.message << '\n';
    return f.code;
  }
}

/// Runs `fn` over every scenario with up to `jobs` threads; output is emitted in input order.
template <class Fn>
int for_each_scenario(const RunOptions & opt, std::ostream & out, std::ostream & err, Fn fn)
{
  const std::size_t n = opt.scenarios.size();
  std::vector<std::ostringstream> outs(n), errs(n);
  std::vector<int> codes(n, kExitOk);
  const std::size_t jobs = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(opt.jobs, 1)), 1, std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) { codes[i] = fn(opt.scenarios[i], outs[i], errs[i]); }
  };
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < jobs; ++k) { pool.emplace_back(worker); }
  worker();
  for (auto & th : pool) { th.join(); }
  int code = kExitOk;
  for (std::size_t i = 0; i < n; ++i) {
    out << outs[i].str();
    err << errs[i].str();
    code = std::max(code, codes[i]);
  }
  return code;
}

std::vector<std::string> split_csv(const std::string & line)
{
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) { cells.push_back(cell); }
  if (!line.empty() && line.back() == ',') { cells.emplace_back(); }
  return cells;
}

/// Per-component bounds implied by the single-variable rows of a polyhedron.
std::pair<Vector, Vector> axis_bounds(const Polyhedron & poly, int dim)
{
  constexpr double inf = std::numeric_limits<double>::infinity();
  Vector lo = Vector::Constant(dim, -inf), hi = Vector::Constant(dim, inf);
  for (int r = 0; r < poly.rows(); ++r) {
    int idx = -1, count = 0;
    for (int c = 0; c < dim; ++c) {
      if (poly.G(r, c) != 0.0) {
        idx = c;
        ++count;
      }
    }
    if (count != 1) { continue; }
    const double b = poly.g(r) / poly.G(r, idx);
    if (poly.G(r, idx) > 0.0) {
      hi(idx) = std::min(hi(idx), b);
    } else {
      lo(idx) = std::max(lo(idx), b);
    }
  }
  return {lo, hi};
}

std::string bound_cell(double v) { return std::isfinite(v) ? num(v) : std::string{}; }

}  // namespace

ScenarioConfig resolve_scenario(const std::string & name_or_path)
{
  const auto names = builtin_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) { return builtin(name_or_path); }
  if (!fs::exists(name_or_path)) {
    throw std::invalid_argument("'" + name_or_path + "' is neither a builtin scenario nor an existing file");
  }
  return load_scenario(name_or_path);
}

std::uint64_t fnv1a(std::string_view data, std::uint64_t h)
{
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string settings_hash(const ScenarioConfig & cfg, int cycles, const PeriodicTrajectory & seed, const SimSettings & sim)
{
  std::ostringstream os;
  save_scenario(os, cfg);
  os << "cycles " << cycles << '\n';
  write_seed_csv(os, seed);
  const auto & q = sim.controller.qp;
  const auto & s = sim.controller.sqp;
  os << "qp " << num(q.eps_abs) << ' ' << num(q.eps_rel) << ' ' << q.max_iter << ' ' << num(q.rho) << ' ' << num(q.sigma)
     << ' ' << num(q.alpha) << ' ' << q.scaling << ' ' << q.scaling_iter << ' ' << q.adaptive_rho << ' ' << q.check_interval
     << ' ' << num(q.eps_prim_inf) << ' ' << num(q.eps_dual_inf) << ' ' << q.polish << ' ' << num(q.polish_trigger) << ' '
     << num(q.polish_delta) << ' ' << q.polish_refine << ' ' << q.ipm_fallback << ' ' << q.ipm_max_iter << ' '
     << q.ipm_max_dim << '\n';
  os << "sqp " << s.max_iter << ' ' << num(s.step_tol) << ' ' << num(s.dyn_tol) << ' ' << num(s.stall_tol) << ' '
     << num(s.backtrack) << ' ' << num(s.armijo) << ' ' << s.max_backtracks << '\n';
  os << "retained " << sim.controller.max_cycles_retained << " seed_tol " << num(sim.seed_tol) << '\n';
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(os.str())));
  return buf;
}

int cmd_run(const RunOptions & opt, std::ostream & out, std::ostream & err)
{
  const bool many = opt.scenarios.size() > 1;
  return for_each_scenario(opt, out, err,
    [&](const std::string & s, std::ostream & o, std::ostream & e) { return run_one(s, opt, many, o, e); });
}

int cmd_check(const RunOptions & opt, std::ostream & out, std::ostream & err)
{
  return for_each_scenario(opt, out, err,
    [&](const std::string & s, std::ostream & o, std::ostream & e) { return check_one(s, opt, o, e); });
}

int cmd_export_figures_data(const fs::path & run_dir, const std::optional<fs::path> & out_dir, std::ostream & out,
  std::ostream & err)
{
  const fs::path traj = run_dir / "trajectory.csv", scen = run_dir / "scenario.cfg";
  if (!fs::exists(traj) || !fs::exists(scen)) {
    err << "error: " << run_dir.string() << " is not a completed run (trajectory.csv and scenario.cfg required)\n";
    return kExitUsage;
  }
  try {
    const auto cfg = load_scenario(scen);
    const int n = cfg.spec.state_dim, d = cfg.spec.input_dim, P = cfg.spec.period;

    std::ifstream is(traj);
    std::string line;
    if (!std::getline(is, line)) { throw std::runtime_error("empty trajectory.csv"); }
    const auto header = split_csv(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) { col[header[i]] = i; }
    auto need = [&](const std::string & name) {
      const auto it = col.find(name);
      if (it == col.end()) { throw std::runtime_error("trajectory.csv lacks column '" + name + "'"); }
      return it->second;
    };

    std::ostringstream st, in, cost;
    st << "t,tau";
    for (int i = 0; i < n; ++i) { st << ",x" << i << ",x" << i << "_lo,x" << i << "_hi"; }
    st << '\n';
    in << "t,tau";
    for (int j = 0; j < d; ++j) { in << ",u" << j << ",u" << j << "_lo,u" << j << "_hi"; }
    in << '\n';
    cost << "t,tau,lmpc_cost\n";

    const auto ct = need("t"), ctau = need("tau"), ccost = need("lmpc_cost");
    std::size_t rows = 0;
    while (std::getline(is, line)) {
      if (line.empty()) { continue; }
      const auto cells = split_csv(line);
      if (cells.size() != header.size()) { throw std::runtime_error("malformed trajectory.csv row " + std::to_string(rows + 2)); }
      const int tau = std::stoi(cells[ctau]);
      if (tau < 0 || tau >= P) { throw std::runtime_error("tau out of range in trajectory.csv"); }
      const auto [xlo, xhi] = axis_bounds(cfg.spec.constraints.state[tau], n);
      const auto [ulo, uhi] = axis_bounds(cfg.spec.constraints.input[tau], d);
      st << cells[ct] << ',' << cells[ctau];
      for (int i = 0; i < n; ++i) {
        st << ',' << cells[need("x" + std::to_string(i))] << ',' << bound_cell(xlo(i)) << ',' << bound_cell(xhi(i));
      }
      st << '\n';
      in << cells[ct] << ',' << cells[ctau];
      for (int j = 0; j < d; ++j) {
        in << ',' << cells[need("u" + std::to_string(j))] << ',' << bound_cell(ulo(j)) << ',' << bound_cell(uhi(j));
      }
      in << '\n';
      cost << cells[ct] << ',' << cells[ctau] << ',' << cells[ccost] << '\n';
      ++rows;
    }

    const fs::path dir = out_dir.value_or(run_dir / "figures");
    fs::create_directories(dir);
    write_atomic(dir / "state.csv", st.str());
    write_atomic(dir / "input.csv", in.str());
    write_atomic(dir / "lmpc_cost.csv", cost.str());
    out << "exported " << rows << " rows to " << dir.string() << '\n';
    return kExitOk;
  } catch (const std::exception & e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

int run_main(int argc, const char * const * argv, std::ostream & out, std::ostream & err)
{
  CLI::App app{"Learning MPC for periodic repetitive tasks"};
  app.require_subcommand(1);

  RunOptions opt;
  std::optional<int> cycles;
  std::string out_dir, seed_override;

  auto add_common = [&](CLI::App * sub) {
    sub->add_option("--scenario", opt.scenarios, "builtin name or scenario file")->required();
    sub->add_option("--cycles", cycles, "number of cycles (default from scenario)");
    sub->add_option("--seed-override", seed_override, "seed trajectory CSV (tau,x..,u..)");
    sub->add_option("--jobs", opt.jobs, "parallel scenario runs")->check(CLI::PositiveNumber);
  };
  auto * run = app.add_subcommand("run", "simulate and write trajectory.csv, summary.json, manifest.json");
  add_common(run);
  run->add_option("--out", out_dir, "output directory");
  run->add_flag("--record-timing", opt.record_timing, "fill the solve_ms column");

  auto * check = app.add_subcommand("check", "simulate and print the property table");
  add_common(check);

  std::string run_dir, export_out;
  auto * exp = app.add_subcommand("export-figures-data", "write state, input and cost slices of a run");
  exp->add_option("--run", run_dir, "run directory")->required();
  exp->add_option("--out", export_out, "slice directory (default <run>/figures)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp & e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError & e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  opt.cycles = cycles;
  if (!out_dir.empty()) { opt.out = out_dir; }
  if (!seed_override.empty()) { opt.seed_override = seed_override; }
  try {
    if (*run) { return cmd_run(opt, out, err); }
    if (*check) { return cmd_check(opt, out, err); }
    return cmd_export_figures_data(run_dir, export_out.empty() ? std::nullopt : std::optional<fs::path>(export_out), out, err);
  } catch (const std::exception & e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace plmpc::cli
