#include "plmpc/scenarios.hpp"

#include "csv_util.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

namespace plmpc {

namespace {

constexpr int kPeriod = 100;

double phase(int tau, int P) { return std::sin(2.0 * std::numbers::pi * tau / P); }

Matrix mat(std::initializer_list<std::initializer_list<double>> rows)
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

Vector vec(std::initializer_list<double> v)
{
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) { out(i++) = x; }
  return out;
}

LinearDynamics double_integrator(int P)
{
  LinearDynamics lin;
  lin.models.assign(P, AffineModel{mat({{1, 0.1}, {0, 1}}), mat({{0}, {0.1}}), Vector::Zero(2)});
  return lin;
}

ProblemSpec base_spec(int N)
{
  ProblemSpec s;
  s.period    = kPeriod;
  s.horizon   = N;
  s.state_dim = 2;
  s.input_dim = 1;
  s.constraints.state.assign(kPeriod, Polyhedron::unconstrained(2));
  s.constraints.input.assign(kPeriod, Polyhedron::unconstrained(1));
  return s;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

Polyhedron p_band(double lo, double hi) { return Polyhedron::box(vec({lo, -kInf}), vec({hi, kInf})); }

ScenarioConfig s1()
{
  ScenarioConfig c;
  c.name = "s1_tv_dynamics";
  c.spec = base_spec(25);
  c.spec.dynamics = builtin_dynamics("tv_spring", kPeriod);
  c.spec.constraints.state.assign(kPeriod, p_band(-0.3, 0.3));
  c.spec.cost.terms.assign(kPeriod, QuadraticCost::tracking(mat({{1, 0}, {0, 0}}), mat({{1}}), vec({0.2, 0})));
  return c;
}

ScenarioConfig s2()
{
  ScenarioConfig c;
  c.name = "s2_tv_constraints";
  c.spec = base_spec(30);
  c.spec.dynamics = Dynamics(double_integrator(kPeriod), 2, 1);
  const double lo[6] = {-0.4, -0.4, -0.4, -0.1, 0.2, -0.1};
  const double hi[6] = {0.1, -0.2, 0.1, 0.4, 0.4, 0.4};
  for (int tau = 0; tau < kPeriod; ++tau) {
    const int seg = 6 * tau / kPeriod;
    c.spec.constraints.state[tau] = p_band(lo[seg], hi[seg]);
  }
  c.spec.cost.terms.assign(kPeriod, QuadraticCost::tracking(Matrix::Zero(2, 2), mat({{1}}), Vector::Zero(2)));
  c.seed.kind = SeedKind::WarmupMpc;
  return c;
}

ScenarioConfig s3()
{
  ScenarioConfig c;
  c.name = "s3_tv_cost";
  c.spec = base_spec(15);
  c.spec.dynamics = Dynamics(double_integrator(kPeriod), 2, 1);
  c.spec.constraints.state.assign(kPeriod, Polyhedron::box(vec({-kInf, -0.1}), vec({kInf, 0.1})));
  for (int tau = 0; tau < kPeriod; ++tau) {
    const double ref = tau < kPeriod / 2 ? -0.2 : 0.2;
    c.spec.cost.terms.push_back(QuadraticCost::tracking(mat({{1, 0}, {0, 0}}), mat({{1}}), vec({ref, 0})));
  }
  return c;
}

ScenarioConfig s4()
{
  ScenarioConfig c;
  c.name = "s4_nonlinear";
  c.spec = base_spec(8);
  c.spec.dynamics = builtin_dynamics("bilinear_forced", kPeriod);
  c.spec.constraints.state.assign(kPeriod, p_band(0.5, kInf));
  c.spec.constraints.input.assign(kPeriod, Polyhedron::box(vec({-5}), vec({5})));
  c.spec.cost.terms.assign(kPeriod, QuadraticCost::tracking(mat({{1, 0}, {0, 0}}), Matrix::Zero(1, 1), vec({2, 0})));
  c.seed.kind       = SeedKind::HoldState;
  c.seed.hold_state = vec({1, 0});
  return c;
}

PeriodicTrajectory hold_state_seed(const ProblemSpec & spec, const Vector & x0)
{
  if (x0.size() != spec.state_dim) { throw DimensionError("hold_state: state dimension mismatch"); }
  PeriodicTrajectory s;
  s.states.assign(spec.period + 1, x0);
  for (int tau = 0; tau < spec.period; ++tau) {
    Vector u = Vector::Zero(spec.input_dim);
    for (int it = 0; it < 50; ++it) {
      const Vector r = eval_dynamics(spec.dynamics, tau, x0, u) - x0;
      if (r.cwiseAbs().maxCoeff() <= 1e-14) { break; }
      const auto m = linearize_dynamics(spec.dynamics, tau, x0, u);
      u -= m.B.completeOrthogonalDecomposition().solve(r);
    }
    s.inputs.push_back(u);
  }
  return s;
}

}  // namespace

bool SeedPolicy::operator==(const SeedPolicy & o) const
{
  if (kind != o.kind) { return false; }
  return kind != SeedKind::HoldState || hold_state == o.hold_state;
}

ParseError::ParseError(const std::string & source, int line, const std::string & msg)
    : ValidationError(source + ":" + std::to_string(line) + ": " + msg), line(line)
{
}

std::vector<std::string> builtin_names() { return {"s1_tv_dynamics", "s2_tv_constraints", "s3_tv_cost", "s4_nonlinear"}; }

ScenarioConfig builtin(std::string_view name)
{
  if (name == "s1_tv_dynamics") { return s1(); }
  if (name == "s2_tv_constraints") { return s2(); }
  if (name == "s3_tv_cost") { return s3(); }
  if (name == "s4_nonlinear") { return s4(); }
  throw std::invalid_argument("unknown builtin scenario '" + std::string(name) + "'");
}

Dynamics builtin_dynamics(std::string_view name, int P)
{
  if (P < 1) { throw std::invalid_argument("builtin_dynamics: period must be positive"); }
  if (name == "tv_spring") {
    LinearDynamics lin;
    for (int tau = 0; tau < P; ++tau) {
      lin.models.push_back({mat({{1, 0.1}, {0.1 * (1.0 - phase(tau, P)), 1}}), mat({{0}, {0.1}}), Vector::Zero(2)});
    }
    return Dynamics(std::move(lin), 2, 1, "tv_spring");
  }
  if (name == "bilinear_forced") {
    NonlinearDynamics nl;
    nl.map = [P](int tau, const Vector & x, const Vector & u) {
      return vec({x(0) + 0.1 * x(1), x(1) + 0.1 * x(0) * (5.0 * phase(tau, P) + u(0))});
    };
    nl.jacobian = [P](int tau, const Vector & x, const Vector & u) {
      return std::pair<Matrix, Matrix>{mat({{1, 0.1}, {0.1 * (5.0 * phase(tau, P) + u(0)), 1}}), mat({{0}, {0.1 * x(0)}})};
    };
    // γ_j = λ_j p_j / Σ λ_i p_i reproduces the bilinear term exactly when p > 0.
    nl.gamma = [](int, const Matrix & states, const Vector & lambda) {
      const Vector w = lambda.cwiseProduct(states.row(0).transpose());
      const double s = w.sum();
      if (!(s > 0.0)) { throw std::domain_error("bilinear_forced: γ needs Σλp > 0"); }
      return Vector(w / s);
    };
    return Dynamics(std::move(nl), P, 2, 1, "bilinear_forced");
  }
  throw std::invalid_argument("unknown builtin dynamics '" + std::string(name) + "'");
}

PeriodicTrajectory make_seed(const ScenarioConfig & cfg)
{
  const auto & spec = cfg.spec;
  PeriodicTrajectory seed;
  switch (cfg.seed.kind) {
    case SeedKind::SteadyStateOrigin:
      seed.states.assign(spec.period + 1, Vector::Zero(spec.state_dim));
      seed.inputs.assign(spec.period, Vector::Zero(spec.input_dim));
      break;
    case SeedKind::HoldState: seed = hold_state_seed(spec, cfg.seed.hold_state); break;
    case SeedKind::WarmupMpc: seed = warmup_mpc(spec); break;
  }
  const auto v = validate_seed(spec, seed);
  if (!v.ok) {
    std::ostringstream os;
    os << "seed for scenario '" << cfg.name << "' fails validation:";
    for (const auto & m : v.issues) { os << "\n  " << m; }
    throw ValidationError(os.str());
  }
  return seed;
}

void write_seed_csv(std::ostream & os, const PeriodicTrajectory & seed)
{
  const auto n = seed.states.front().size();
  const auto d = seed.inputs.empty() ? 0 : seed.inputs.front().size();
  os << "tau";
  for (Eigen::Index i = 0; i < n; ++i) { os << ",x" << i; }
  for (Eigen::Index j = 0; j < d; ++j) { os << ",u" << j; }
  os << '\n';
  for (std::size_t k = 0; k < seed.states.size(); ++k) {
    os << k;
    for (Eigen::Index i = 0; i < n; ++i) { os << ',' << csv::num(seed.states[k](i)); }
    for (Eigen::Index j = 0; j < d; ++j) { os << ',' << (k < seed.inputs.size() ? csv::num(seed.inputs[k](j)) : ""); }
    os << '\n';
  }
}

PeriodicTrajectory read_seed_csv(std::istream & is, int n, int d, const std::string & source)
{
  PeriodicTrajectory seed;
  std::string line;
  int lineno = 0;
  if (!std::getline(is, line)) { throw ParseError(source, 1, "empty seed file"); }
  ++lineno;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) { continue; }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) { cells.push_back(cell); }
    if (line.back() == ',') { cells.emplace_back(); }
    if (static_cast<int>(cells.size()) != 1 + n + d) {
      throw ParseError(source, lineno, "expected " + std::to_string(1 + n + d) + " columns");
    }
    auto number = [&](const std::string & s) {
      try {
        std::size_t pos = 0;
        const double v  = std::stod(s, &pos);
        if (pos != s.size()) { throw std::invalid_argument(s); }
        return v;
      } catch (const std::exception &) {
        throw ParseError(source, lineno, "not a number: '" + s + "'");
      }
    };
    Vector x(n);
    for (int i = 0; i < n; ++i) { x(i) = number(cells[1 + i]); }
    seed.states.push_back(x);
    bool blank = true;
    for (int j = 0; j < d; ++j) { blank = blank && cells[1 + n + j].empty(); }
    if (!blank) {
      Vector u(d);
      for (int j = 0; j < d; ++j) { u(j) = number(cells[1 + n + j]); }
      seed.inputs.push_back(u);
    }
  }
  return seed;
}

}  // namespace plmpc
