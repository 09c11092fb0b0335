#include "plmpc/scenarios.hpp"

#include "csv_util.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace plmpc {

namespace {

struct Line
{
  int no = 0;
  std::vector<std::string> tokens;
};

std::vector<std::string> tokenize(const std::string & text, const std::string & source, int no)
{
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char ch = text[i];
    if (ch == '#') { break; }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      ++i;
      continue;
    }
    if (ch == '[') {
      const auto close = text.find(']', i);
      if (close == std::string::npos) { throw ParseError(source, no, "unterminated matrix literal"); }
      out.push_back(text.substr(i, close - i + 1));
      i = close + 1;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j])) && text[j] != '#' && text[j] != '[') { ++j; }
    out.push_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_number(const std::string & s, const std::string & source, int no)
{
  try {
    std::size_t pos = 0;
    const double v  = std::stod(s, &pos);
    if (pos == s.size()) { return v; }
  } catch (const std::exception &) {
  }
  throw ParseError(source, no, "not a number: '" + s + "'");
}

int parse_int(const std::string & s, const std::string & source, int no)
{
  try {
    std::size_t pos = 0;
    const long v    = std::stol(s, &pos);
    if (pos == s.size()) { return static_cast<int>(v); }
  } catch (const std::exception &) {
  }
  throw ParseError(source, no, "not an integer: '" + s + "'");
}

Matrix parse_matrix(const std::string & tok, const std::string & source, int no)
{
  if (tok.size() < 2 || tok.front() != '[' || tok.back() != ']') {
    throw ParseError(source, no, "expected a matrix literal, got '" + tok + "'");
  }
  std::vector<std::vector<double>> rows;
  std::stringstream body(tok.substr(1, tok.size() - 2));
  std::string row;
  while (std::getline(body, row, ';')) {
    for (auto & c : row) {
      if (c == ',') { c = ' '; }
    }
    std::stringstream rs(row);
    std::vector<double> vals;
    std::string cell;
    while (rs >> cell) { vals.push_back(parse_number(cell, source, no)); }
    rows.push_back(std::move(vals));
  }
  if (rows.empty() || rows.front().empty()) { throw ParseError(source, no, "empty matrix literal"); }
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.front().size()) { throw ParseError(source, no, "ragged matrix literal"); }
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return m;
}

Vector as_vector(const Matrix & m, const std::string & what, const std::string & source, int no)
{
  if (m.cols() == 1) { return m.col(0); }
  if (m.rows() == 1) { return m.row(0).transpose(); }
  throw ParseError(source, no, what + " must be a vector");
}

void expect_shape(const Matrix & m, Eigen::Index r, Eigen::Index c, const std::string & what, const std::string & source, int no)
{
  if (m.rows() != r || m.cols() != c) {
    std::ostringstream os;
    os << what << " is " << m.rows() << "x" << m.cols() << ", expected " << r << "x" << c;
    throw ParseError(source, no, os.str());
  }
}

std::string fmt_matrix(const Matrix & m)
{
  std::string s = "[";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (r > 0) { s += "; "; }
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) { s += ' '; }
      s += csv::num(m(r, c));
    }
  }
  return s + "]";
}

std::string fmt_vector(const Vector & v) { return fmt_matrix(Matrix(v)); }

/// Calls emit(begin, end) for each maximal run of equal entries, skipping those rejected by keep.
template <class T, class Keep, class Emit>
void for_each_run(const std::vector<T> & items, Keep keep, Emit emit)
{
  std::size_t b = 0;
  while (b < items.size()) {
    std::size_t e = b + 1;
    while (e < items.size() && items[e] == items[b]) { ++e; }
    if (keep(items[b])) { emit(static_cast<int>(b), static_cast<int>(e)); }
    b = e;
  }
}

bool model_equal(const AffineModel & a, const AffineModel & b) { return a.A == b.A && a.B == b.B && a.c == b.c; }

}  // namespace

ScenarioConfig parse_scenario(std::istream & is, const std::string & source)
{
  std::vector<Line> lines;
  std::string text;
  int no = 0;
  while (std::getline(is, text)) {
    ++no;
    auto toks = tokenize(text, source, no);
    if (!toks.empty()) { lines.push_back({no, std::move(toks)}); }
  }

  std::map<std::string, Line> scalars;
  std::vector<Line> ranged;
  const std::vector<std::string> scalar_keys = {"name", "period", "horizon", "state_dim", "input_dim", "cycles", "seed",
    "dynamics_builtin"};
  for (auto & l : lines) {
    const auto & key = l.tokens.front();
    if (std::find(scalar_keys.begin(), scalar_keys.end(), key) != scalar_keys.end()) {
      if (scalars.count(key)) { throw ParseError(source, l.no, "duplicate key '" + key + "'"); }
      scalars[key] = l;
    } else if (key == "dynamics_linear" || key == "state_constraint" || key == "input_constraint" || key == "cost") {
      ranged.push_back(l);
    } else {
      throw ParseError(source, l.no, "unknown key '" + key + "'");
    }
  }

  auto single = [&](const std::string & key, bool required) -> std::optional<Line> {
    auto it = scalars.find(key);
    if (it == scalars.end()) {
      if (required) { throw ParseError(source, no, "missing required key '" + key + "'"); }
      return std::nullopt;
    }
    if (it->second.tokens.size() < 2) { throw ParseError(source, it->second.no, "'" + key + "' needs a value"); }
    return it->second;
  };
  auto int_key = [&](const std::string & key, bool required, int dflt) {
    const auto l = single(key, required);
    if (!l) { return dflt; }
    if (l->tokens.size() != 2) { throw ParseError(source, l->no, "'" + key + "' takes one value"); }
    return parse_int(l->tokens[1], source, l->no);
  };

  ScenarioConfig cfg;
  cfg.name = single("name", true)->tokens.at(1);
  const int P = int_key("period", true, 0);
  const int N = int_key("horizon", true, 0);
  const int n = int_key("state_dim", true, 0);
  const int d = int_key("input_dim", true, 0);
  cfg.cycles  = int_key("cycles", false, 10);
  if (P < 1) { throw ParseError(source, scalars["period"].no, "period must be positive"); }
  if (N < 1) { throw ParseError(source, scalars["horizon"].no, "horizon must be positive"); }
  if (n < 1 || d < 1) { throw ParseError(source, scalars[n < 1 ? "state_dim" : "input_dim"].no, "dimensions must be positive"); }
  if (cfg.cycles < 1) { throw ParseError(source, scalars["cycles"].no, "cycles must be positive"); }

  if (const auto l = single("seed", false)) {
    const auto & kind = l->tokens[1];
    if (kind == "steady_state_origin" && l->tokens.size() == 2) {
      cfg.seed.kind = SeedKind::SteadyStateOrigin;
    } else if (kind == "warmup_mpc" && l->tokens.size() == 2) {
      cfg.seed.kind = SeedKind::WarmupMpc;
    } else if (kind == "hold_state" && l->tokens.size() == 3) {
      cfg.seed.kind       = SeedKind::HoldState;
      cfg.seed.hold_state = as_vector(parse_matrix(l->tokens[2], source, l->no), "hold_state", source, l->no);
      if (cfg.seed.hold_state.size() != n) { throw ParseError(source, l->no, "hold_state has the wrong dimension"); }
    } else {
      throw ParseError(source, l->no, "seed must be steady_state_origin, warmup_mpc or hold_state [x]");
    }
  }

  ProblemSpec & spec = cfg.spec;
  spec.period    = P;
  spec.horizon   = N;
  spec.state_dim = n;
  spec.input_dim = d;

  std::vector<std::optional<AffineModel>> models(P);
  std::vector<std::optional<Polyhedron>> xs(P), us(P);
  std::vector<std::optional<QuadraticCost>> costs(P);
  bool any_linear = false;

  for (const auto & l : ranged) {
    const auto & key = l.tokens[0];
    if (l.tokens.size() < 3) { throw ParseError(source, l.no, "'" + key + "' needs a range <begin> <end>"); }
    const int b = parse_int(l.tokens[1], source, l.no);
    const int e = parse_int(l.tokens[2], source, l.no);
    if (b < 0 || e > P || b >= e) {
      throw ParseError(source, l.no, "range must satisfy 0 <= begin < end <= period");
    }
    std::map<std::string, Matrix> args;
    if ((l.tokens.size() - 3) % 2 != 0) { throw ParseError(source, l.no, "arguments must be name/matrix pairs"); }
    for (std::size_t k = 3; k < l.tokens.size(); k += 2) {
      if (args.count(l.tokens[k])) { throw ParseError(source, l.no, "duplicate argument '" + l.tokens[k] + "'"); }
      args[l.tokens[k]] = parse_matrix(l.tokens[k + 1], source, l.no);
    }
    auto take = [&](const std::string & name, bool required) -> std::optional<Matrix> {
      auto it = args.find(name);
      if (it == args.end()) {
        if (required) { throw ParseError(source, l.no, "'" + key + "' needs argument '" + name + "'"); }
        return std::nullopt;
      }
      Matrix m = std::move(it->second);
      args.erase(it);
      return m;
    };
    auto finish = [&] {
      if (!args.empty()) { throw ParseError(source, l.no, "unexpected argument '" + args.begin()->first + "'"); }
    };
    auto claim = [&](auto & slots, const char * what) {
      for (int tau = b; tau < e; ++tau) {
        if (slots[tau]) {
          throw ParseError(source, l.no, std::string(what) + " for tau " + std::to_string(tau) + " is already defined");
        }
      }
    };

    if (key == "dynamics_linear") {
      any_linear = true;
      const Matrix A = *take("A", true), B = *take("B", true);
      const auto c   = take("c", false);
      finish();
      expect_shape(A, n, n, "A", source, l.no);
      expect_shape(B, n, d, "B", source, l.no);
      AffineModel m{A, B, c ? as_vector(*c, "c", source, l.no) : Vector::Zero(n)};
      if (m.c.size() != n) { throw ParseError(source, l.no, "c has the wrong dimension"); }
      claim(models, "dynamics");
      for (int tau = b; tau < e; ++tau) { models[tau] = m; }
    } else if (key == "state_constraint" || key == "input_constraint") {
      const int dim  = key == "state_constraint" ? n : d;
      const Matrix G = *take("G", true);
      const Vector g = as_vector(*take("g", true), "g", source, l.no);
      finish();
      if (G.cols() != dim) { throw ParseError(source, l.no, "G has the wrong number of columns"); }
      if (g.size() != G.rows()) { throw ParseError(source, l.no, "g must have one entry per row of G"); }
      auto & slots = key == "state_constraint" ? xs : us;
      claim(slots, key == "state_constraint" ? "state constraint" : "input constraint");
      for (int tau = b; tau < e; ++tau) { slots[tau] = Polyhedron{G, g}; }
    } else {
      const Matrix Q = *take("Q", true), R = *take("R", true);
      const Vector xr = as_vector(*take("x_ref", true), "x_ref", source, l.no);
      const auto ql   = take("q_lin", false);
      const auto rl   = take("r_lin", false);
      finish();
      expect_shape(Q, n, n, "Q", source, l.no);
      expect_shape(R, d, d, "R", source, l.no);
      if (xr.size() != n) { throw ParseError(source, l.no, "x_ref has the wrong dimension"); }
      QuadraticCost h = QuadraticCost::tracking(Q, R, xr);
      if (ql) { h.q_lin = as_vector(*ql, "q_lin", source, l.no); }
      if (rl) { h.r_lin = as_vector(*rl, "r_lin", source, l.no); }
      if (h.q_lin.size() != n || h.r_lin.size() != d) { throw ParseError(source, l.no, "linear cost term has the wrong dimension"); }
      claim(costs, "cost");
      for (int tau = b; tau < e; ++tau) { costs[tau] = h; }
    }
  }

  const auto builtin_line = single("dynamics_builtin", false);
  if (builtin_line && any_linear) {
    throw ParseError(source, builtin_line->no, "dynamics_builtin cannot be combined with dynamics_linear");
  }
  if (builtin_line) {
    try {
      spec.dynamics = builtin_dynamics(builtin_line->tokens[1], P);
    } catch (const std::invalid_argument & e) {
      throw ParseError(source, builtin_line->no, e.what());
    }
    if (spec.dynamics.state_dim() != n || spec.dynamics.input_dim() != d) {
      throw ParseError(source, builtin_line->no, "builtin dynamics dimensions differ from state_dim/input_dim");
    }
  } else {
    LinearDynamics lin;
    for (int tau = 0; tau < P; ++tau) {
      if (!models[tau]) { throw ParseError(source, no, "no dynamics for tau " + std::to_string(tau)); }
      lin.models.push_back(*models[tau]);
    }
    spec.dynamics = Dynamics(std::move(lin), n, d);
  }
  for (int tau = 0; tau < P; ++tau) {
    if (!costs[tau]) { throw ParseError(source, no, "no cost for tau " + std::to_string(tau)); }
    spec.cost.terms.push_back(*costs[tau]);
    spec.constraints.state.push_back(xs[tau] ? *xs[tau] : Polyhedron::unconstrained(n));
    spec.constraints.input.push_back(us[tau] ? *us[tau] : Polyhedron::unconstrained(d));
  }

  try {
    spec.validate();
  } catch (const ValidationError & e) {
    const int at = std::string(e.what()).find("horizon") != std::string::npos ? scalars["horizon"].no : no;
    throw ParseError(source, at, e.what());
  }
  return cfg;
}

ScenarioConfig load_scenario(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) { throw ValidationError("cannot open scenario file '" + path.string() + "'"); }
  return parse_scenario(in, path.string());
}

void save_scenario(std::ostream & os, const ScenarioConfig & cfg)
{
  const auto & s = cfg.spec;
  os << "name " << cfg.name << '\n'
     << "period " << s.period << '\n'
     << "horizon " << s.horizon << '\n'
     << "state_dim " << s.state_dim << '\n'
     << "input_dim " << s.input_dim << '\n'
     << "cycles " << cfg.cycles << '\n';
  switch (cfg.seed.kind) {
    case SeedKind::SteadyStateOrigin: os << "seed steady_state_origin\n"; break;
    case SeedKind::WarmupMpc: os << "seed warmup_mpc\n"; break;
    case SeedKind::HoldState: os << "seed hold_state " << fmt_vector(cfg.seed.hold_state) << '\n'; break;
  }
  if (!s.dynamics.builtin_name().empty()) {
    os << "dynamics_builtin " << s.dynamics.builtin_name() << '\n';
  } else if (s.dynamics.is_linear()) {
    struct M
    {
      AffineModel m;
      bool operator==(const M & o) const { return model_equal(m, o.m); }
    };
    std::vector<M> ms;
    for (const auto & m : s.dynamics.linear().models) { ms.push_back({m}); }
    for_each_run(ms, [](const M &) { return true; }, [&](int b, int e) {
      const auto & m = ms[b].m;
      os << "dynamics_linear " << b << ' ' << e << " A " << fmt_matrix(m.A) << " B " << fmt_matrix(m.B) << " c "
         << fmt_vector(m.c) << '\n';
    });
  } else {
    throw std::invalid_argument("save_scenario: nonlinear dynamics must be a builtin");
  }
  auto constraints = [&](const std::vector<Polyhedron> & polys, const char * key) {
    for_each_run(polys, [](const Polyhedron & p) { return p.rows() > 0; }, [&](int b, int e) {
      os << key << ' ' << b << ' ' << e << " G " << fmt_matrix(polys[b].G) << " g " << fmt_vector(polys[b].g) << '\n';
    });
  };
  constraints(s.constraints.state, "state_constraint");
  constraints(s.constraints.input, "input_constraint");
  for_each_run(s.cost.terms, [](const QuadraticCost &) { return true; }, [&](int b, int e) {
    const auto & h = s.cost.terms[b];
    os << "cost " << b << ' ' << e << " Q " << fmt_matrix(h.Q) << " R " << fmt_matrix(h.R) << " x_ref " << fmt_vector(h.x_ref);
    if (!h.q_lin.isZero(0.0)) { os << " q_lin " << fmt_vector(h.q_lin); }
    if (!h.r_lin.isZero(0.0)) { os << " r_lin " << fmt_vector(h.r_lin); }
    os << '\n';
  });
}

bool equivalent(const ScenarioConfig & a, const ScenarioConfig & b)
{
  const auto & x = a.spec;
  const auto & y = b.spec;
  if (a.name != b.name || a.cycles != b.cycles || !(a.seed == b.seed)) { return false; }
  if (x.period != y.period || x.horizon != y.horizon || x.state_dim != y.state_dim || x.input_dim != y.input_dim) {
    return false;
  }
  if (x.dynamics.is_linear() != y.dynamics.is_linear()) { return false; }
  if (x.dynamics.is_linear()) {
    const auto & ma = x.dynamics.linear().models;
    const auto & mb = y.dynamics.linear().models;
    if (ma.size() != mb.size()) { return false; }
    for (std::size_t k = 0; k < ma.size(); ++k) {
      if (!model_equal(ma[k], mb[k])) { return false; }
    }
  } else if (x.dynamics.builtin_name().empty() || x.dynamics.builtin_name() != y.dynamics.builtin_name()) {
    return false;
  }
  return x.constraints.state == y.constraints.state && x.constraints.input == y.constraints.input
         && x.cost.terms == y.cost.terms;
}

}  // namespace plmpc
