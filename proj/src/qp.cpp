#include "plmpc/qp.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace plmpc {

namespace {

using Vec = Eigen::VectorXd;
using Triplet = Eigen::Triplet<double>;
using Ldlt = Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower>;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kRhoEqFactor = 1e3;

double inf_norm(const Vec & v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

double clamp_scale(double v)
{
  if (!std::isfinite(v) || v < 1e-4) { return 1.0; }
  return std::clamp(v, 1e-4, 1e4);
}

Vec project_box(const Vec & v, const Vec & l, const Vec & u) { return v.cwiseMax(l).cwiseMin(u); }

/// Column-wise ∞-norms of a sparse matrix.
Vec col_norms(const SparseMatrix & M)
{
  Vec out = Vec::Zero(M.cols());
  for (Eigen::Index k = 0; k < M.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(M, k); it; ++it) { out(k) = std::max(out(k), std::abs(it.value())); }
  }
  return out;
}

Vec row_norms(const SparseMatrix & M)
{
  Vec out = Vec::Zero(M.rows());
  for (Eigen::Index k = 0; k < M.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(M, k); it; ++it) {
      out(it.row()) = std::max(out(it.row()), std::abs(it.value()));
    }
  }
  return out;
}

double objective(const QpProblem & p, const Vec & z) { return 0.5 * z.dot(p.H * z) + p.q.dot(z) + p.constant; }

enum class Activity : signed char { Inactive = 0, Lower = -1, Upper = 1, Equality = 2 };

struct PolishResult
{
  Vec z, y;
  double prim = kInf, dual = kInf;
  bool ok = false;
};

class AdmmSolver
{
public:
  AdmmSolver(const QpProblem & p, const QpSettings & s) : p_(p), s_(s)
  {
    m_ = p.num_variables();
    n_ = p.num_constraints();
    scale();
  }

  QpSolution run(const QpWarmStart * warm);

private:
  void scale();
  void init_rho();
  bool factor();
  PolishResult polish(const std::vector<Activity> & act) const;
  std::vector<Activity> classify() const;

  const QpProblem & p_;
  const QpSettings & s_;
  Eigen::Index m_ = 0, n_ = 0;

  // scaled data
  SparseMatrix Hs_, As_;
  Vec qs_, ls_, us_;
  Vec D_, E_;
  double c_ = 1.0;

  Vec rho_;
  double rho_bar_ = 0.1;
  Ldlt ldlt_;

  // iterates (scaled)
  Vec x_, z_, y_;
};

void AdmmSolver::scale()
{
  Hs_ = p_.H;
  As_ = p_.A;
  qs_ = p_.q;
  D_  = Vec::Ones(m_);
  E_  = Vec::Ones(n_);
  c_  = 1.0;

  if (s_.scaling) {
    for (int it = 0; it < s_.scaling_iter; ++it) {
      Vec dv = col_norms(Hs_).cwiseMax(col_norms(As_));
      Vec de = row_norms(As_);
      for (Eigen::Index j = 0; j < m_; ++j) { dv(j) = clamp_scale(1.0 / std::sqrt(dv(j))); }
      for (Eigen::Index i = 0; i < n_; ++i) { de(i) = clamp_scale(1.0 / std::sqrt(de(i))); }
      Hs_ = dv.asDiagonal() * Hs_ * dv.asDiagonal();
      As_ = de.asDiagonal() * As_ * dv.asDiagonal();
      qs_ = dv.cwiseProduct(qs_);
      D_  = D_.cwiseProduct(dv);
      E_  = E_.cwiseProduct(de);

      const double hmean = m_ ? col_norms(Hs_).mean() : 0.0;
      const double gamma = clamp_scale(1.0 / std::max(hmean, inf_norm(qs_)));
      Hs_ *= gamma;
      qs_ *= gamma;
      c_ *= gamma;
    }
  }
  ls_ = E_.cwiseProduct(p_.l);
  us_ = E_.cwiseProduct(p_.u);
  // E·(±inf) stays infinite since E > 0.
}

void AdmmSolver::init_rho()
{
  rho_.resize(n_);
  for (Eigen::Index i = 0; i < n_; ++i) {
    if (!std::isfinite(ls_(i)) && !std::isfinite(us_(i))) {
      rho_(i) = kRhoMin;
    } else if (us_(i) - ls_(i) < 1e-8) {
      rho_(i) = std::min(kRhoEqFactor * rho_bar_, kRhoMax);
    } else {
      rho_(i) = rho_bar_;
    }
  }
}

bool AdmmSolver::factor()
{
  const Eigen::Index k = m_ + n_;
  std::vector<Triplet> trip;
  trip.reserve(Hs_.nonZeros() + As_.nonZeros() + k);
  for (Eigen::Index c = 0; c < Hs_.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(Hs_, c); it; ++it) {
      if (it.row() >= it.col()) { trip.emplace_back(it.row(), it.col(), it.value()); }
    }
  }
  for (Eigen::Index j = 0; j < m_; ++j) { trip.emplace_back(j, j, s_.sigma); }
  for (Eigen::Index c = 0; c < As_.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(As_, c); it; ++it) { trip.emplace_back(m_ + it.row(), c, it.value()); }
  }
  for (Eigen::Index i = 0; i < n_; ++i) { trip.emplace_back(m_ + i, m_ + i, -1.0 / rho_(i)); }
  SparseMatrix K(k, k);
  K.setFromTriplets(trip.begin(), trip.end());
  ldlt_.compute(K);
  return ldlt_.info() == Eigen::Success;
}

std::vector<Activity> AdmmSolver::classify() const
{
  std::vector<Activity> act(n_, Activity::Inactive);
  for (Eigen::Index i = 0; i < n_; ++i) {
    if (std::isfinite(ls_(i)) && std::isfinite(us_(i)) && us_(i) - ls_(i) <= 1e-12 * std::max(1.0, std::abs(us_(i)))) {
      act[i] = Activity::Equality;
    } else if (std::isfinite(ls_(i)) && z_(i) - ls_(i) < -y_(i)) {
      act[i] = Activity::Lower;
    } else if (std::isfinite(us_(i)) && us_(i) - z_(i) < y_(i)) {
      act[i] = Activity::Upper;
    }
  }
  return act;
}

PolishResult polish_active_set(const QpProblem & p_, const QpSettings & s_, const std::vector<Activity> & act)
{
  const Eigen::Index m_ = p_.num_variables(), n_ = p_.num_constraints();
  // Reduced KKT system on the guessed active set, in original units:
  //   [H + δI  A_Sᵀ] [z  ]   [-q ]
  //   [A_S    -δI  ] [y_S] = [b_S]
  // solved with iterative refinement against the unregularized matrix.
  std::vector<Eigen::Index> rows;
  Vec b;
  std::vector<double> bv;
  for (Eigen::Index i = 0; i < n_; ++i) {
    if (act[i] == Activity::Inactive) { continue; }
    rows.push_back(i);
    bv.push_back(act[i] == Activity::Upper ? p_.u(i) : p_.l(i));
  }
  const Eigen::Index ns = static_cast<Eigen::Index>(rows.size());
  b = Eigen::Map<Vec>(bv.data(), ns);

  std::vector<Eigen::Index> pos(n_, -1);
  for (Eigen::Index r = 0; r < ns; ++r) { pos[rows[r]] = r; }

  const Eigen::Index k = m_ + ns;
  std::vector<Triplet> base;
  for (Eigen::Index c = 0; c < p_.H.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(p_.H, c); it; ++it) {
      if (it.row() >= it.col()) { base.emplace_back(it.row(), it.col(), it.value()); }
    }
  }
  for (Eigen::Index c = 0; c < p_.A.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(p_.A, c); it; ++it) {
      if (pos[it.row()] >= 0) { base.emplace_back(m_ + pos[it.row()], c, it.value()); }
    }
  }
  std::vector<Triplet> reg = base;
  for (Eigen::Index j = 0; j < m_; ++j) { reg.emplace_back(j, j, s_.polish_delta); }
  for (Eigen::Index r = 0; r < ns; ++r) { reg.emplace_back(m_ + r, m_ + r, -s_.polish_delta); }

  SparseMatrix K0(k, k), Kd(k, k);
  K0.setFromTriplets(base.begin(), base.end());
  Kd.setFromTriplets(reg.begin(), reg.end());
  Ldlt ldlt(Kd);
  PolishResult res;
  if (ldlt.info() != Eigen::Success) { return res; }

  Vec rhs(k);
  rhs.head(m_) = -p_.q;
  rhs.tail(ns) = b;
  Vec t = Vec::Zero(k);
  for (int r = 0; r < s_.polish_refine; ++r) {
    const Vec resid = rhs - K0.selfadjointView<Eigen::Lower>() * t;
    t += ldlt.solve(resid);
  }
  if (!t.allFinite()) { return res; }

  res.z = t.head(m_);
  res.y = Vec::Zero(n_);
  for (Eigen::Index r = 0; r < ns; ++r) {
    double yi = t(m_ + r);
    // Drop multipliers with the wrong sign; a large one means a wrong active set
    // and shows up in the dual residual below.
    if (act[rows[r]] == Activity::Lower) { yi = std::min(yi, 0.0); }
    if (act[rows[r]] == Activity::Upper) { yi = std::max(yi, 0.0); }
    res.y(rows[r]) = yi;
  }

  const Vec Az  = p_.A * res.z;
  const Vec Hz  = p_.H * res.z;
  const Vec Aty = p_.A.transpose() * res.y;
  res.prim = inf_norm(Az - project_box(Az, p_.l, p_.u));
  res.dual = inf_norm(Hz + p_.q + Aty);
  const double prim_tol = s_.eps_abs + s_.eps_rel * inf_norm(Az);
  const double dual_tol = s_.eps_abs + s_.eps_rel * std::max({inf_norm(Hz), inf_norm(Aty), inf_norm(p_.q)});
  res.ok = res.prim <= prim_tol && res.dual <= dual_tol;
  return res;
}

PolishResult AdmmSolver::polish(const std::vector<Activity> & act) const { return polish_active_set(p_, s_, act); }

/// Dense Mehrotra predictor-corrector on l ≤ Az ≤ u, split into equality rows
/// and one-sided inequality rows G z + s = h, s ≥ 0.
QpSolution solve_ipm(const QpProblem & p, const QpSettings & st, const Vec & z0)
{
  using Dense = Eigen::MatrixXd;
  const Eigen::Index m = p.num_variables(), n = p.num_constraints();
  const Dense A = Dense(p.A);
  const Dense H = Dense(p.H);

  std::vector<Eigen::Index> eq_rows, in_rows;
  std::vector<double> in_sign;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (p.l(i) == p.u(i)) {
      eq_rows.push_back(i);
      continue;
    }
    if (std::isfinite(p.u(i))) {
      in_rows.push_back(i);
      in_sign.push_back(1.0);
    }
    if (std::isfinite(p.l(i))) {
      in_rows.push_back(i);
      in_sign.push_back(-1.0);
    }
  }
  const auto ne = static_cast<Eigen::Index>(eq_rows.size());
  const auto ni = static_cast<Eigen::Index>(in_rows.size());
  Dense E(ne, m), G(ni, m);
  Vec b(ne), h(ni);
  for (Eigen::Index r = 0; r < ne; ++r) {
    E.row(r) = A.row(eq_rows[r]);
    b(r)     = p.u(eq_rows[r]);
  }
  for (Eigen::Index r = 0; r < ni; ++r) {
    const double sg = in_sign[r];
    G.row(r) = sg * A.row(in_rows[r]);
    h(r)     = sg > 0 ? p.u(in_rows[r]) : -p.l(in_rows[r]);
  }

  Vec z = z0.size() == m ? z0 : Vec::Zero(m);
  Vec nu = Vec::Zero(ne);
  Vec sl = (h - G * z).cwiseMax(1.0);
  Vec w  = Vec::Ones(ni);

  const double scale_d = 1.0 + inf_norm(p.q);
  const double scale_p = 1.0 + std::max(inf_norm(b), inf_norm(h));
  const double tol     = 1e-11;
  const double delta   = 1e-11;

  QpSolution sol;
  sol.status         = QpStatus::MaxIter;
  sol.interior_point = true;
  Dense K(m + ne, m + ne);
  for (int it = 1; it <= st.ipm_max_iter; ++it) {
    const Vec rd = H * z + p.q + E.transpose() * nu + G.transpose() * w;
    const Vec re = E * z - b;
    const Vec ri = G * z + sl - h;
    const double mu = ni > 0 ? sl.dot(w) / static_cast<double>(ni) : 0.0;
    sol.iterations  = it;
    if (inf_norm(rd) <= tol * scale_d && inf_norm(re) <= tol * scale_p && inf_norm(ri) <= tol * scale_p
        && mu <= tol * scale_d) {
      sol.status = QpStatus::Solved;
      break;
    }
    if (!rd.allFinite() || !ri.allFinite()) { break; }

    const Vec d = w.cwiseQuotient(sl);
    K.setZero();
    K.topLeftCorner(m, m)      = H + G.transpose() * d.asDiagonal() * G;
    K.topLeftCorner(m, m).diagonal().array() += delta;
    K.topRightCorner(m, ne)    = E.transpose();
    K.bottomLeftCorner(ne, m)  = E;
    K.bottomRightCorner(ne, ne).diagonal().setConstant(-delta);
    const Eigen::PartialPivLU<Dense> lu(K);

    auto direction = [&](const Vec & rc, Vec & dz, Vec & ds, Vec & dw) -> Vec {
      Vec rhs(m + ne);
      rhs.head(m) = -rd - G.transpose() * (-rc + w.cwiseProduct(ri)).cwiseQuotient(sl);
      rhs.tail(ne) = -re;
      Vec sol_v = lu.solve(rhs);
      for (int r = 0; r < 2; ++r) {
        Vec res(m + ne);
        res.head(m)  = rhs.head(m) - (K.topLeftCorner(m, m) * sol_v.head(m) + E.transpose() * sol_v.tail(ne));
        res.tail(ne) = rhs.tail(ne) - E * sol_v.head(m);
        sol_v += lu.solve(res);
      }
      dz = sol_v.head(m);
      ds = -ri - G * dz;
      dw = (-rc - w.cwiseProduct(ds)).cwiseQuotient(sl);
      return sol_v.tail(ne);
    };
    auto max_step = [](const Vec & v, const Vec & dv) {
      double a = 1.0;
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (dv(i) < 0.0) { a = std::min(a, -v(i) / dv(i)); }
      }
      return a;
    };

    Vec dz, ds, dw;
    direction(sl.cwiseProduct(w), dz, ds, dw);
    const double a_aff  = std::min(max_step(sl, ds), max_step(w, dw));
    const double mu_aff = ni > 0 ? (sl + a_aff * ds).dot(w + a_aff * dw) / static_cast<double>(ni) : 0.0;
    const double sigma  = mu > 0.0 ? std::pow(mu_aff / mu, 3) : 0.0;
    const Vec rc        = sl.cwiseProduct(w) + ds.cwiseProduct(dw) - Vec::Constant(ni, sigma * mu);
    const Vec dnu       = direction(rc, dz, ds, dw);
    const double a      = std::min(1.0, 0.995 * std::min(max_step(sl, ds), max_step(w, dw)));
    z += a * dz;
    nu += a * dnu;
    sl += a * ds;
    w += a * dw;
  }

  sol.z = z;
  sol.y = Vec::Zero(n);
  for (Eigen::Index r = 0; r < ne; ++r) { sol.y(eq_rows[r]) = nu(r); }
  for (Eigen::Index r = 0; r < ni; ++r) { sol.y(in_rows[r]) += in_sign[r] * w(r); }
  sol.objective = objective(p, z);
  const Vec Az  = p.A * z;
  sol.primal_residual = inf_norm(Az - project_box(Az, p.l, p.u));
  sol.dual_residual   = inf_norm(p.H * z + p.q + p.A.transpose() * sol.y);

  if (sol.status == QpStatus::Solved && st.polish) {
    // active where the slack is smaller than the multiplier
    std::vector<Activity> act(n, Activity::Inactive);
    for (Eigen::Index r = 0; r < ne; ++r) { act[eq_rows[r]] = Activity::Equality; }
    for (Eigen::Index r = 0; r < ni; ++r) {
      if (sl(r) < w(r)) { act[in_rows[r]] = in_sign[r] > 0 ? Activity::Upper : Activity::Lower; }
    }
    const auto pr = polish_active_set(p, st, act);
    if (pr.ok && objective(p, pr.z) <= sol.objective + 1e-9 * (1.0 + std::abs(sol.objective))) {
      sol.z               = pr.z;
      sol.y               = pr.y;
      sol.objective       = objective(p, pr.z);
      sol.primal_residual = pr.prim;
      sol.dual_residual   = pr.dual;
      sol.polished        = true;
    }
  }
  return sol;
}

QpSolution AdmmSolver::run(const QpWarmStart * warm)
{
  QpSolution sol;
  sol.z = Vec::Zero(m_);
  sol.y = Vec::Zero(n_);

  for (Eigen::Index i = 0; i < n_; ++i) {
    if (p_.l(i) == kInf || p_.u(i) == -kInf || p_.l(i) > p_.u(i)) {
      sol.status = QpStatus::PrimalInfeasible;
      sol.objective = kInf;
      return sol;
    }
  }

  rho_bar_ = s_.rho;
  init_rho();
  if (!factor()) { throw std::runtime_error("QP: KKT factorization failed"); }

  x_ = Vec::Zero(m_);
  z_ = Vec::Zero(n_);
  y_ = Vec::Zero(n_);
  if (warm != nullptr) {
    if (warm->z.size() == m_) {
      x_ = warm->z.cwiseQuotient(D_);
      z_ = project_box(As_ * x_, ls_, us_);
    }
    if (warm->y.size() == n_) { y_ = c_ * warm->y.cwiseQuotient(E_); }
  }

  const double alpha = s_.alpha;
  Vec rhs(m_ + n_), xt(m_), zt(n_), zr(n_), x_prev, y_prev;
  std::vector<Activity> last_polish_set;
  bool have_polish_set = false;

  auto unscaled = [&](Vec & zu, Vec & yu) {
    zu = D_.cwiseProduct(x_);
    yu = E_.cwiseProduct(y_) / c_;
  };

  auto finish_polished = [&](const PolishResult & pr, int iter) {
    sol.z               = pr.z;
    sol.y               = pr.y;
    sol.status          = QpStatus::Solved;
    sol.iterations      = iter;
    sol.primal_residual = pr.prim;
    sol.dual_residual   = pr.dual;
    sol.polished        = true;
    sol.objective       = objective(p_, sol.z);
    return sol;
  };

  for (int iter = 1; iter <= s_.max_iter; ++iter) {
    x_prev = x_;
    y_prev = y_;

    rhs.head(m_) = s_.sigma * x_ - qs_;
    rhs.tail(n_) = z_ - y_.cwiseQuotient(rho_);
    const Vec kkt = ldlt_.solve(rhs);
    xt = kkt.head(m_);
    zt = z_ + (kkt.tail(n_) - y_).cwiseQuotient(rho_);

    x_ = alpha * xt + (1.0 - alpha) * x_;
    zr = alpha * zt + (1.0 - alpha) * z_;
    z_ = project_box(zr + y_.cwiseQuotient(rho_), ls_, us_);
    y_ += rho_.cwiseProduct(zr - z_);

    if (iter % s_.check_interval != 0 && iter != s_.max_iter) { continue; }

    Vec zu, yu;
    unscaled(zu, yu);
    const Vec Az  = p_.A * zu;
    const Vec zc  = z_.cwiseQuotient(E_);
    const Vec Hz  = p_.H * zu;
    const Vec Aty = p_.A.transpose() * yu;
    const double prim       = inf_norm(Az - zc);
    const double dual       = inf_norm(Hz + p_.q + Aty);
    const double prim_scale = std::max(inf_norm(Az), inf_norm(zc));
    const double dual_scale = std::max({inf_norm(Hz), inf_norm(Aty), inf_norm(p_.q)});

    sol.primal_residual = prim;
    sol.dual_residual   = dual;
    sol.iterations      = iter;

    const bool converged =
      prim <= s_.eps_abs + s_.eps_rel * prim_scale && dual <= s_.eps_abs + s_.eps_rel * dual_scale;

    const bool near = prim <= s_.polish_trigger * (1.0 + prim_scale) && dual <= s_.polish_trigger * (1.0 + dual_scale);
    if (s_.polish && (near || converged)) {
      auto act = classify();
      if (!have_polish_set || act != last_polish_set) {
        last_polish_set = act;
        have_polish_set = true;
        const auto pr   = polish(act);
        if (pr.ok) { return finish_polished(pr, iter); }
      }
    }

    if (converged) {
      sol.z               = zu;
      sol.y               = yu;
      sol.status          = QpStatus::Solved;
      sol.objective       = objective(p_, sol.z);
      return sol;
    }

    // infeasibility certificates, original units
    {
      const Vec dy  = E_.cwiseProduct(y_ - y_prev) / c_;
      const double ndy = inf_norm(dy);
      if (ndy > s_.eps_abs) {
        const double thr = s_.eps_prim_inf * ndy;
        if (inf_norm(p_.A.transpose() * dy) <= thr) {
          double support = 0.0;
          for (Eigen::Index i = 0; i < n_; ++i) {
            if (dy(i) > thr) {
              support += std::isfinite(p_.u(i)) ? p_.u(i) * dy(i) : kInf;
            } else if (dy(i) < -thr) {
              support += std::isfinite(p_.l(i)) ? p_.l(i) * dy(i) : kInf;
            }
          }
          if (support < -thr) {
            sol.status    = QpStatus::PrimalInfeasible;
            sol.z         = zu;
            sol.y         = dy;
            sol.objective = kInf;
            return sol;
          }
        }
      }

      const Vec dx  = D_.cwiseProduct(x_ - x_prev);
      const double ndx = inf_norm(dx);
      if (ndx > s_.eps_abs) {
        const double thr = s_.eps_dual_inf * ndx;
        bool cert        = p_.q.dot(dx) < -thr && inf_norm(p_.H * dx) <= thr;
        if (cert) {
          const Vec Adx = p_.A * dx;
          for (Eigen::Index i = 0; i < n_ && cert; ++i) {
            if (std::isfinite(p_.u(i)) && Adx(i) > thr) { cert = false; }
            if (std::isfinite(p_.l(i)) && Adx(i) < -thr) { cert = false; }
          }
        }
        if (cert) {
          sol.status    = QpStatus::DualInfeasible;
          sol.z         = dx;
          sol.y         = yu;
          sol.objective = -kInf;
          return sol;
        }
      }
    }

    if (s_.adaptive_rho && n_ > 0) {
      const Vec Ax   = As_ * x_;
      const Vec Hx   = Hs_ * x_;
      const Vec Atys = As_.transpose() * y_;
      const double ps = inf_norm(Ax - z_) / std::max({inf_norm(Ax), inf_norm(z_), 1e-30});
      const double ds = inf_norm(Hx + qs_ + Atys) / std::max({inf_norm(Hx), inf_norm(Atys), inf_norm(qs_), 1e-30});
      double rho_new = rho_bar_ * std::sqrt(ps / std::max(ds, 1e-30));
      rho_new        = std::clamp(rho_new, kRhoMin, kRhoMax);
      if (std::isfinite(rho_new) && (rho_new > 5.0 * rho_bar_ || rho_new < 0.2 * rho_bar_)) {
        rho_bar_ = rho_new;
        init_rho();
        if (!factor()) { throw std::runtime_error("QP: KKT refactorization failed"); }
      }
    }
  }

  Vec zu, yu;
  unscaled(zu, yu);
  if (s_.polish) {
    const auto pr = polish(classify());
    if (pr.ok) { return finish_polished(pr, s_.max_iter); }
  }
  if (s_.ipm_fallback && m_ + n_ <= s_.ipm_max_dim) {
    auto ipm = solve_ipm(p_, s_, warm != nullptr && warm->z.size() == m_ ? warm->z : Vec());
    if (ipm.status == QpStatus::Solved) {
      ipm.iterations += s_.max_iter;
      return ipm;
    }
  }
  sol.z         = zu;
  sol.y         = yu;
  sol.status    = QpStatus::MaxIter;
  sol.objective = objective(p_, sol.z);
  return sol;
}

}  // namespace

std::string_view to_string(QpStatus s)
{
  switch (s) {
  case QpStatus::Solved: return "solved";
  case QpStatus::MaxIter: return "max_iter";
  case QpStatus::PrimalInfeasible: return "primal_infeasible";
  case QpStatus::DualInfeasible: return "dual_infeasible";
  }
  return "unknown";
}

void QpProblem::validate() const
{
  const auto m = q.size();
  const auto n = l.size();
  if (H.rows() != m || H.cols() != m) { throw std::invalid_argument("QP: H must be m x m"); }
  if (A.cols() != m || A.rows() != n || u.size() != n) { throw std::invalid_argument("QP: A, l, u dimensions"); }
  if (!q.allFinite()) { throw std::invalid_argument("QP: q must be finite"); }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isnan(l(i)) || std::isnan(u(i))) { throw std::invalid_argument("QP: NaN bound"); }
    if (l(i) > u(i)) { throw std::invalid_argument("QP: l > u in row " + std::to_string(i)); }
  }
  const SparseMatrix Ht = H.transpose();
  const double hmax     = H.nonZeros() ? Eigen::Map<const Eigen::VectorXd>(H.valuePtr(), H.nonZeros()).cwiseAbs().maxCoeff() : 0.0;
  if ((H - Ht).norm() > 1e-10 * std::max(1.0, hmax)) { throw std::invalid_argument("QP: H is not symmetric"); }
  if (H.nonZeros() > 0) {
    SparseMatrix Hr = H;
    for (Eigen::Index j = 0; j < m; ++j) { Hr.coeffRef(j, j) += 1e-10 * std::max(1.0, hmax); }
    Ldlt f(Hr);
    if (f.info() != Eigen::Success || f.vectorD().minCoeff() < 0.0) {
      throw std::invalid_argument("QP: H is not positive semidefinite");
    }
  }
}

QpSolution solve_qp(const QpProblem & p, const QpSettings & settings, const QpWarmStart * warm)
{
  p.validate();
  AdmmSolver solver(p, settings);
  auto sol = solver.run(warm);
  if (sol.status == QpStatus::Solved) {
    // Rows with a single coefficient are simple bounds; project onto them exactly.
    const Eigen::SparseMatrix<double, Eigen::RowMajor> Ar = p.A;
    bool moved = false;
    for (Eigen::Index i = 0; i < Ar.rows(); ++i) {
      if (Ar.row(i).nonZeros() != 1) { continue; }
      Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Ar, i);
      const double a = it.value();
      if (a == 0.0) { continue; }
      double lo = p.l(i) / a, hi = p.u(i) / a;
      if (a < 0.0) { std::swap(lo, hi); }
      const double v = std::clamp(sol.z(it.col()), lo, hi);
      if (v != sol.z(it.col())) {
        sol.z(it.col()) = v;
        moved           = true;
      }
    }
    if (moved) {
      const Vec Az        = p.A * sol.z;
      sol.primal_residual = inf_norm(Az - project_box(Az, p.l, p.u));
      sol.objective       = objective(p, sol.z);
    }
  }
  return sol;
}

QpSolution solve_lp(const Eigen::VectorXd & c, const SparseMatrix & A, const Eigen::VectorXd & l, const Eigen::VectorXd & u,
  const QpSettings & settings)
{
  QpProblem p;
  p.H.resize(c.size(), c.size());
  p.q = c;
  p.A = A;
  p.l = l;
  p.u = u;
  return solve_qp(p, settings);
}

KktResiduals kkt_residuals(const QpProblem & p, const QpSolution & s)
{
  if (s.z.size() != p.num_variables() || s.y.size() != p.num_constraints()) {
    throw std::invalid_argument("kkt_residuals: dimension mismatch");
  }
  KktResiduals r;
  const Vec Az = p.A * s.z;
  r.primal     = inf_norm(Az - project_box(Az, p.l, p.u));
  r.dual       = inf_norm(p.H * s.z + p.q + p.A.transpose() * s.y);
  for (Eigen::Index i = 0; i < p.num_constraints(); ++i) {
    const double yi = s.y(i);
    double gap      = 0.0;
    if (yi > 0.0) { gap = std::isfinite(p.u(i)) ? yi * std::abs(p.u(i) - Az(i)) : kInf; }
    if (yi < 0.0) { gap = std::isfinite(p.l(i)) ? -yi * std::abs(Az(i) - p.l(i)) : kInf; }
    r.complementarity = std::max(r.complementarity, gap);
  }
  return r;
}

namespace {

void write_values(std::ostream & os, const char * tag, const Vec & v)
{
  os << tag;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isinf(v(i))) {
      os << (v(i) > 0 ? " inf" : " -inf");
    } else {
      os << ' ' << v(i);
    }
  }
  os << '\n';
}

void write_sparse(std::ostream & os, const char * tag, const SparseMatrix & M)
{
  os << tag << ' ' << M.nonZeros() << '\n';
  for (Eigen::Index k = 0; k < M.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(M, k); it; ++it) { os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n'; }
  }
}

double parse_value(const std::string & tok)
{
  if (tok == "inf") { return kInf; }
  if (tok == "-inf") { return -kInf; }
  return std::stod(tok);
}

std::istringstream expect_line(std::istream & is, const std::string & tag)
{
  std::string line;
  if (!std::getline(is, line)) { throw std::runtime_error("QP dump: missing '" + tag + "' section"); }
  std::istringstream ls(line);
  std::string head;
  ls >> head;
  if (head != tag) { throw std::runtime_error("QP dump: expected '" + tag + "', got '" + head + "'"); }
  return ls;
}

Vec read_values(std::istream & is, const std::string & tag, Eigen::Index n)
{
  auto ls = expect_line(is, tag);
  Vec v(n);
  std::string tok;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(ls >> tok)) { throw std::runtime_error("QP dump: short '" + tag + "' line"); }
    v(i) = parse_value(tok);
  }
  return v;
}

SparseMatrix read_sparse(std::istream & is, const std::string & tag, Eigen::Index rows, Eigen::Index cols)
{
  auto ls = expect_line(is, tag);
  long nnz = 0;
  ls >> nnz;
  std::vector<Triplet> trip;
  for (long k = 0; k < nnz; ++k) {
    long r, c;
    double v;
    if (!(is >> r >> c >> v)) { throw std::runtime_error("QP dump: bad triplet in '" + tag + "'"); }
    trip.emplace_back(r, c, v);
  }
  is >> std::ws;
  SparseMatrix M(rows, cols);
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

}  // namespace

void write_problem(std::ostream & os, const QpProblem & p)
{
  const auto old = os.precision(17);
  os << "plmpc-qp 1\n";
  os << "dims " << p.num_variables() << ' ' << p.num_constraints() << '\n';
  write_sparse(os, "H", p.H);
  write_sparse(os, "A", p.A);
  write_values(os, "q", p.q);
  write_values(os, "l", p.l);
  write_values(os, "u", p.u);
  os << "constant " << p.constant << '\n';
  os.precision(old);
}

QpProblem read_problem(std::istream & is)
{
  {
    auto ls = expect_line(is, "plmpc-qp");
    int version = 0;
    ls >> version;
    if (version != 1) { throw std::runtime_error("QP dump: unsupported version"); }
  }
  auto dims = expect_line(is, "dims");
  Eigen::Index m = 0, n = 0;
  dims >> m >> n;
  QpProblem p;
  p.H = read_sparse(is, "H", m, m);
  p.A = read_sparse(is, "A", n, m);
  p.q = read_values(is, "q", m);
  p.l = read_values(is, "l", n);
  p.u = read_values(is, "u", n);
  auto cl = expect_line(is, "constant");
  cl >> p.constant;
  return p;
}

}  // namespace plmpc
