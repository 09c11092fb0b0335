#pragma once

#include <plmpc/qp.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <limits>
#include <random>

namespace plmpc::fixture {

inline QpProblem dense_problem(const Eigen::MatrixXd & H, const Eigen::VectorXd & q, const Eigen::MatrixXd & A,
  const Eigen::VectorXd & l, const Eigen::VectorXd & u)
{
  QpProblem p;
  p.H = H.sparseView();
  p.q = q;
  p.A = A.sparseView();
  p.l = l;
  p.u = u;
  return p;
}

struct RandomQp
{
  Eigen::MatrixXd H, A;
  Eigen::VectorXd q, l, u;
};

// Feasible by construction: bounds bracket A z0. Rank-deficient H always comes
// with box rows so the problem stays bounded.
inline RandomQp random_qp(std::mt19937 & gen)
{
  std::uniform_int_distribution<int> mdist(1, 4);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);

  RandomQp r;
  const int m    = mdist(gen);
  const bool pd  = ud(gen) < 0.6;
  const int rank = pd ? m : std::uniform_int_distribution<int>(0, m - 1)(gen);
  Eigen::MatrixXd F(m, std::max(rank, 1));
  for (int i = 0; i < F.size(); ++i) { F.data()[i] = nd(gen); }
  r.H = rank == 0 ? Eigen::MatrixXd::Zero(m, m) : Eigen::MatrixXd(F * F.transpose());
  if (pd) { r.H += 0.1 * Eigen::MatrixXd::Identity(m, m); }

  r.q.resize(m);
  for (int i = 0; i < m; ++i) { r.q(i) = 2.0 * nd(gen); }

  const int box   = pd ? 0 : m;
  const int extra = std::uniform_int_distribution<int>(pd ? 1 : 0, 6 - box)(gen);
  const int p     = box + extra;
  r.A = Eigen::MatrixXd::Zero(p, m);
  r.l.resize(p);
  r.u.resize(p);
  Eigen::VectorXd z0(m);
  for (int i = 0; i < m; ++i) { z0(i) = nd(gen); }
  for (int i = 0; i < box; ++i) {
    r.A(i, i) = 1.0;
    r.l(i)    = -3.0;
    r.u(i)    = 3.0;
    z0(i)     = std::clamp(z0(i), -2.0, 2.0);
  }
  for (int i = box; i < p; ++i) {
    for (int j = 0; j < m; ++j) { r.A(i, j) = nd(gen); }
    const double v    = r.A.row(i).dot(z0);
    const double kind = ud(gen);
    if (kind < 0.2) {
      r.l(i) = r.u(i) = v;
    } else if (kind < 0.5) {
      r.l(i) = v - ud(gen);
      r.u(i) = std::numeric_limits<double>::infinity();
    } else if (kind < 0.8) {
      r.l(i) = -std::numeric_limits<double>::infinity();
      r.u(i) = v + ud(gen);
    } else {
      r.l(i) = v - ud(gen);
      r.u(i) = v + ud(gen);
    }
  }
  return r;
}

}  // namespace plmpc::fixture
