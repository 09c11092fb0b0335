#pragma once

// Brute-force reference computations used only by the tests. They share no
// code path with the solvers they check.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace plmpc::oracle {

/**
 * Optimal value of min ½zᵀHz + qᵀz s.t. l ≤ Az ≤ u by enumerating every
 * assignment of each row to {inactive, lower, upper}, solving the equality
 * KKT system and keeping the KKT-consistent candidates. Returns nullopt when
 * no KKT point exists (infeasible or unbounded).
 */
inline std::optional<double> qp_active_set(
  const Eigen::MatrixXd & H,
  const Eigen::VectorXd & q,
  const Eigen::MatrixXd & A,
  const Eigen::VectorXd & l,
  const Eigen::VectorXd & u,
  double tol = 1e-9)
{
  const int m = static_cast<int>(q.size());
  const int p = static_cast<int>(l.size());
  std::vector<int> state(p, 0);
  std::optional<double> best;

  long total = 1;
  for (int i = 0; i < p; ++i) { total *= 3; }

  for (long code = 0; code < total; ++code) {
    long c = code;
    bool skip = false;
    std::vector<int> rows;
    std::vector<double> rhs;
    for (int i = 0; i < p; ++i) {
      state[i] = static_cast<int>(c % 3);
      c /= 3;
      if (state[i] == 1) {
        if (!std::isfinite(l(i))) { skip = true; }
        rows.push_back(i);
        rhs.push_back(l(i));
      } else if (state[i] == 2) {
        if (!std::isfinite(u(i)) || l(i) == u(i)) { skip = true; }
        rows.push_back(i);
        rhs.push_back(u(i));
      }
    }
    if (skip) { continue; }
    const int k = static_cast<int>(rows.size());
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(m + k, m + k);
    Eigen::VectorXd b(m + k);
    K.topLeftCorner(m, m) = H;
    for (int r = 0; r < k; ++r) {
      K.block(0, m + r, m, 1) = A.row(rows[r]).transpose();
      K.block(m + r, 0, 1, m) = A.row(rows[r]);
      b(m + r) = rhs[r];
    }
    b.head(m) = -q;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(K);
    const Eigen::VectorXd sol = cod.solve(b);
    if ((K * sol - b).cwiseAbs().maxCoeff() > tol) { continue; }
    const Eigen::VectorXd z = sol.head(m);
    const Eigen::VectorXd Az = A * z;
    bool ok = true;
    for (int i = 0; i < p && ok; ++i) {
      if (Az(i) < l(i) - tol || Az(i) > u(i) + tol) { ok = false; }
    }
    for (int r = 0; r < k && ok; ++r) {
      const double y = sol(m + r);
      if (state[rows[r]] == 1 && y > tol && l(rows[r]) != u(rows[r])) { ok = false; }
      if (state[rows[r]] == 2 && y < -tol) { ok = false; }
    }
    if (!ok) { continue; }
    const double obj = 0.5 * z.dot(H * z) + q.dot(z);
    if (!best || obj < *best) { best = obj; }
  }
  return best;
}

/**
 * min Jᵀλ s.t. Dλ = x, 1ᵀλ = 1, λ ≥ 0 by enumerating vertex subsets of size
 * ≤ n+1 with affinely independent columns. A basic optimal solution of the LP
 * lives on one of them.
 */
inline std::optional<double> q_function_enum(const Eigen::MatrixXd & D, const Eigen::VectorXd & J, const Eigen::VectorXd & x)
{
  const int n = static_cast<int>(D.rows());
  const int M = static_cast<int>(D.cols());
  std::optional<double> best;
  for (unsigned mask = 1; mask < (1u << M); ++mask) {
    std::vector<int> idx;
    for (int j = 0; j < M; ++j) {
      if (mask & (1u << j)) { idx.push_back(j); }
    }
    const int k = static_cast<int>(idx.size());
    if (k > n + 1) { continue; }
    Eigen::MatrixXd S(n + 1, k);
    for (int c = 0; c < k; ++c) {
      S.block(0, c, n, 1) = D.col(idx[c]);
      S(n, c)             = 1.0;
    }
    Eigen::FullPivHouseholderQR<Eigen::MatrixXd> qr(S);
    if (qr.rank() < k) { continue; }
    Eigen::VectorXd rhs(n + 1);
    rhs.head(n) = x;
    rhs(n)      = 1.0;
    const Eigen::VectorXd lam = qr.solve(rhs);
    if ((S * lam - rhs).cwiseAbs().maxCoeff() > 1e-10) { continue; }
    if (lam.minCoeff() < -1e-12) { continue; }
    double v = 0.0;
    for (int c = 0; c < k; ++c) { v += lam(c) * J(idx[c]); }
    if (!best || v < *best) { best = v; }
  }
  return best;
}

}  // namespace plmpc::oracle
