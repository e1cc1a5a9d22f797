#ifndef LINEFLOW_TEST_ORACLE_HELPERS_HPP
#define LINEFLOW_TEST_ORACLE_HELPERS_HPP

// Test-only oracles kept independent of the library solver paths: dense
// linear algebra straight from the pointwise kernels, brute-force searches,
// and fixed probe grids.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <complex>
#include <utility>
#include <vector>

#include "lineflow/genie_inter.hpp"
#include "lineflow/kernels.hpp"

namespace oracle {

inline const std::array<std::pair<double, double>, 10>& z_grid() {
  static const std::array<std::pair<double, double>, 10> grid = {{{1.0, 1.0},
                                                                  {0.5, 0.5},
                                                                  {0.5, 1.0},
                                                                  {1.0, 0.5},
                                                                  {1.5, 1.0},
                                                                  {1.0, 1.5},
                                                                  {1.5, 1.5},
                                                                  {0.7, 1.3},
                                                                  {1.3, 0.7},
                                                                  {2.0, 2.0}}};
  return grid;
}

/// Direct kernel-side PGF: sum over a wide delta box of P(delta|state) z^delta.
template <class Z>
Z kernel_sum_pgf(const lineflow::GenieState& s, const Z& z1, const Z& z2,
                 const lineflow::LineNetworkParams& params) {
  const int x1 = lineflow::poisson_tail_cutoff(params.lambda1, 1e-16) + 8;
  const int x2 = lineflow::poisson_tail_cutoff(params.lambda2, 1e-16) + 8;
  Z acc(0);
  for (int d1 = -1; d1 <= x1; ++d1) {
    for (int d2 = -1; d2 <= x2 + 1; ++d2) {
      const double p = lineflow::transition_prob(s, d1, d2, params);
      if (p == 0.0) continue;
      acc += Z(p) * std::pow(z1, d1) * std::pow(z2, d2);
    }
  }
  return acc;
}

/// Row sum of the pointwise kernel over a wide delta box.
inline double kernel_row_sum(const lineflow::GenieState& s,
                             const lineflow::LineNetworkParams& params) {
  const int x1 = lineflow::poisson_tail_cutoff(params.lambda1, 5e-14) + 4;
  const int x2 = lineflow::poisson_tail_cutoff(params.lambda2, 5e-14) + 4;
  double acc = 0.0;
  for (int d1 = -1; d1 <= x1; ++d1)
    for (int d2 = -1; d2 <= x2 + 1; ++d2) acc += lineflow::transition_prob(s, d1, d2, params);
  return acc;
}

/// Dense reflected-cap chain assembled from the pointwise kernel alone.
inline Eigen::MatrixXd dense_reflected_chain(const lineflow::LineNetworkParams& params,
                                             int cap) {
  const int side = cap + 1;
  const int x1 = lineflow::poisson_tail_cutoff(params.lambda1, 1e-15) + 6;
  const int x2 = lineflow::poisson_tail_cutoff(params.lambda2, 1e-15) + 6;
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(side * side, side * side);
  for (int i1 = 0; i1 < side; ++i1) {
    for (int i2 = 0; i2 < side; ++i2) {
      const int from = i1 * side + i2;
      double acc = 0.0;
      int best_to = from;
      for (int d1 = -1; d1 <= x1; ++d1) {
        for (int d2 = -1; d2 <= x2 + 1; ++d2) {
          const double p = lineflow::transition_prob({i1, i2}, d1, d2, params);
          if (p == 0.0) continue;
          const int t1 = std::min(i1 + d1, cap);
          const int t2 = std::min(i2 + d2, cap);
          P(from, t1 * side + t2) += p;
          if (t1 == cap || t2 == cap) best_to = t1 * side + t2;
          acc += p;
        }
      }
      P(from, best_to) += std::max(0.0, 1.0 - acc);  // bank the enumeration rest
    }
  }
  return P;
}

/// Stationary distribution of a dense row-stochastic matrix by QR.
inline Eigen::VectorXd dense_stationary(const Eigen::MatrixXd& P) {
  const Eigen::Index n = P.rows();
  Eigen::MatrixXd A = P.transpose() - Eigen::MatrixXd::Identity(n, n);
  A.row(0).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs[0] = 1.0;
  Eigen::VectorXd pi = A.colPivHouseholderQr().solve(rhs);
  pi = pi.cwiseMax(0.0);
  return pi / pi.sum();
}

/// Central finite difference of a scalar function.
template <class F>
double central_diff(F f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Completion time/energy of a fixed batch policy through the fundamental
/// matrix (I - Q)^{-1} of the absorbing chain; solver-independent route.
inline double completion_by_fundamental_matrix(const lineflow::PolicyTable& policy,
                                               const lineflow::BatchConfig& config,
                                               const lineflow::HdState& start,
                                               bool energy) {
  const int m1 = config.m1;
  const int top = config.m1 + config.m2;
  const auto idx = [&](int turn, int i1, int i2) {
    return (turn * (m1 + 1) + i1) * (top + 1) + i2;
  };
  const int n = 2 * (m1 + 1) * (top + 1);
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  for (int turn = 0; turn <= 1; ++turn) {
    for (int i1 = 0; i1 <= m1; ++i1) {
      for (int i2 = 0; i2 + i1 <= top; ++i2) {
        const int from = idx(turn, i1, i2);
        if (i1 == 0 && i2 == 0) {
          P(from, from) = 1.0;
          continue;
        }
        if (turn == 0) {
          const int burst = policy.burst1(i1);
          c[from] = i1 == 0 ? 0.0 : (energy ? burst * config.energy.e1 : burst);
          for (int m = 0; m <= i1; ++m)
            P(from, idx(1, i1 - m, i2 + m)) += lineflow::service_pmf(m, i1, burst, config.p1);
        } else {
          const int burst = policy.burst2(i1, i2);
          c[from] = i2 == 0 ? 0.0
                            : (energy ? burst * config.energy.e2 + config.energy.e_ack
                                      : burst + 1.0);
          for (int m = 0; m <= i2; ++m)
            P(from, idx(0, i1, i2 - m)) += lineflow::service_pmf(m, i2, burst, config.p2);
        }
      }
    }
  }
  // Restrict to transient states and solve (I - Q) t = c.
  std::vector<int> keep;
  for (int turn = 0; turn <= 1; ++turn)
    for (int i1 = 0; i1 <= m1; ++i1)
      for (int i2 = 0; i2 + i1 <= top; ++i2)
        if (i1 + i2 > 0) keep.push_back(idx(turn, i1, i2));
  const int k = static_cast<int>(keep.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd rhs(k);
  for (int r = 0; r < k; ++r) {
    rhs[r] = c[keep[static_cast<size_t>(r)]];
    for (int cc = 0; cc < k; ++cc)
      A(r, cc) = (r == cc ? 1.0 : 0.0) -
                 P(keep[static_cast<size_t>(r)], keep[static_cast<size_t>(cc)]);
  }
  const Eigen::VectorXd t = A.partialPivLu().solve(rhs);
  const int s = idx(start.turn == lineflow::Turn::S1 ? 0 : 1, start.i1, start.i2);
  if (start.i1 == 0 && start.i2 == 0) return 0.0;
  for (int r = 0; r < k; ++r)
    if (keep[static_cast<size_t>(r)] == s) return t[r];
  throw std::logic_error("start state outside the reachable wedge");
}

/// Worst deviation of the absorption-probability row sums (N*R of the
/// fundamental-matrix decomposition) from one.
inline double absorption_row_sum_error(const lineflow::PolicyTable& policy,
                                       const lineflow::BatchConfig& config) {
  const int m1 = config.m1;
  const int top = config.m1 + config.m2;
  std::vector<std::pair<int, std::pair<int, int>>> transient;  // (turn, (i1,i2))
  for (int turn = 0; turn <= 1; ++turn)
    for (int i1 = 0; i1 <= m1; ++i1)
      for (int i2 = 0; i2 + i1 <= top; ++i2)
        if (i1 + i2 > 0) transient.push_back({turn, {i1, i2}});
  const auto pos = [&](int turn, int i1, int i2) -> int {
    for (size_t k = 0; k < transient.size(); ++k)
      if (transient[k].first == turn && transient[k].second.first == i1 &&
          transient[k].second.second == i2)
        return static_cast<int>(k);
    return -1;
  };
  const int k = static_cast<int>(transient.size());
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(k);  // one-step absorption mass
  for (int row = 0; row < k; ++row) {
    const auto [turn, ij] = transient[static_cast<size_t>(row)];
    const auto [i1, i2] = ij;
    if (turn == 0) {
      const int burst = policy.burst1(i1);
      for (int m = 0; m <= i1; ++m) {
        const double q = lineflow::service_pmf(m, i1, burst, config.p1);
        Q(row, pos(1, i1 - m, i2 + m)) += q;  // (0,0) unreachable from an S1 turn
      }
    } else {
      const int burst = policy.burst2(i1, i2);
      for (int m = 0; m <= i2; ++m) {
        const double q = lineflow::service_pmf(m, i2, burst, config.p2);
        if (i1 == 0 && i2 - m == 0)
          r[row] += q;
        else
          Q(row, pos(0, i1, i2 - m)) += q;
      }
    }
  }
  const Eigen::VectorXd absorb =
      (Eigen::MatrixXd::Identity(k, k) - Q).partialPivLu().solve(r);
  return (absorb - Eigen::VectorXd::Ones(k)).cwiseAbs().maxCoeff();
}

/// Exact optimum over all policy tables for an additive batch objective
/// (time or energy) by Gauss-Seidel value iteration on the stochastic
/// shortest path; every table with bursts in [1..n_max] is dominated by the
/// fixed point, so this equals brute force over tables.
inline double batch_optimal_objective(const lineflow::BatchConfig& config, int n_max,
                                      bool energy) {
  const int m1 = config.m1;
  const int top = config.m1 + config.m2;
  const auto idx = [&](int turn, int i1, int i2) {
    return (turn * (m1 + 1) + i1) * (top + 1) + i2;
  };
  std::vector<double> v(static_cast<size_t>(2 * (m1 + 1) * (top + 1)), 0.0);
  for (int sweep = 0; sweep < 100000; ++sweep) {
    double delta = 0.0;
    for (int level = 1; level <= top; ++level) {
      for (int i1 = std::max(0, level - top); i1 <= std::min(level, m1); ++i1) {
        const int i2 = level - i1;
        for (int turn = 1; turn >= 0; --turn) {
          const int from = idx(turn, i1, i2);
          double best = std::numeric_limits<double>::infinity();
          if (turn == 0 && i1 == 0) {
            best = v[static_cast<size_t>(idx(1, i1, i2))];
          } else if (turn == 1 && i2 == 0) {
            best = v[static_cast<size_t>(idx(0, i1, i2))];
          } else if (turn == 0) {
            for (int n = 1; n <= n_max; ++n) {
              double acc = energy ? n * config.energy.e1 : n;
              for (int m = 0; m <= i1; ++m)
                acc += lineflow::service_pmf(m, i1, n, config.p1) *
                       v[static_cast<size_t>(idx(1, i1 - m, i2 + m))];
              best = std::min(best, acc);
            }
          } else {
            for (int n = 1; n <= n_max; ++n) {
              double acc =
                  energy ? n * config.energy.e2 + config.energy.e_ack : n + 1.0;
              for (int m = 0; m <= i2; ++m)
                acc += lineflow::service_pmf(m, i2, n, config.p2) *
                       v[static_cast<size_t>(idx(0, i1, i2 - m))];
              best = std::min(best, acc);
            }
          }
          delta = std::max(delta, std::abs(best - v[static_cast<size_t>(from)]));
          v[static_cast<size_t>(from)] = best;
        }
      }
    }
    if (delta < 1e-12) break;
  }
  return v[static_cast<size_t>(idx(0, m1, config.m2))];
}

}  // namespace oracle

#endif  // LINEFLOW_TEST_ORACLE_HELPERS_HPP
