#ifndef LINEFLOW_MARKOV_HPP
#define LINEFLOW_MARKOV_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "lineflow/errors.hpp"
#include "lineflow/kernels.hpp"

// Finite row-stochastic chains and their solvers. Chains are assembled with
// per-coordinate Poisson enumeration: arrival mass is enumerated up to the
// shared tail cutoff, and the remainder is banked into a single bucket entry.
// A bucket forced by the state cap lands exactly where the reflected chain
// wants it; a tail bucket inside the cap misplaces at most eps_tail of mass,
// which is what tail_mass bookkeeping records. Rows therefore sum to one up
// to floating-point rounding without any renormalisation.

namespace lineflow {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

/// One enumerated arrival coordinate: (target level, probability) pairs.
/// `misplaced` is the in-cap bucket mass (<= eps_tail by construction).
struct ArrivalSpread {
  std::vector<std::pair<int, double>> mass;
  double misplaced = 0.0;
};

/// Spread Poisson(mean) arrivals from base level onto [0, cap], bucketing
/// the enumeration remainder at min(base + cutoff + 1, cap).
inline ArrivalSpread spread_arrivals(int base, double mean, int cap, double eps_tail) {
  ArrivalSpread out;
  if (base >= cap) {
    out.mass.emplace_back(cap, 1.0);
    return out;
  }
  const int cutoff = poisson_tail_cutoff(mean, eps_tail);
  const int enumerated = std::min(cutoff + 1, cap - base);
  double acc = 0.0;
  out.mass.reserve(static_cast<size_t>(enumerated) + 1);
  for (int x = 0; x < enumerated; ++x) {
    const double px = std::exp(arrival_log_pmf(x, 1.0, mean));
    acc += px;
    if (px > 0.0) out.mass.emplace_back(base + x, px);
  }
  const double rest = std::max(0.0, 1.0 - acc);
  if (rest > 0.0) {
    const int bucket = std::min(base + enumerated, cap);
    out.mass.emplace_back(bucket, rest);
    if (bucket < cap) out.misplaced = rest;
  }
  return out;
}

/// Stationary distribution plus the achieved fixed-point residual.
struct SteadyState {
  Eigen::VectorXd pi;
  double residual = 0.0;
  int cap = 0;

  double operator[](Eigen::Index i) const { return pi[i]; }
};

/// Anything that can apply y = x P for a row-stochastic P.
struct StochasticOperator {
  virtual ~StochasticOperator() = default;
  virtual Eigen::Index size() const = 0;
  virtual void multiply_left(const Eigen::VectorXd& x, Eigen::VectorXd& y) const = 0;
};

struct MatrixOperator final : StochasticOperator {
  const SparseRowMatrix* mat;
  explicit MatrixOperator(const SparseRowMatrix& m) : mat(&m) {}
  Eigen::Index size() const override { return mat->rows(); }
  void multiply_left(const Eigen::VectorXd& x, Eigen::VectorXd& y) const override {
    y.noalias() = mat->transpose() * x;
  }
};

inline double l1_residual(const StochasticOperator& op, const Eigen::VectorXd& pi) {
  Eigen::VectorXd next(pi.size());
  op.multiply_left(pi, next);
  return (next - pi).cwiseAbs().sum();
}

/// Power iteration on x <- x P with L1 renormalisation. `lazy` iterates the
/// half-step chain (P + I)/2 instead, which also converges for periodic
/// chains such as the alternating half-duplex embedding. The reported
/// residual is always measured against the true P.
inline SteadyState stationary_by_power(const StochasticOperator& op, double tol,
                                       long max_iters = 500000,
                                       const Eigen::VectorXd* warm_start = nullptr,
                                       bool lazy = false) {
  const Eigen::Index n = op.size();
  Eigen::VectorXd x;
  if (warm_start != nullptr && warm_start->size() == n && warm_start->sum() > 0.0) {
    x = warm_start->cwiseMax(0.0);
    x /= x.sum();
  } else {
    x = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  }
  Eigen::VectorXd y(n);
  double res = std::numeric_limits<double>::infinity();
  double best_res = res;
  long stalled = 0;
  for (long it = 0; it < max_iters; ++it) {
    op.multiply_left(x, y);  // y = x P
    res = (y - x).cwiseAbs().sum();
    if (res <= tol) {
      SteadyState ss;
      ss.pi = x;
      ss.residual = res;
      return ss;
    }
    if (res < best_res * 0.9999) {
      best_res = res;
      stalled = 0;
    } else if (++stalled > 3000) {
      break;  // rounding floor reached before tolerance
    }
    if (lazy) y = 0.5 * (x + y);
    y = y.cwiseMax(0.0);
    const double s = y.sum();
    if (!(s > 0.0)) throw SolverError("power iteration lost all mass", 1.0);
    y /= s;
    x.swap(y);
  }
  throw SolverError("power iteration did not reach tolerance", res);
}

/// Direct stationary solve of pi P = pi, sum(pi) = 1 via sparse LU on the
/// transposed balance equations with one row replaced by normalisation.
/// Falls back to (lazy) power iteration when factorisation fails.
inline SteadyState stationary_distribution(const SparseRowMatrix& P, double tol = 1e-12,
                                           const Eigen::VectorXd* warm_start = nullptr) {
  const Eigen::Index n = P.rows();
  MatrixOperator op(P);
  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(P.nonZeros()) + 2 * static_cast<size_t>(n));
  for (Eigen::Index r = 0; r < P.outerSize(); ++r) {
    for (SparseRowMatrix::InnerIterator it(P, r); it; ++it) {
      if (it.col() == 0) continue;  // row 0 of A becomes the normalisation
      trips.emplace_back(static_cast<int>(it.col()), static_cast<int>(r), it.value());
    }
  }
  for (Eigen::Index j = 1; j < n; ++j)
    trips.emplace_back(static_cast<int>(j), static_cast<int>(j), -1.0);
  for (Eigen::Index j = 0; j < n; ++j) trips.emplace_back(0, static_cast<int>(j), 1.0);

  Eigen::SparseMatrix<double> A(n, n);
  A.setFromTriplets(trips.begin(), trips.end());
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs[0] = 1.0;

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.analyzePattern(A);
  lu.factorize(A);
  if (lu.info() == Eigen::Success) {
    Eigen::VectorXd pi = lu.solve(rhs);
    if (lu.info() == Eigen::Success) {
      pi = pi.cwiseMax(0.0);
      const double s = pi.sum();
      if (s > 0.0) {
        pi /= s;
        SteadyState ss;
        ss.pi = pi;
        ss.residual = l1_residual(op, pi);
        if (ss.residual <= tol) return ss;
        try {
          return stationary_by_power(op, tol, 500000, &pi, /*lazy=*/true);
        } catch (const SolverError&) {
          if (ss.residual < 1e-9) return ss;
          throw;
        }
      }
    }
  }
  return stationary_by_power(op, tol, 500000, warm_start, /*lazy=*/true);
}

/// Mean first-passage slots to the target set for a dense chain; target
/// rows are treated as absorbing.
inline Eigen::VectorXd mean_first_passage(const Eigen::MatrixXd& P,
                                          const std::vector<bool>& target) {
  const Eigen::Index n = P.rows();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!target[static_cast<size_t>(i)]) keep.push_back(i);
  const Eigen::Index m = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index r = 0; r < m; ++r)
    for (Eigen::Index c = 0; c < m; ++c)
      A(r, c) = (r == c ? 1.0 : 0.0) - P(keep[r], keep[c]);
  const Eigen::VectorXd t = A.partialPivLu().solve(Eigen::VectorXd::Ones(m));
  Eigen::VectorXd full = Eigen::VectorXd::Zero(n);
  for (Eigen::Index r = 0; r < m; ++r) full[keep[r]] = t[r];
  return full;
}

}  // namespace lineflow

#endif  // LINEFLOW_MARKOV_HPP
