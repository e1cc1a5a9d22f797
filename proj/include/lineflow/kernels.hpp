#ifndef LINEFLOW_KERNELS_HPP
#define LINEFLOW_KERNELS_HPP

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "lineflow/errors.hpp"

// Stochastic primitives shared by every chain model: Poisson arrivals per
// slot window, binomial erasure service, and the one-slot transfer offset of
// the relay queue. All evaluation is done in log space so that bursts of a
// few hundred slots stay well-conditioned.

namespace lineflow {

/// Per-slot energy prices. E_ack is only charged by the half-duplex models.
struct EnergyParams {
  double e1 = 1.0;
  double e2 = 1.0;
  double e_ack = 0.0;

  void validate() const {
    if (!(e1 >= 0.0)) throw std::invalid_argument("E1 must be >= 0");
    if (!(e2 >= 0.0)) throw std::invalid_argument("E2 must be >= 0");
    if (!(e_ack >= 0.0)) throw std::invalid_argument("E_ack must be >= 0");
  }
};

/// Full scenario description of the two-source erasure line S1 -> S2 -> R.
struct LineNetworkParams {
  double lambda1 = 0.0;  // packets/slot generated at S1
  double lambda2 = 0.0;  // packets/slot generated at S2
  double p1 = 0.0;       // erasure probability S1 -> S2
  double p2 = 0.0;       // erasure probability S2 -> R
  EnergyParams energy{};

  void validate() const {
    if (!(lambda1 >= 0.0)) throw std::invalid_argument("lambda1 must be >= 0");
    if (!(lambda2 >= 0.0)) throw std::invalid_argument("lambda2 must be >= 0");
    if (!(p1 >= 0.0 && p1 < 1.0)) throw std::invalid_argument("p1 must be in [0,1)");
    if (!(p2 >= 0.0 && p2 < 1.0)) throw std::invalid_argument("p2 must be in [0,1)");
    energy.validate();
  }

  bool stable_node1() const { return lambda1 < 1.0 - p1; }
  bool stable_node2() const { return lambda1 + lambda2 < 1.0 - p2; }
  bool stable() const { return stable_node1() && stable_node2(); }
};

namespace detail {

inline double log_choose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace detail

/// log of the Poisson(lambda*b) pmf at x; -inf where the mass is zero.
inline double arrival_log_pmf(int x, double slots, double lambda) {
  if (x < 0) return -std::numeric_limits<double>::infinity();
  const double mean = lambda * slots;
  if (mean == 0.0) {
    return x == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  return -mean + x * std::log(mean) - std::lgamma(x + 1.0);
}

/// Probability of x packet arrivals over b slots at rate lambda.
inline double arrival_pmf(int x, int b, double lambda) {
  if (x < 0) throw std::invalid_argument("arrival_pmf: x must be >= 0");
  if (b < 0) throw std::invalid_argument("arrival_pmf: b must be >= 0");
  if (!(lambda >= 0.0)) throw std::invalid_argument("arrival_pmf: lambda must be >= 0");
  return std::exp(arrival_log_pmf(x, static_cast<double>(b), lambda));
}

/// Smallest X such that the Poisson(mean) CDF at X is >= 1 - eps_tail.
/// This is the shared tail-truncation rule for every chain construction.
inline int poisson_tail_cutoff(double mean, double eps_tail) {
  if (!(mean >= 0.0)) throw std::invalid_argument("poisson_tail_cutoff: mean must be >= 0");
  if (!(eps_tail > 0.0)) throw std::invalid_argument("poisson_tail_cutoff: eps_tail must be > 0");
  if (mean == 0.0) return 0;
  double cdf = 0.0;
  const int hard = static_cast<int>(mean + 20.0 * std::sqrt(mean) + 60.0);
  for (int x = 0; x <= hard; ++x) {
    cdf += std::exp(-mean + x * std::log(mean) - std::lgamma(x + 1.0));
    if (cdf >= 1.0 - eps_tail) return x;
  }
  return hard;
}

inline double binomial_pmf(int y, int b, double success) {
  if (y < 0 || y > b) return 0.0;
  if (success <= 0.0) return y == 0 ? 1.0 : 0.0;
  if (success >= 1.0) return y == b ? 1.0 : 0.0;
  const double lp = detail::log_choose(b, y) + y * std::log(success) +
                    (b - y) * std::log1p(-success);
  return std::exp(lp);
}

/// Probability that y dof are successfully carried by a burst of b coded
/// packets when the sender holds x dof and the link erases with prob p.
/// y < min(x,b) is plain binomial; y = min(x,b) absorbs the upper tail
/// (more successful slots than useful dof deliver nothing new).
inline double service_pmf(int y, int x, int b, double p) {
  if (y < 0 || x < 0 || b < 0)
    throw std::invalid_argument("service_pmf: y, x, b must be >= 0");
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("service_pmf: p must be in [0,1)");
  if (x == 0) return y == 0 ? 1.0 : 0.0;
  const int top = std::min(x, b);
  if (y > top) return 0.0;
  const double q = 1.0 - p;
  if (y < top) return binomial_pmf(y, b, q);
  double tail = 0.0;
  for (int m = top; m <= b; ++m) tail += binomial_pmf(m, b, q);
  return std::min(tail, 1.0);
}

/// Expected dof carried: sum_m m * service_pmf(m, x, b, p).
inline double service_mean(int x, int b, double p) {
  double s = 0.0;
  const int top = std::min(x, b);
  for (int m = 1; m <= top; ++m) s += m * service_pmf(m, x, b, p);
  return s;
}

/// Net one-slot change of the relay queue caused by link successes:
/// +1 when only S1 delivers, -1 when only S2 delivers, 0 otherwise.
inline int transfer_offset(int y1, int y2) {
  if ((y1 != 0 && y1 != 1) || (y2 != 0 && y2 != 1))
    throw std::invalid_argument("transfer_offset: y1, y2 must be 0 or 1");
  return y1 - y2;
}

/// One-slot service split d_(0)|x and d_(1)|x for a single coded packet.
struct ServiceSplit {
  double d0 = 1.0;  // no dof delivered this slot
  double d1 = 0.0;  // one dof delivered this slot
};

inline ServiceSplit one_slot_service(int dof, double p) {
  if (dof < 0) throw std::invalid_argument("one_slot_service: dof must be >= 0");
  if (dof == 0) return {1.0, 0.0};
  return {p, 1.0 - p};
}

}  // namespace lineflow

#endif  // LINEFLOW_KERNELS_HPP
