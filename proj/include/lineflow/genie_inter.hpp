#ifndef LINEFLOW_GENIE_INTER_HPP
#define LINEFLOW_GENIE_INTER_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "lineflow/errors.hpp"
#include "lineflow/kernels.hpp"
#include "lineflow/markov.hpp"

// Genie-aided full-duplex chain with inter-session coding at the relay.
// State (i1, i2): dof at S1 not yet seen at S2, and dof at S2 not yet seen
// at R. Both links move at most one dof per slot; arrivals are Poisson.

namespace lineflow {

struct GenieState {
  int i1 = 0;
  int i2 = 0;
};

/// One-slot transition probability P(delta | state), the four-term product
/// of service splits and per-slot arrival pmfs.
inline double transition_prob(const GenieState& s, int d1, int d2,
                              const LineNetworkParams& params) {
  params.validate();
  if (s.i1 < 0 || s.i2 < 0) throw std::invalid_argument("state coordinates must be >= 0");
  const ServiceSplit l1 = one_slot_service(s.i1, params.p1);
  const ServiceSplit l2 = one_slot_service(s.i2, params.p2);
  const auto a1 = [&](int x) { return x >= 0 ? arrival_pmf(x, 1, params.lambda1) : 0.0; };
  const auto a2 = [&](int x) { return x >= 0 ? arrival_pmf(x, 1, params.lambda2) : 0.0; };

  double p = 0.0;
  // y1 = 0: S1 delivered nothing, i1 moves by arrivals only.
  p += l1.d0 * a1(d1) * (l2.d0 * a2(d2) + l2.d1 * a2(d2 + 1));
  // y1 = 1: one dof crossed to S2, so i2 gains one before its own service.
  p += l1.d1 * a1(d1 + 1) * (l2.d0 * a2(d2 - 1) + l2.d1 * a2(d2));
  return p;
}

/// Lemma-form PGF of the one-slot transition; matches
/// sum_delta P(delta|state) z1^d1 z2^d2 wherever both converge.
template <class Z>
Z genie_pgf(const GenieState& s, const Z& z1, const Z& z2, const LineNetworkParams& params) {
  params.validate();
  const ServiceSplit l1 = one_slot_service(s.i1, params.p1);
  const ServiceSplit l2 = one_slot_service(s.i2, params.p2);
  const bool z1_zero = z1 == Z(0);
  const bool z2_zero = z2 == Z(0);
  if ((l1.d1 != 0.0 && z1_zero) || ((l1.d1 != 0.0 || l2.d1 != 0.0) && z2_zero))
    throw std::domain_error("genie_pgf: z on the excluded set (negative power of zero)");

  Z link2 = Z(l2.d0);
  if (l2.d1 != 0.0) link2 += Z(l2.d1) / z2;
  Z link1 = Z(l1.d0);
  if (l1.d1 != 0.0) link1 += Z(l1.d1) * z2 / z1;
  using std::exp;
  return exp(params.lambda1 * (z1 - Z(1))) * exp(params.lambda2 * (z2 - Z(1))) * link2 * link1;
}

/// Finite reflected-cap surrogate of the infinite chain. Mass that would
/// leave [0,cap]^2 is banked on the boundary, so every row sums to one.
struct TruncatedChain {
  int cap = 0;
  SparseRowMatrix P;
  double tail_mass = 0.0;  // max per-row probability parked short of its true level
  bool params_stable = true;

  int side() const { return cap + 1; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(side()) * side(); }
  Eigen::Index index(int i1, int i2) const {
    return static_cast<Eigen::Index>(i1) * side() + i2;
  }
  GenieState state_of(Eigen::Index idx) const {
    return {static_cast<int>(idx / side()), static_cast<int>(idx % side())};
  }
  double prob(int i1, int i2, int j1, int j2) const {
    return P.coeff(index(i1, i2), index(j1, j2));
  }
};

inline TruncatedChain build_chain(const LineNetworkParams& params, int cap,
                                  double eps_tail = 1e-10) {
  params.validate();
  if (cap < 1) throw std::invalid_argument("build_chain: cap must be >= 1");
  TruncatedChain chain;
  chain.cap = cap;
  chain.params_stable = params.stable();

  const int side = cap + 1;
  const Eigen::Index n = chain.size();
  std::vector<Triplet> trips;
  std::vector<double> row(static_cast<size_t>(n), 0.0);
  std::vector<Eigen::Index> touched;
  double worst_misplaced = 0.0;

  for (int i1 = 0; i1 < side; ++i1) {
    const ServiceSplit l1 = one_slot_service(i1, params.p1);
    for (int i2 = 0; i2 < side; ++i2) {
      const ServiceSplit l2 = one_slot_service(i2, params.p2);
      const Eigen::Index from = chain.index(i1, i2);
      touched.clear();
      double misplaced = 0.0;
      const double branch[2][2] = {{l1.d0 * l2.d0, l1.d0 * l2.d1},
                                   {l1.d1 * l2.d0, l1.d1 * l2.d1}};
      for (int y1 = 0; y1 <= 1; ++y1) {
        for (int y2 = 0; y2 <= 1; ++y2) {
          const double w = branch[y1][y2];
          if (w == 0.0) continue;
          const int base1 = i1 - y1;
          const int base2 = i2 + y1 - y2;
          const ArrivalSpread s1 = spread_arrivals(base1, params.lambda1, cap, eps_tail);
          const ArrivalSpread s2 = spread_arrivals(base2, params.lambda2, cap, eps_tail);
          misplaced += w * (s1.misplaced + s2.misplaced);
          for (const auto& [t1, m1] : s1.mass) {
            for (const auto& [t2, m2] : s2.mass) {
              const Eigen::Index to = chain.index(t1, t2);
              if (row[static_cast<size_t>(to)] == 0.0) touched.push_back(to);
              row[static_cast<size_t>(to)] += w * m1 * m2;
            }
          }
        }
      }
      worst_misplaced = std::max(worst_misplaced, misplaced);
      std::sort(touched.begin(), touched.end());
      for (const Eigen::Index to : touched) {
        trips.emplace_back(static_cast<int>(from), static_cast<int>(to),
                           row[static_cast<size_t>(to)]);
        row[static_cast<size_t>(to)] = 0.0;
      }
    }
  }
  chain.tail_mass = worst_misplaced;
  chain.P.resize(n, n);
  chain.P.setFromTriplets(trips.begin(), trips.end());
  return chain;
}

inline double expected_i1(const SteadyState& ss) {
  const int side = ss.cap + 1;
  double e = 0.0;
  for (int i1 = 0; i1 < side; ++i1)
    for (int i2 = 0; i2 < side; ++i2)
      e += i1 * ss.pi[static_cast<Eigen::Index>(i1) * side + i2];
  return e;
}

inline double expected_i2(const SteadyState& ss) {
  const int side = ss.cap + 1;
  double e = 0.0;
  for (int i1 = 0; i1 < side; ++i1)
    for (int i2 = 0; i2 < side; ++i2)
      e += i2 * ss.pi[static_cast<Eigen::Index>(i1) * side + i2];
  return e;
}

/// P(i1 = 0) under the stationary distribution.
inline double empty_prob_node1(const SteadyState& ss) {
  const int side = ss.cap + 1;
  double e = 0.0;
  for (int i2 = 0; i2 < side; ++i2) e += ss.pi[i2];
  return e;
}

/// P(i2 = 0) under the stationary distribution.
inline double empty_prob_node2(const SteadyState& ss) {
  const int side = ss.cap + 1;
  double e = 0.0;
  for (int i1 = 0; i1 < side; ++i1) e += ss.pi[static_cast<Eigen::Index>(i1) * side];
  return e;
}

/// Stationary distribution of the truncated chain. Besides the fixed-point
/// residual this also checks the two structural balance equations at (0,0)
/// and (1,0), which only involve the four lowest states.
inline SteadyState steady_state(const TruncatedChain& chain, double tol = 1e-12) {
  SteadyState ss = stationary_distribution(chain.P, tol);
  ss.cap = chain.cap;

  const auto pi = [&](int a, int b) { return ss.pi[chain.index(a, b)]; };
  const double eq1 = pi(0, 0) -
                     (pi(0, 0) * chain.prob(0, 0, 0, 0) + pi(0, 1) * chain.prob(0, 1, 0, 0));
  const double eq2 =
      pi(1, 0) - (pi(1, 0) * chain.prob(1, 0, 1, 0) + pi(0, 1) * chain.prob(0, 1, 1, 0) +
                  pi(0, 0) * chain.prob(0, 0, 1, 0) + pi(1, 1) * chain.prob(1, 1, 1, 0));
  if (std::abs(eq1) > 1e-9 || std::abs(eq2) > 1e-9)
    throw SolverError("steady_state: boundary balance equations violated",
                      std::max(std::abs(eq1), std::abs(eq2)));
  return ss;
}

/// Little's-law delays and busy-cycle energy prices per flow.
struct FlowMetrics {
  double delay_node1 = 0.0;        // E[D1], slots
  double delay_node2 = 0.0;        // E[D2], slots
  double flow1_end_to_end = 0.0;   // E[D1] + E[D2]
  double flow2_end_to_end = 0.0;   // E[D2]
  double energy_per_packet_s1 = 0.0;
  double energy_per_packet_s2 = 0.0;
};

inline FlowMetrics mean_delays(const SteadyState& ss, const LineNetworkParams& params) {
  FlowMetrics m;
  if (!(params.lambda1 > 0.0))
    throw std::domain_error("mean_delays: lambda1 must be > 0 for E[D1]");
  if (!(params.lambda1 + params.lambda2 > 0.0))
    throw std::domain_error("mean_delays: lambda1 + lambda2 must be > 0 for E[D2]");
  m.delay_node1 = expected_i1(ss) / params.lambda1;
  m.delay_node2 = expected_i2(ss) / (params.lambda1 + params.lambda2);
  m.flow1_end_to_end = m.delay_node1 + m.delay_node2;
  m.flow2_end_to_end = m.delay_node2;
  return m;
}

/// Renewal-cycle statistics of one node's queue: idle spell, busy spell and
/// their ratio.
struct BusyCycleStats {
  double mean_idle = 0.0;
  double mean_busy = 0.0;
  double p_empty = 0.0;
};

/// Closed-form mean idle spell of node 1: geometric in the per-slot
/// probability 1 - e^{-lambda1} of at least one arrival.
inline double mean_idle_node1(double lambda1) {
  if (!(lambda1 > 0.0)) throw std::domain_error("mean idle time requires lambda1 > 0");
  return 1.0 / (1.0 - std::exp(-lambda1));
}

namespace detail {

/// Dense one-coordinate marginal of the S1 queue (its dynamics do not
/// depend on i2), reflected at the cap.
inline Eigen::MatrixXd node1_marginal_chain(const LineNetworkParams& params, int cap,
                                            double eps_tail) {
  const int side = cap + 1;
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(side, side);
  for (int i = 0; i < side; ++i) {
    const ServiceSplit l1 = one_slot_service(i, params.p1);
    for (int y = 0; y <= 1; ++y) {
      const double w = (y == 0) ? l1.d0 : l1.d1;
      if (w == 0.0) continue;
      const ArrivalSpread sp = spread_arrivals(i - y, params.lambda1, cap, eps_tail);
      for (const auto& [t, m] : sp.mass) P(i, t) += w * m;
    }
  }
  return P;
}

}  // namespace detail

/// Busy/idle cycle of one node. Node 1 combines the closed-form idle spell
/// with the mean first passage of its marginal queue back to empty, started
/// from the post-arrival batch that ends an idle period. Node 2 keeps the
/// closed-form idle expression and measures its busy spell from the
/// stationary entry rate into {i2 > 0}.
inline BusyCycleStats busy_cycle(const TruncatedChain& chain, const LineNetworkParams& params,
                                 int node, const SteadyState* ss = nullptr,
                                 double eps_tail = 1e-10) {
  params.validate();
  if (node != 1 && node != 2) throw std::invalid_argument("busy_cycle: node must be 1 or 2");
  if (!params.stable())
    throw InstabilityError("busy_cycle: stability requires lambda1 < 1-p1 and lambda1+lambda2 < 1-p2");

  BusyCycleStats out;
  const int cap = chain.cap;
  if (node == 1) {
    out.mean_idle = mean_idle_node1(params.lambda1);
    const Eigen::MatrixXd P = detail::node1_marginal_chain(params, cap, eps_tail);
    std::vector<bool> target(static_cast<size_t>(cap) + 1, false);
    target[0] = true;
    const Eigen::VectorXd t = mean_first_passage(P, target);
    // Entry level after the arrival burst that ends an idle slot.
    const double p_some = 1.0 - std::exp(-params.lambda1);
    double busy = 0.0;
    double acc = 0.0;
    for (int x = 1; x < cap; ++x) {
      const double w = arrival_pmf(x, 1, params.lambda1) / p_some;
      busy += w * t[x];
      acc += w;
    }
    busy += std::max(0.0, 1.0 - acc) * t[cap];
    out.mean_busy = busy;
    out.p_empty = out.mean_idle / (out.mean_idle + out.mean_busy);
    return out;
  }

  if (!(params.lambda1 + params.lambda2 > 0.0))
    throw std::domain_error("busy_cycle: node 2 requires lambda1 + lambda2 > 0");
  const BusyCycleStats node1 = busy_cycle(chain, params, 1, nullptr, eps_tail);
  const double pem1 = node1.p_empty;
  out.mean_idle =
      1.0 / (1.0 - std::exp(-params.lambda1) * (pem1 + params.p1 * (1.0 - pem1)));

  SteadyState local;
  if (ss == nullptr) {
    local = steady_state(chain);
    ss = &local;
  }
  // Busy spell from the stationary rate of {i2=0} -> {i2>0} entries.
  double entry_rate = 0.0;
  for (int i1 = 0; i1 <= cap; ++i1) {
    const Eigen::Index from = chain.index(i1, 0);
    double stay_empty = 0.0;
    for (SparseRowMatrix::InnerIterator it(chain.P, from); it; ++it)
      if (chain.state_of(it.col()).i2 == 0) stay_empty += it.value();
    entry_rate += ss->pi[from] * (1.0 - stay_empty);
  }
  const double p_busy = 1.0 - empty_prob_node2(*ss);
  if (!(entry_rate > 0.0)) throw std::domain_error("busy_cycle: node 2 queue never fills");
  out.mean_busy = p_busy / entry_rate;
  out.p_empty = out.mean_idle / (out.mean_idle + out.mean_busy);
  return out;
}

/// Average energy per admitted packet at each node: utilisation times the
/// per-slot price divided by the packet rate through the node.
inline FlowMetrics energy_per_packet(double p_empty1, double p_empty2,
                                     const LineNetworkParams& params) {
  if (!(params.lambda1 > 0.0))
    throw std::domain_error("energy_per_packet: lambda1 must be > 0");
  if (!(params.lambda1 + params.lambda2 > 0.0))
    throw std::domain_error("energy_per_packet: lambda1 + lambda2 must be > 0");
  FlowMetrics m;
  m.energy_per_packet_s1 = (1.0 - p_empty1) * params.energy.e1 / params.lambda1;
  m.energy_per_packet_s2 =
      (1.0 - p_empty2) * params.energy.e2 / (params.lambda1 + params.lambda2);
  return m;
}

struct GenieAnalysisOptions {
  int cap = 60;
  double eps_tail = 1e-10;
  double tol = 1e-12;
  bool auto_cap = true;        // double the cap until metrics move < auto_tol
  double auto_tol = 1e-6;
  int max_cap = 1920;
};

struct GenieInterReport {
  int cap = 0;
  double tail_mass = 0.0;
  bool params_stable = true;
  SteadyState steady;
  FlowMetrics metrics;       // energies from each node's own emptiness
  FlowMetrics metrics_renewal;  // energies from the node-1 renewal ratio (theorem-literal reading)
  BusyCycleStats node1;
  BusyCycleStats node2;
  double p_empty1 = 0.0;  // stationary P(i1 = 0)
  double p_empty2 = 0.0;  // stationary P(i2 = 0)
};

namespace detail {

inline GenieInterReport analyze_genie_inter_at(const LineNetworkParams& params,
                                               const GenieAnalysisOptions& opt, int cap) {
  GenieInterReport r;
  const TruncatedChain chain = build_chain(params, cap, opt.eps_tail);
  r.cap = cap;
  r.tail_mass = chain.tail_mass;
  r.params_stable = chain.params_stable;
  r.steady = steady_state(chain, opt.tol);
  r.p_empty1 = empty_prob_node1(r.steady);
  r.p_empty2 = empty_prob_node2(r.steady);
  r.metrics = mean_delays(r.steady, params);
  const FlowMetrics energy = energy_per_packet(r.p_empty1, r.p_empty2, params);
  r.metrics.energy_per_packet_s1 = energy.energy_per_packet_s1;
  r.metrics.energy_per_packet_s2 = energy.energy_per_packet_s2;
  r.node1 = busy_cycle(chain, params, 1, &r.steady, opt.eps_tail);
  r.node2 = busy_cycle(chain, params, 2, &r.steady, opt.eps_tail);
  r.metrics_renewal = r.metrics;
  const FlowMetrics lit = energy_per_packet(r.node1.p_empty, r.node1.p_empty, params);
  r.metrics_renewal.energy_per_packet_s1 = lit.energy_per_packet_s1;
  r.metrics_renewal.energy_per_packet_s2 = lit.energy_per_packet_s2;
  return r;
}

inline std::vector<double> report_fingerprint(const GenieInterReport& r) {
  return {r.metrics.delay_node1,          r.metrics.delay_node2,
          r.metrics.energy_per_packet_s1, r.metrics.energy_per_packet_s2,
          r.p_empty1,                     r.p_empty2};
}

}  // namespace detail

/// Full analysis at a fixed cap, or with cap auto-doubling until every
/// reported metric moves by less than auto_tol.
inline GenieInterReport analyze_genie_inter(const LineNetworkParams& params,
                                            const GenieAnalysisOptions& opt = {}) {
  GenieInterReport r = detail::analyze_genie_inter_at(params, opt, opt.cap);
  if (!opt.auto_cap) return r;
  std::vector<double> prev = detail::report_fingerprint(r);
  for (int cap = opt.cap * 2; cap <= opt.max_cap; cap *= 2) {
    GenieInterReport next = detail::analyze_genie_inter_at(params, opt, cap);
    const std::vector<double> cur = detail::report_fingerprint(next);
    double diff = 0.0;
    for (size_t k = 0; k < cur.size(); ++k) diff = std::max(diff, std::abs(cur[k] - prev[k]));
    if (diff < opt.auto_tol) return r;
    r = std::move(next);
    prev = cur;
  }
  throw SolverError("analyze_genie_inter: cap doubling did not converge", 0.0);
}

}  // namespace lineflow

#endif  // LINEFLOW_GENIE_INTER_HPP
