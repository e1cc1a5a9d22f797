#ifndef LINEFLOW_HD_ONLINE_HPP
#define LINEFLOW_HD_ONLINE_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "lineflow/errors.hpp"
#include "lineflow/hd_policy.hpp"
#include "lineflow/kernels.hpp"
#include "lineflow/markov.hpp"

// Half-duplex online scheme: nodes take turns, S1 sends a burst of N_{i1}
// coded packets, S2 answers with N_{(i1,i2)} packets plus one ACK slot from
// R. The embedded turn-by-turn chain is periodic with variable round
// lengths, so long-run metrics come from semi-Markov renewal-reward
// weighting of the embedded stationary distribution.

namespace lineflow {

enum class Turn { S1, S2 };

struct HdState {
  int i1 = 0;
  int i2 = 0;
  Turn turn = Turn::S1;
};

/// Round length in slots: the S1 burst rides feedback piggybacked on relay
/// traffic, the S2 burst pays one trailing ACK slot.
inline int round_duration(const HdState& s, const OnlinePolicy& policy) {
  if (s.turn == Turn::S1) return policy.burst1(s.i1);
  return policy.burst2(s.i1, s.i2) + 1;
}

/// Transition kernel out of an S1 turn.
inline double transition_from_s1(const HdState& s, int d1, int d2, const OnlinePolicy& policy,
                                 const LineNetworkParams& params) {
  if (s.turn != Turn::S1) throw std::invalid_argument("transition_from_s1: state turn must be S1");
  if (s.i1 < 0 || s.i2 < 0) throw std::invalid_argument("state coordinates must be >= 0");
  const int n = policy.burst1(s.i1);
  double acc = 0.0;
  for (int m = 0; m <= s.i1; ++m) {
    if (d1 + m < 0 || d2 - m < 0) continue;
    const double q = service_pmf(m, s.i1, n, params.p1);
    if (q == 0.0) continue;
    acc += q * arrival_pmf(d1 + m, n, params.lambda1) * arrival_pmf(d2 - m, n, params.lambda2);
  }
  return acc;
}

/// Transition kernel out of an S2 turn; S1 is silent, so i1 moves by local
/// arrivals only, collected over the burst plus the ACK slot.
inline double transition_from_s2(const HdState& s, int d1, int d2, const OnlinePolicy& policy,
                                 const LineNetworkParams& params) {
  if (s.turn != Turn::S2) throw std::invalid_argument("transition_from_s2: state turn must be S2");
  if (s.i1 < 0 || s.i2 < 0) throw std::invalid_argument("state coordinates must be >= 0");
  const int n = policy.burst2(s.i1, s.i2);
  if (d1 < 0) return 0.0;
  double acc = 0.0;
  for (int m = 0; m <= s.i2; ++m) {
    if (d2 + m < 0) continue;
    const double q = service_pmf(m, s.i2, n, params.p2);
    if (q == 0.0) continue;
    acc += q * arrival_pmf(d2 + m, n + 1, params.lambda2);
  }
  return acc * arrival_pmf(d1, n + 1, params.lambda1);
}

enum class PgfForm { kernel_consistent, paper_literal };

/// Closed-form PGF of the S1-turn kernel. The saturated term's z2 exponent
/// follows the kernel (z2^{i1}) by default; the literal printed form with
/// z2^{i2} is kept selectable for comparison.
template <class Z>
Z pgf_s1(const HdState& s, const Z& z1, const Z& z2, const OnlinePolicy& policy,
         const LineNetworkParams& params, PgfForm form = PgfForm::kernel_consistent) {
  if (s.turn != Turn::S1) throw std::invalid_argument("pgf_s1: state turn must be S1");
  const int n = policy.burst1(s.i1);
  if (z1 == Z(0) && s.i1 >= 1 && n >= 1)
    throw std::domain_error("pgf_s1: z1 = 0 hits a negative power");
  using std::exp;
  using std::pow;
  Z bracket(0);
  for (int m = 0; m < std::min(s.i1, n + 1); ++m)
    bracket += Z(binomial_pmf(m, n, 1.0 - params.p1)) * pow(z2, m) / pow(z1, m);
  double sat = 0.0;
  for (int m = s.i1; m <= n; ++m) sat += binomial_pmf(m, n, 1.0 - params.p1);
  if (sat != 0.0) {
    const int e2 = form == PgfForm::kernel_consistent ? s.i1 : s.i2;
    bracket += Z(sat) * pow(z2, e2) / pow(z1, s.i1);
  }
  return exp(params.lambda1 * n * (z1 - Z(1))) * exp(params.lambda2 * n * (z2 - Z(1))) * bracket;
}

/// How queue levels are averaged inside a round for Little's law: the exact
/// within-round transient, or the round-start level.
enum class QueueAveraging { within_round, round_start };

/// Assembled embedded chain plus per-state renewal-reward weights.
struct HdOnlineChain {
  int cap1 = 0;
  int cap2 = 0;
  SparseRowMatrix P;
  double tail_mass = 0.0;
  std::vector<double> duration;    // slots per round
  std::vector<double> energy;      // energy per round
  std::vector<double> delivered;   // mean dof delivered to R per round
  std::vector<double> level1_sum;  // sum over round slots of E[i1 at slot start]
  std::vector<double> level2_sum;

  Eigen::Index size() const {
    return 2 * static_cast<Eigen::Index>(cap1 + 1) * (cap2 + 1);
  }
  Eigen::Index index(Turn turn, int i1, int i2) const {
    const Eigen::Index plane = static_cast<Eigen::Index>(cap1 + 1) * (cap2 + 1);
    return (turn == Turn::S1 ? 0 : plane) + static_cast<Eigen::Index>(i1) * (cap2 + 1) + i2;
  }
  HdState state_of(Eigen::Index idx) const {
    const Eigen::Index plane = static_cast<Eigen::Index>(cap1 + 1) * (cap2 + 1);
    HdState s;
    s.turn = idx < plane ? Turn::S1 : Turn::S2;
    const Eigen::Index rest = idx % plane;
    s.i1 = static_cast<int>(rest / (cap2 + 1));
    s.i2 = static_cast<int>(rest % (cap2 + 1));
    return s;
  }
};

namespace detail {

/// E[min(Binomial(trials, q), cap)].
inline double expected_capped_binomial(int trials, double q, int cap) {
  double acc = 0.0;
  for (int m = 1; m <= trials; ++m)
    acc += std::min(m, cap) * binomial_pmf(m, trials, q);
  return acc;
}

}  // namespace detail

inline HdOnlineChain build_hd_online_chain(const LineNetworkParams& params,
                                           const OnlinePolicy& policy, int cap,
                                           double eps_tail = 1e-10,
                                           QueueAveraging averaging = QueueAveraging::within_round) {
  params.validate();
  policy.validate();
  if (cap < 1) throw std::invalid_argument("hd online chain: cap must be >= 1");
  HdOnlineChain chain;
  chain.cap1 = std::min(cap, policy.window1);
  chain.cap2 = std::min(cap, policy.window2);
  const Eigen::Index n = chain.size();
  chain.duration.assign(static_cast<size_t>(n), 0.0);
  chain.energy.assign(static_cast<size_t>(n), 0.0);
  chain.delivered.assign(static_cast<size_t>(n), 0.0);
  chain.level1_sum.assign(static_cast<size_t>(n), 0.0);
  chain.level2_sum.assign(static_cast<size_t>(n), 0.0);

  std::vector<Triplet> trips;
  double worst_misplaced = 0.0;
  const double q1 = 1.0 - params.p1;
  const double q2 = 1.0 - params.p2;

  for (int i1 = 0; i1 <= chain.cap1; ++i1) {
    for (int i2 = 0; i2 <= chain.cap2; ++i2) {
      {  // S1 turn
        const Eigen::Index from = chain.index(Turn::S1, i1, i2);
        const int burst = policy.burst1(i1);
        chain.duration[static_cast<size_t>(from)] = burst;
        chain.energy[static_cast<size_t>(from)] = burst * params.energy.e1;
        double misplaced = 0.0;
        for (int m = 0; m <= i1; ++m) {
          const double w = service_pmf(m, i1, burst, params.p1);
          if (w == 0.0) continue;
          const ArrivalSpread s1 =
              spread_arrivals(i1 - m, params.lambda1 * burst, chain.cap1, eps_tail);
          const ArrivalSpread s2 =
              spread_arrivals(i2 + m, params.lambda2 * burst, chain.cap2, eps_tail);
          misplaced += w * (s1.misplaced + s2.misplaced);
          for (const auto& [t1, m1] : s1.mass)
            for (const auto& [t2, m2] : s2.mass)
              trips.emplace_back(static_cast<int>(from),
                                 static_cast<int>(chain.index(Turn::S2, t1, t2)), w * m1 * m2);
        }
        worst_misplaced = std::max(worst_misplaced, misplaced);
        for (int j = 0; j < burst; ++j) {
          const double moved = detail::expected_capped_binomial(j, q1, i1);
          const double l1 = i1 - moved + params.lambda1 * j;
          const double l2 = i2 + moved + params.lambda2 * j;
          chain.level1_sum[static_cast<size_t>(from)] +=
              averaging == QueueAveraging::within_round ? l1 : i1;
          chain.level2_sum[static_cast<size_t>(from)] +=
              averaging == QueueAveraging::within_round ? l2 : i2;
        }
      }
      {  // S2 turn
        const Eigen::Index from = chain.index(Turn::S2, i1, i2);
        const int burst = policy.burst2(i1, i2);
        chain.duration[static_cast<size_t>(from)] = burst + 1;
        chain.energy[static_cast<size_t>(from)] =
            burst > 0 ? burst * params.energy.e2 + params.energy.e_ack : 0.0;
        chain.delivered[static_cast<size_t>(from)] = service_mean(i2, burst, params.p2);
        double misplaced = 0.0;
        const ArrivalSpread s1 =
            spread_arrivals(i1, params.lambda1 * (burst + 1), chain.cap1, eps_tail);
        for (int m = 0; m <= i2; ++m) {
          const double w = service_pmf(m, i2, burst, params.p2);
          if (w == 0.0) continue;
          const ArrivalSpread s2 =
              spread_arrivals(i2 - m, params.lambda2 * (burst + 1), chain.cap2, eps_tail);
          misplaced += w * (s1.misplaced + s2.misplaced);
          for (const auto& [t1, m1] : s1.mass)
            for (const auto& [t2, m2] : s2.mass)
              trips.emplace_back(static_cast<int>(from),
                                 static_cast<int>(chain.index(Turn::S1, t1, t2)), w * m1 * m2);
        }
        worst_misplaced = std::max(worst_misplaced, misplaced);
        for (int j = 0; j <= burst; ++j) {
          const double gone = detail::expected_capped_binomial(std::min(j, burst), q2, i2);
          const double l1 = i1 + params.lambda1 * j;
          const double l2 = i2 - gone + params.lambda2 * j;
          chain.level1_sum[static_cast<size_t>(from)] +=
              averaging == QueueAveraging::within_round ? l1 : i1;
          chain.level2_sum[static_cast<size_t>(from)] +=
              averaging == QueueAveraging::within_round ? l2 : i2;
        }
      }
    }
  }
  chain.tail_mass = worst_misplaced;
  chain.P.resize(n, n);
  chain.P.setFromTriplets(trips.begin(), trips.end());
  return chain;
}

struct OnlineMetrics {
  double delay_node1 = 0.0;
  double delay_node2 = 0.0;
  double flow1_end_to_end = 0.0;
  double flow2_end_to_end = 0.0;
  double energy_per_packet_s1 = 0.0;
  double energy_per_packet_s2 = 0.0;
  double mean_round_slots = 0.0;
  double throughput = 0.0;  // dof delivered to R per slot
  double mean_i1_time = 0.0;
  double mean_i2_time = 0.0;
  double boundary_occupancy = 0.0;
  int cap1 = 0;
  int cap2 = 0;
  double residual = 0.0;
};

struct OnlineAnalysisOptions {
  int cap = 60;
  double eps_tail = 1e-10;
  double tol = 1e-12;
  double occupancy_eps = 1e-6;  // stationary mass allowed on the cap boundary
  QueueAveraging averaging = QueueAveraging::within_round;
};

/// Long-run time averages of the embedded chain via renewal-reward: every
/// embedded state is weighted by its round duration.
inline OnlineMetrics online_metrics(const LineNetworkParams& params, const OnlinePolicy& policy,
                                    const OnlineAnalysisOptions& opt = {}) {
  const HdOnlineChain chain =
      build_hd_online_chain(params, policy, opt.cap, opt.eps_tail, opt.averaging);
  const SteadyState ss = stationary_distribution(chain.P, opt.tol);

  OnlineMetrics m;
  m.cap1 = chain.cap1;
  m.cap2 = chain.cap2;
  m.residual = ss.residual;

  double total_time = 0.0, lvl1 = 0.0, lvl2 = 0.0, energy1 = 0.0, energy2 = 0.0,
         delivered = 0.0;
  for (Eigen::Index idx = 0; idx < chain.size(); ++idx) {
    const double pi = ss.pi[idx];
    total_time += pi * chain.duration[static_cast<size_t>(idx)];
    lvl1 += pi * chain.level1_sum[static_cast<size_t>(idx)];
    lvl2 += pi * chain.level2_sum[static_cast<size_t>(idx)];
    const HdState s = chain.state_of(idx);
    if (s.turn == Turn::S1) {
      energy1 += pi * chain.energy[static_cast<size_t>(idx)];
    } else {
      energy2 += pi * chain.energy[static_cast<size_t>(idx)];
      delivered += pi * chain.delivered[static_cast<size_t>(idx)];
    }
    if (s.i1 == chain.cap1 || s.i2 == chain.cap2) m.boundary_occupancy += pi;
  }
  if (m.boundary_occupancy > opt.occupancy_eps)
    throw InstabilityError("online_metrics: stationary mass at the cap exceeds the threshold");

  m.mean_round_slots = total_time;
  m.mean_i1_time = lvl1 / total_time;
  m.mean_i2_time = lvl2 / total_time;
  m.throughput = delivered / total_time;
  const double rate12 = params.lambda1 + params.lambda2;
  m.delay_node1 = params.lambda1 > 0.0 ? m.mean_i1_time / params.lambda1 : 0.0;
  m.delay_node2 = rate12 > 0.0 ? m.mean_i2_time / rate12 : 0.0;
  m.flow1_end_to_end = m.delay_node1 + m.delay_node2;
  m.flow2_end_to_end = m.delay_node2;
  m.energy_per_packet_s1 =
      params.lambda1 > 0.0 ? energy1 / (total_time * params.lambda1) : 0.0;
  m.energy_per_packet_s2 = rate12 > 0.0 ? energy2 / (total_time * rate12) : 0.0;
  return m;
}

enum class OnlineObjective { delay, energy, product };

inline double online_objective_value(const OnlineMetrics& m, const LineNetworkParams& params,
                                     OnlineObjective objective) {
  const double rate = params.lambda1 + params.lambda2;
  const double delay = rate > 0.0 ? (m.mean_i1_time + m.mean_i2_time) / rate : 0.0;
  const double energy =
      m.throughput > 0.0
          ? (m.energy_per_packet_s1 * params.lambda1 + m.energy_per_packet_s2 * rate) *
                m.mean_round_slots / (m.throughput * m.mean_round_slots)
          : 0.0;
  switch (objective) {
    case OnlineObjective::delay:
      return delay;
    case OnlineObjective::energy:
      return energy;
    case OnlineObjective::product:
      return delay * energy;
  }
  return delay;
}

struct OptimizeOnlineOptions {
  int cap = 24;
  int n_max = 12;
  int range1 = 5;    // optimised N1 entries cover i1 in [1..range1]
  int range2a = 5;   // optimised N2 rows cover i1 in [0..range2a]
  int range2b = 5;   // optimised N2 entries cover i2 in [1..range2b]
  int max_passes = 20;
  OnlineObjective objective = OnlineObjective::delay;
  OnlineAnalysisOptions analysis{};
};

struct OptimizeOnlineResult {
  OnlinePolicy policy;
  double objective_value = 0.0;
  int passes = 0;
  bool budget_exhausted = false;
};

/// Coordinate-descent integer search over the policy tables; every pass
/// sweeps all entries with an exhaustive scan of [1..n_max] and the search
/// stops at the first pass that changes nothing.
inline OptimizeOnlineResult optimize_online(const LineNetworkParams& params,
                                            const OptimizeOnlineOptions& opt = {}) {
  params.validate();
  OptimizeOnlineResult out;
  out.policy = OnlinePolicy::backlog(opt.range1, opt.range2a, opt.range2b);
  OnlineAnalysisOptions analysis = opt.analysis;
  analysis.cap = opt.cap;

  const auto evaluate = [&](const OnlinePolicy& policy) {
    try {
      return online_objective_value(online_metrics(params, policy, analysis), params,
                                    opt.objective);
    } catch (const InstabilityError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  double best = evaluate(out.policy);
  for (out.passes = 1; out.passes <= opt.max_passes; ++out.passes) {
    bool changed = false;
    const auto improve_entry = [&](int* entry) {
      const int incumbent = *entry;
      int best_n = incumbent;
      for (int cand = 1; cand <= opt.n_max; ++cand) {
        if (cand == incumbent) continue;
        *entry = cand;
        const double val = evaluate(out.policy);
        if (val < best - 1e-12 || (val <= best + 1e-12 && cand < best_n)) {
          best = std::min(best, val);
          best_n = cand;
        }
      }
      *entry = best_n;
      if (best_n != incumbent) {
        changed = true;
        best = evaluate(out.policy);
      }
    };
    for (int i = 1; i <= opt.range1; ++i) improve_entry(&out.policy.n1[static_cast<size_t>(i)]);
    for (int i = 0; i <= opt.range2a; ++i)
      for (int j = 1; j <= opt.range2b; ++j)
        improve_entry(&out.policy.n2[static_cast<size_t>(i)][static_cast<size_t>(j)]);
    if (!changed) break;
  }
  out.budget_exhausted = out.passes > opt.max_passes;
  out.objective_value = evaluate(out.policy);
  return out;
}

}  // namespace lineflow

#endif  // LINEFLOW_HD_ONLINE_HPP
