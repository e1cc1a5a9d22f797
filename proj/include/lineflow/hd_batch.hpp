#ifndef LINEFLOW_HD_BATCH_HPP
#define LINEFLOW_HD_BATCH_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <utility>
#include <vector>

#include "lineflow/errors.hpp"
#include "lineflow/hd_online.hpp"
#include "lineflow/hd_policy.hpp"
#include "lineflow/kernels.hpp"

// Batch-by-batch half-duplex scheme: no arrivals, the chain over
// (i1, i2, turn) absorbs at (0,0). Completion time and energy satisfy a
// linear recursion ordered by the remaining dof count; the only couplings
// inside a level are the (S1, S2) pair at the same (i1, i2) and the
// self-loops, both eliminated algebraically.

namespace lineflow {

enum class BatchObjective { time, energy, product };

struct BatchConfig {
  int m1 = 3;
  int m2 = 3;
  double p1 = 0.3;
  double p2 = 0.4;
  EnergyParams energy{};
  BatchObjective objective = BatchObjective::time;

  void validate() const {
    if (m1 < 0 || m2 < 0 || (m1 == 0 && m2 == 0))
      throw std::invalid_argument("M1, M2 must be >= 0 and not both 0");
    if (!(p1 >= 0.0 && p1 < 1.0)) throw std::invalid_argument("p1 must be in [0,1)");
    if (!(p2 >= 0.0 && p2 < 1.0)) throw std::invalid_argument("p2 must be in [0,1)");
    energy.validate();
  }

  LineNetworkParams params() const {
    LineNetworkParams p;
    p.p1 = p1;
    p.p2 = p2;
    p.energy = energy;
    return p;
  }
};

/// One-round kernel of the absorbing chain as a delta -> probability map.
/// Zero-dof turns are skipped at no cost and absorb at (0,0).
inline std::map<std::pair<int, int>, double> absorbing_kernel(const HdState& s,
                                                              const PolicyTable& policy,
                                                              const BatchConfig& config) {
  config.validate();
  if (s.i1 < 0 || s.i2 < 0) throw std::invalid_argument("state coordinates must be >= 0");
  std::map<std::pair<int, int>, double> out;
  if (s.turn == Turn::S1) {
    if (s.i1 == 0) {
      out[{0, 0}] = 1.0;
      return out;
    }
    const int n = policy.burst1(s.i1);
    for (int m = 0; m <= s.i1; ++m) {
      const double q = service_pmf(m, s.i1, n, config.p1);
      if (q > 0.0) out[{-m, m}] += q;
    }
    return out;
  }
  if (s.i2 == 0) {
    out[{0, 0}] = 1.0;
    return out;
  }
  const int n = policy.burst2(s.i1, s.i2);
  for (int m = 0; m <= s.i2; ++m) {
    const double q = service_pmf(m, s.i2, n, config.p2);
    if (q > 0.0) out[{0, -m}] += q;
  }
  return out;
}

/// Mean completion time and energy from every start state. Tables cover
/// i1 <= M1, i2 <= M1+M2 with i1+i2 <= M1+M2 (the reachable wedge).
struct CompletionStats {
  double mean_time = 0.0;
  double mean_energy = 0.0;
  double product = 0.0;
  std::vector<std::vector<double>> t_s1, t_s2, e_s1, e_s2;

  double time_from(const HdState& s) const {
    const auto& t = s.turn == Turn::S1 ? t_s1 : t_s2;
    return t[static_cast<size_t>(s.i1)][static_cast<size_t>(s.i2)];
  }
  double energy_from(const HdState& s) const {
    const auto& e = s.turn == Turn::S1 ? e_s1 : e_s2;
    return e[static_cast<size_t>(s.i1)][static_cast<size_t>(s.i2)];
  }
};

inline CompletionStats completion(const PolicyTable& policy, const BatchConfig& config) {
  config.validate();
  policy.validate();
  const int m1 = config.m1;
  const int top = config.m1 + config.m2;
  CompletionStats st;
  st.t_s1.assign(static_cast<size_t>(m1) + 1, std::vector<double>(static_cast<size_t>(top) + 1, 0.0));
  st.t_s2 = st.t_s1;
  st.e_s1 = st.t_s1;
  st.e_s2 = st.t_s1;

  for (int level = 1; level <= top; ++level) {
    for (int i1 = std::max(0, level - top); i1 <= std::min(level, m1); ++i1) {
      const int i2 = level - i1;
      const int n1 = policy.burst1(i1);
      const int n2 = policy.burst2(i1, i2);
      const double dur1 = i1 > 0 ? n1 : 0.0;
      const double cost1 = i1 > 0 ? n1 * config.energy.e1 : 0.0;
      const double dur2 = i2 > 0 ? n2 + 1.0 : 0.0;
      const double cost2 = i2 > 0 ? n2 * config.energy.e2 + config.energy.e_ack : 0.0;

      double at = dur1, ae = cost1;
      for (int m = 1; m <= i1; ++m) {
        const double q = service_pmf(m, i1, n1, config.p1);
        if (q == 0.0) continue;
        at += q * st.t_s2[static_cast<size_t>(i1 - m)][static_cast<size_t>(i2 + m)];
        ae += q * st.e_s2[static_cast<size_t>(i1 - m)][static_cast<size_t>(i2 + m)];
      }
      double bt = dur2, be = cost2;
      for (int m = 1; m <= i2; ++m) {
        const double q = service_pmf(m, i2, n2, config.p2);
        if (q == 0.0) continue;
        bt += q * st.t_s1[static_cast<size_t>(i1)][static_cast<size_t>(i2 - m)];
        be += q * st.e_s1[static_cast<size_t>(i1)][static_cast<size_t>(i2 - m)];
      }
      const double q1_0 = service_pmf(0, i1, n1, config.p1);
      const double q2_0 = service_pmf(0, i2, n2, config.p2);
      const double denom = 1.0 - q1_0 * q2_0;
      st.t_s1[static_cast<size_t>(i1)][static_cast<size_t>(i2)] = (at + q1_0 * bt) / denom;
      st.e_s1[static_cast<size_t>(i1)][static_cast<size_t>(i2)] = (ae + q1_0 * be) / denom;
      st.t_s2[static_cast<size_t>(i1)][static_cast<size_t>(i2)] =
          bt + q2_0 * st.t_s1[static_cast<size_t>(i1)][static_cast<size_t>(i2)];
      st.e_s2[static_cast<size_t>(i1)][static_cast<size_t>(i2)] =
          be + q2_0 * st.e_s1[static_cast<size_t>(i1)][static_cast<size_t>(i2)];
    }
  }
  st.mean_time = st.t_s1[static_cast<size_t>(m1)][static_cast<size_t>(config.m2)];
  st.mean_energy = st.e_s1[static_cast<size_t>(m1)][static_cast<size_t>(config.m2)];
  st.product = st.mean_time * st.mean_energy;
  return st;
}

inline CompletionStats completion_time(const PolicyTable& policy, const BatchConfig& config) {
  return completion(policy, config);
}
inline CompletionStats completion_energy(const PolicyTable& policy, const BatchConfig& config) {
  return completion(policy, config);
}

inline double objective_value(const CompletionStats& st, BatchObjective objective) {
  switch (objective) {
    case BatchObjective::time:
      return st.mean_time;
    case BatchObjective::energy:
      return st.mean_energy;
    case BatchObjective::product:
      return st.product;
  }
  return st.mean_time;
}

/// Per-round price of a burst of N packets on one link.
struct LinkCost {
  double per_packet = 1.0;
  double per_round = 0.0;
  double at(int n) const { return per_packet * n + per_round; }
};

struct LinkPlan {
  std::vector<int> burst;    // [0..dof], entry 0 unused
  std::vector<double> cost;  // optimal cost-to-finish per dof level
  bool boundary = false;     // argmin pinned at the widened search edge
};

/// Generous default search edge for one dof level.
inline int default_burst_limit(int dof, double p) {
  return static_cast<int>(std::ceil(3.0 * dof / (1.0 - p))) + 10;
}

/// Dynamic program for a single half-duplex link: climb dof levels, at each
/// level scan the burst size, eliminating the zero-progress self-loop
/// algebraically. `waiting` is the per-round price of the other node's
/// intervening turn, per dof level.
inline LinkPlan link_optimizer(int dof, double p, const LinkCost& cost,
                               const std::vector<double>& waiting, int n_max,
                               int hard_cap = 1024) {
  if (dof < 1) throw std::invalid_argument("link_optimizer: dof must be >= 1");
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("link_optimizer: p must be in [0,1)");
  if (static_cast<int>(waiting.size()) < dof + 1)
    throw std::invalid_argument("link_optimizer: waiting must cover [0..dof]");
  for (const double w : waiting)
    if (!(w >= 0.0)) throw std::invalid_argument("link_optimizer: waiting must be >= 0");

  LinkPlan plan;
  plan.burst.assign(static_cast<size_t>(dof) + 1, 0);
  plan.cost.assign(static_cast<size_t>(dof) + 1, 0.0);
  for (int i = 1; i <= dof; ++i) {
    int limit = std::max(1, n_max);
    int best_n = -1;
    double best = std::numeric_limits<double>::infinity();
    while (true) {
      for (int n = 1; n <= limit; ++n) {
        double acc = cost.at(n) + waiting[static_cast<size_t>(i)];
        for (int m = 1; m <= i; ++m) {
          const double q = service_pmf(m, i, n, p);
          if (q > 0.0) acc += q * plan.cost[static_cast<size_t>(i - m)];
        }
        const double value = acc / (1.0 - service_pmf(0, i, n, p));
        if (value < best - 1e-13) {
          best = value;
          best_n = n;
        }
      }
      if (best_n < limit || limit >= hard_cap) break;
      limit = std::min(2 * limit, hard_cap);  // widen and retry
    }
    if (best_n >= limit && limit >= hard_cap) plan.boundary = true;
    plan.burst[static_cast<size_t>(i)] = best_n;
    plan.cost[static_cast<size_t>(i)] = best;
  }
  return plan;
}

inline LinkPlan link_optimizer(int dof, double p, const LinkCost& cost, double waiting,
                               int n_max, int hard_cap = 1024) {
  return link_optimizer(dof, p, cost, std::vector<double>(static_cast<size_t>(dof) + 1, waiting),
                        n_max, hard_cap);
}

/// Which waiting term the relay's link step uses: the duration of S1's
/// intervening turn (consistent with the completion recursion), or the
/// printed cross-term formula kept behind this switch for comparison.
enum class S2Waiting { derived, literal };

struct Algorithm1Options {
  S2Waiting s2_waiting = S2Waiting::derived;
  int max_iters = 50;
  bool polish = true;  // finish with exact coordinate descent on the objective
};

struct Algorithm1Result {
  PolicyTable policy;
  CompletionStats stats;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

/// Round price of one S2 turn of n packets under the active objective.
inline double s2_round_price(int n, const BatchConfig& config, BatchObjective objective,
                             double wt, double we) {
  switch (objective) {
    case BatchObjective::time:
      return n + 1.0;
    case BatchObjective::energy:
      return n * config.energy.e2 + config.energy.e_ack;
    case BatchObjective::product:
      return we * (n + 1.0) + wt * (n * config.energy.e2 + config.energy.e_ack);
  }
  return n + 1.0;
}

inline double s1_round_price(int n, const BatchConfig& config, BatchObjective objective,
                             double wt, double we) {
  switch (objective) {
    case BatchObjective::time:
      return n;
    case BatchObjective::energy:
      return n * config.energy.e1;
    case BatchObjective::product:
      return we * n + wt * n * config.energy.e1;
  }
  return n;
}

inline LinkCost s1_link_cost(const BatchConfig& config, BatchObjective objective, double wt,
                             double we) {
  switch (objective) {
    case BatchObjective::time:
      return {1.0, 0.0};
    case BatchObjective::energy:
      return {config.energy.e1, 0.0};
    case BatchObjective::product:
      return {we + wt * config.energy.e1, 0.0};
  }
  return {1.0, 0.0};
}

inline LinkCost s2_link_cost(const BatchConfig& config, BatchObjective objective, double wt,
                             double we) {
  switch (objective) {
    case BatchObjective::time:
      return {1.0, 1.0};
    case BatchObjective::energy:
      return {config.energy.e2, config.energy.e_ack};
    case BatchObjective::product:
      return {we + wt * config.energy.e2, we + wt * config.energy.e_ack};
  }
  return {1.0, 1.0};
}

/// Exact coordinate descent on the completion objective, used to finish the
/// alternating search at a +-1-stable table.
inline int polish_policy(PolicyTable& policy, const BatchConfig& config,
                         BatchObjective objective, int pass_budget) {
  double best = objective_value(completion(policy, config), objective);
  int passes = 0;
  const auto try_entry = [&](int* entry, int limit) {
    const int incumbent = *entry;
    int best_n = incumbent;
    for (int cand = 1; cand <= limit; ++cand) {
      if (cand == incumbent) continue;
      *entry = cand;
      const double val = objective_value(completion(policy, config), objective);
      if (val < best - 1e-12 || (std::abs(val - best) <= 1e-12 && cand < best_n)) {
        best = val;
        best_n = cand;
      }
    }
    *entry = best_n;
    return best_n != incumbent;
  };
  for (; passes < pass_budget; ++passes) {
    bool changed = false;
    for (int i = 1; i <= config.m1; ++i)
      changed |= try_entry(&policy.n1[static_cast<size_t>(i)],
                           default_burst_limit(i, config.p1));
    for (int i1 = 0; i1 <= config.m1; ++i1)
      for (int i2 = 1; i2 <= config.m1 + config.m2 - i1; ++i2)
        changed |= try_entry(&policy.n2[static_cast<size_t>(i1)][static_cast<size_t>(i2)],
                             default_burst_limit(i2, config.p2));
    if (!changed) break;
  }
  return passes;
}

}  // namespace detail

/// Alternating per-link burst search seeded with the backlog policy, then an
/// exact coordinate-descent finish. Stops when a full pass leaves the table
/// unchanged.
inline Algorithm1Result algorithm1(const BatchConfig& config, const Algorithm1Options& opt = {}) {
  config.validate();
  Algorithm1Result out;
  out.policy = PolicyTable::backlog(config.m1, config.m2);
  const int m1 = config.m1;
  const int top = config.m1 + config.m2;

  // Cycle guard for the alternating phase: the blended product weights can
  // in principle make the table orbit instead of settling, in which case the
  // best table visited is kept and handed to the exact polish below.
  std::vector<uint64_t> seen{out.policy.hash()};
  PolicyTable best_seen = out.policy;
  double best_seen_value = objective_value(completion(out.policy, config), config.objective);

  for (out.iterations = 1; out.iterations <= opt.max_iters; ++out.iterations) {
    const PolicyTable prev = out.policy;
    double wt = 0.0, we = 0.0;
    if (config.objective == BatchObjective::product) {
      const CompletionStats cur = completion(out.policy, config);
      wt = cur.mean_time;
      we = cur.mean_energy;
    }

    if (m1 >= 1) {
      // S1 step: waiting is the expected price of the relay's next turn,
      // probed at the initial relay backlog M2.
      std::vector<double> waiting(static_cast<size_t>(m1) + 1, 0.0);
      int max_needed = 1;
      for (int i1 = 1; i1 <= m1; ++i1) {
        const int n_prev = prev.burst1(i1);
        double w = 0.0;
        for (int m = 0; m <= i1; ++m) {
          const double q = service_pmf(m, i1, n_prev, config.p1);
          if (q == 0.0) continue;
          w += q * detail::s2_round_price(prev.burst2(i1 - m, config.m2), config,
                                          config.objective, wt, we);
        }
        waiting[static_cast<size_t>(i1)] = w;
        max_needed = std::max(max_needed, default_burst_limit(i1, config.p1));
      }
      const LinkPlan plan =
          link_optimizer(m1, config.p1, detail::s1_link_cost(config, config.objective, wt, we),
                         waiting, max_needed);
      for (int i1 = 1; i1 <= m1; ++i1)
        out.policy.n1[static_cast<size_t>(i1)] = plan.burst[static_cast<size_t>(i1)];
    }

    // S2 step: one link problem per upstream backlog i1'.
    for (int i1p = 0; i1p <= m1; ++i1p) {
      std::vector<double> waiting(static_cast<size_t>(top) + 1, 0.0);
      for (int i2 = 1; i2 <= top; ++i2) {
        if (opt.s2_waiting == S2Waiting::derived) {
          waiting[static_cast<size_t>(i2)] = detail::s1_round_price(
              out.policy.burst1(i1p), config, config.objective, wt, we);
        } else {
          // Printed cross-term form: two-step probability of returning to
          // an S1 turn with the relay at i2', times that state's raw burst
          // size (no ACK term in the printed sum).
          const double stay = service_pmf(0, i1p, out.policy.burst1(i1p), config.p1);
          double w = 0.0;
          const int n2 = prev.burst2(i1p, i2);
          for (int m = 0; m <= i2; ++m) {
            const double q = service_pmf(m, i2, n2, config.p2);
            if (q == 0.0) continue;
            const int next_burst = prev.burst2(i1p, i2 - m);
            double price = next_burst;
            if (config.objective == BatchObjective::energy) {
              price = next_burst * config.energy.e2;
            } else if (config.objective == BatchObjective::product) {
              price = we * next_burst + wt * next_burst * config.energy.e2;
            }
            w += q * price;
          }
          waiting[static_cast<size_t>(i2)] = std::max(0.0, stay * w);
        }
      }
      int max_needed = 1;
      for (int i2 = 1; i2 <= top; ++i2)
        max_needed = std::max(max_needed, default_burst_limit(i2, config.p2));
      const LinkPlan plan =
          link_optimizer(top, config.p2, detail::s2_link_cost(config, config.objective, wt, we),
                         waiting, max_needed);
      for (int i2 = 1; i2 <= top; ++i2)
        out.policy.n2[static_cast<size_t>(i1p)][static_cast<size_t>(i2)] =
            plan.burst[static_cast<size_t>(i2)];
    }

    if (out.policy == prev) {
      out.converged = true;
      break;
    }
    const double value = objective_value(completion(out.policy, config), config.objective);
    if (value < best_seen_value) {
      best_seen_value = value;
      best_seen = out.policy;
    }
    const uint64_t h = out.policy.hash();
    if (std::find(seen.begin(), seen.end(), h) != seen.end()) {
      out.policy = best_seen;
      out.converged = true;
      break;
    }
    seen.push_back(h);
  }
  if (!out.converged)
    throw SolverError("algorithm1: policy table did not converge within the iteration budget",
                      static_cast<double>(opt.max_iters));

  if (opt.polish) {
    const int budget = std::max(1, opt.max_iters - out.iterations);
    out.iterations += detail::polish_policy(out.policy, config, config.objective, budget);
  }
  out.stats = completion(out.policy, config);
  return out;
}

/// Uncoded selective-repeat baseline: every turn retransmits exactly the
/// current backlog, which at the dof level is the backlog burst policy run
/// through the same absorbing recursion.
inline CompletionStats selective_repeat_baseline(const BatchConfig& config) {
  config.validate();
  return completion(PolicyTable::backlog(config.m1, config.m2), config);
}

/// Full-duplex genie energy: every dof costs a geometric number of
/// transmissions and nothing else.
inline double genie_energy_bound(const BatchConfig& config) {
  config.validate();
  return config.m1 * config.energy.e1 / (1.0 - config.p1) +
         (config.m1 + config.m2) * config.energy.e2 / (1.0 - config.p2);
}

}  // namespace lineflow

#endif  // LINEFLOW_HD_BATCH_HPP
