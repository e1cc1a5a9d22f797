#ifndef LINEFLOW_SIMULATOR_HPP
#define LINEFLOW_SIMULATOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lineflow/genie_intra.hpp"
#include "lineflow/hd_policy.hpp"
#include "lineflow/kernels.hpp"
#include "lineflow/rng.hpp"

// Seed-deterministic slot-level Monte Carlo oracle. Dynamics mirror the
// analytical kernels at the dof level: Poisson arrivals per slot, Bernoulli
// erasures, per-slot dof transfer, turn alternation and ACK slots for the
// half-duplex schemes. Delays are measured by stamping each dof with its
// arrival slot and recording the slot it is seen at the next hop.
//
// Standard errors come from batch means over the post-warmup window for the
// online models, and from independent runs for the batch models. Each run
// owns CounterRng stream `run`, so reports do not depend on scheduling.

namespace lineflow {

struct SimOptions {
  uint64_t seed = 12345;
  long slots = 1000000;   // online-model budget
  long warmup = -1;       // defaults to slots / 10
  long runs = 100000;     // batch-model budget
  int batches = 32;       // batch-means segments
  long occupancy_limit = 200000;  // dof level that flags divergence

  long effective_warmup() const { return warmup >= 0 ? warmup : slots / 10; }
};

struct MetricEstimate {
  std::string name;
  double mean = 0.0;
  double se = 0.0;
  long count = 0;
};

struct SimReport {
  std::vector<MetricEstimate> metrics;
  std::vector<std::pair<double, double>> run_samples;  // (completion slots, energy)
  std::map<uint64_t, long> occupancy;                  // packed state -> slot count
  bool unstable = false;

  const MetricEstimate* find(const std::string& name) const {
    for (const auto& m : metrics)
      if (m.name == name) return &m;
    return nullptr;
  }
  double mean_of(const std::string& name) const {
    const MetricEstimate* m = find(name);
    if (m == nullptr) throw std::invalid_argument("unknown metric: " + name);
    return m->mean;
  }
};

namespace detail {

/// Accumulates per-batch means so the standard error respects the
/// autocorrelation of slot processes.
class BatchAccumulator {
 public:
  BatchAccumulator(int batches) : sum_(static_cast<size_t>(batches), 0.0),
                                  count_(static_cast<size_t>(batches), 0) {}

  void add(int batch, double value) {
    if (batch < 0) return;
    const size_t b = std::min<size_t>(static_cast<size_t>(batch), sum_.size() - 1);
    sum_[b] += value;
    count_[b] += 1;
  }

  MetricEstimate estimate(const std::string& name) const {
    MetricEstimate est;
    est.name = name;
    std::vector<double> means;
    long total = 0;
    double grand = 0.0;
    for (size_t b = 0; b < sum_.size(); ++b) {
      if (count_[b] == 0) continue;
      means.push_back(sum_[b] / static_cast<double>(count_[b]));
      grand += sum_[b];
      total += count_[b];
    }
    est.count = total;
    if (total > 0) est.mean = grand / static_cast<double>(total);
    if (means.size() > 1) {
      double var = 0.0;
      double mu = 0.0;
      for (const double v : means) mu += v;
      mu /= static_cast<double>(means.size());
      for (const double v : means) var += (v - mu) * (v - mu);
      var /= static_cast<double>(means.size() - 1);
      est.se = std::sqrt(var / static_cast<double>(means.size()));
    }
    return est;
  }

 private:
  std::vector<double> sum_;
  std::vector<long> count_;
};

inline uint64_t pack_state(int a, int b, int c = 0) {
  return (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 42) |
         (static_cast<uint64_t>(static_cast<uint32_t>(b)) << 21) |
         static_cast<uint64_t>(static_cast<uint32_t>(c));
}

}  // namespace detail

/// Genie-aided inter-session slot simulation.
inline SimReport simulate_genie_inter(const LineNetworkParams& params, const SimOptions& opt) {
  params.validate();
  CounterRng rng(opt.seed, 0);
  const long warmup = opt.effective_warmup();
  const int nb = opt.batches;
  const auto batch_of = [&](long t) {
    if (t < warmup) return -1;
    return static_cast<int>((t - warmup) * nb / std::max<long>(1, opt.slots - warmup));
  };

  std::deque<long> q1, q2;
  detail::BatchAccumulator mi1(nb), mi2(nb), d1(nb), d2(nb), busy1(nb), busy2(nb),
      em1(nb), em2(nb), e00(nb), arr1(nb), arr2(nb);
  SimReport rep;

  for (long t = 0; t < opt.slots; ++t) {
    const int b = batch_of(t);
    const int i1 = static_cast<int>(q1.size());
    const int i2 = static_cast<int>(q2.size());
    if (b >= 0) {
      mi1.add(b, i1);
      mi2.add(b, i2);
      busy1.add(b, i1 > 0 ? 1.0 : 0.0);
      busy2.add(b, i2 > 0 ? 1.0 : 0.0);
      em1.add(b, i1 == 0 ? 1.0 : 0.0);
      em2.add(b, i2 == 0 ? 1.0 : 0.0);
      e00.add(b, (i1 == 0 && i2 == 0) ? 1.0 : 0.0);
      rep.occupancy[detail::pack_state(i1, i2)] += 1;
    }
    const bool y1 = i1 > 0 && rng.bernoulli(1.0 - params.p1);
    const bool y2 = i2 > 0 && rng.bernoulli(1.0 - params.p2);
    if (y2) {
      if (b >= 0) d2.add(b, static_cast<double>(t - q2.front()));
      q2.pop_front();
    }
    if (y1) {
      if (b >= 0) d1.add(b, static_cast<double>(t - q1.front()));
      q1.pop_front();
      q2.push_back(t);
    }
    const int x1 = rng.poisson(params.lambda1);
    const int x2 = rng.poisson(params.lambda2);
    for (int k = 0; k < x1; ++k) q1.push_back(t);
    for (int k = 0; k < x2; ++k) q2.push_back(t);
    if (b >= 0) {
      arr1.add(b, x1);
      arr2.add(b, x2);
    }
    if (static_cast<long>(q1.size() + q2.size()) > opt.occupancy_limit) rep.unstable = true;
  }

  rep.metrics.push_back(mi1.estimate("mean_i1"));
  rep.metrics.push_back(mi2.estimate("mean_i2"));
  rep.metrics.push_back(d1.estimate("delay_node1"));
  rep.metrics.push_back(d2.estimate("delay_node2"));
  rep.metrics.push_back(busy1.estimate("busy_frac1"));
  rep.metrics.push_back(busy2.estimate("busy_frac2"));
  rep.metrics.push_back(em1.estimate("p_empty1"));
  rep.metrics.push_back(em2.estimate("p_empty2"));
  rep.metrics.push_back(e00.estimate("p_state_00"));
  rep.metrics.push_back(arr1.estimate("rate1"));
  rep.metrics.push_back(arr2.estimate("rate2"));

  // Energy per admitted packet: per-slot price on busy slots over arrivals.
  const double rate1 = rep.mean_of("rate1");
  const double rate12 = rate1 + rep.mean_of("rate2");
  MetricEstimate e1;
  e1.name = "energy_per_packet_s1";
  const MetricEstimate* bf1 = rep.find("busy_frac1");
  if (rate1 > 0.0) {
    e1.mean = bf1->mean * params.energy.e1 / rate1;
    e1.se = bf1->se * params.energy.e1 / rate1;
    e1.count = bf1->count;
  }
  rep.metrics.push_back(e1);
  MetricEstimate e2;
  e2.name = "energy_per_packet_s2";
  const MetricEstimate* bf2 = rep.find("busy_frac2");
  if (rate12 > 0.0) {
    e2.mean = bf2->mean * params.energy.e2 / rate12;
    e2.se = bf2->se * params.energy.e2 / rate12;
    e2.count = bf2->count;
  }
  rep.metrics.push_back(e2);
  return rep;
}

/// Genie-aided intra-session slot simulation under a scheduling policy.
inline SimReport simulate_genie_intra(const LineNetworkParams& params,
                                      const SchedulingPolicy& policy, ServiceMode mode,
                                      const SimOptions& opt) {
  params.validate();
  CounterRng rng(opt.seed, 0);
  const long warmup = opt.effective_warmup();
  const int nb = opt.batches;
  const auto batch_of = [&](long t) {
    if (t < warmup) return -1;
    return static_cast<int>((t - warmup) * nb / std::max<long>(1, opt.slots - warmup));
  };

  std::deque<long> q1, q2, q3;
  detail::BatchAccumulator mi1(nb), mi2(nb), mi3(nb), d1f1(nb), d2f1(nb), d2f2(nb);
  SimReport rep;

  for (long t = 0; t < opt.slots; ++t) {
    const int b = batch_of(t);
    const IntraState s{static_cast<int>(q1.size()), static_cast<int>(q2.size()),
                       static_cast<int>(q3.size())};
    if (b >= 0) {
      mi1.add(b, s.i1);
      mi2.add(b, s.i2);
      mi3.add(b, s.i3);
      rep.occupancy[detail::pack_state(s.i1, s.i2, s.i3)] += 1;
    }
    // Scheduling decision mirrors SchedulingPolicy::weight_flow1.
    int flow;
    if (mode == ServiceMode::reassign_empty && s.i3 == 0) {
      flow = 1;
    } else if (mode == ServiceMode::reassign_empty && s.i2 == 0) {
      flow = 2;
    } else if (policy.chooser) {
      flow = policy.chooser(s);
    } else {
      flow = rng.bernoulli(policy.ps) ? 1 : 2;
    }
    const bool y1 = s.i1 > 0 && rng.bernoulli(1.0 - params.p1);
    std::deque<long>& served = (flow == 1) ? q2 : q3;
    const bool y2 = !served.empty() && rng.bernoulli(1.0 - params.p2);
    if (y2) {
      if (b >= 0) (flow == 1 ? d2f1 : d2f2).add(b, static_cast<double>(t - served.front()));
      served.pop_front();
    }
    if (y1) {
      if (b >= 0) d1f1.add(b, static_cast<double>(t - q1.front()));
      q1.pop_front();
      q2.push_back(t);
    }
    const int x1 = rng.poisson(params.lambda1);
    const int x2 = rng.poisson(params.lambda2);
    for (int k = 0; k < x1; ++k) q1.push_back(t);
    for (int k = 0; k < x2; ++k) q3.push_back(t);
    if (static_cast<long>(q1.size() + q2.size() + q3.size()) > opt.occupancy_limit)
      rep.unstable = true;
  }

  rep.metrics.push_back(mi1.estimate("mean_i1"));
  rep.metrics.push_back(mi2.estimate("mean_i2"));
  rep.metrics.push_back(mi3.estimate("mean_i3"));
  rep.metrics.push_back(d1f1.estimate("d1_flow1"));
  rep.metrics.push_back(d2f1.estimate("d2_flow1"));
  rep.metrics.push_back(d2f2.estimate("d2_flow2"));
  return rep;
}

/// Half-duplex online simulation: alternating bursts with a trailing ACK
/// slot after transmitting relay turns.
inline SimReport simulate_hd_online(const LineNetworkParams& params, const OnlinePolicy& policy,
                                    const SimOptions& opt) {
  params.validate();
  policy.validate();
  CounterRng rng(opt.seed, 0);
  const long warmup = opt.effective_warmup();
  const int nb = opt.batches;
  const auto batch_of = [&](long t) {
    if (t < warmup) return -1;
    return static_cast<int>((t - warmup) * nb / std::max<long>(1, opt.slots - warmup));
  };

  std::deque<long> q1, q2;
  detail::BatchAccumulator mi1(nb), mi2(nb), d1(nb), d2(nb), en1(nb), en2(nb), arr1(nb),
      arr2(nb), delivered(nb);
  long t = 0;
  long rounds = 0;
  bool turn_s1 = true;
  SimReport rep;

  const auto do_slot = [&](bool s1_transmits, bool s2_transmits, int& sent_cap,
                           double extra_energy) {
    const int b = batch_of(t);
    const int i1 = static_cast<int>(q1.size());
    const int i2 = static_cast<int>(q2.size());
    if (b >= 0) {
      mi1.add(b, i1);
      mi2.add(b, i2);
      rep.occupancy[detail::pack_state(i1, i2, turn_s1 ? 0 : 1)] += 1;
    }
    if (s1_transmits) {
      if (b >= 0) en1.add(b, params.energy.e1);
      const bool ok = rng.bernoulli(1.0 - params.p1);
      if (ok && sent_cap > 0) {
        --sent_cap;
        if (b >= 0) d1.add(b, static_cast<double>(t - q1.front()));
        q1.pop_front();
        q2.push_back(t);
      }
    }
    if (s2_transmits) {
      if (b >= 0) en2.add(b, params.energy.e2);
      const bool ok = rng.bernoulli(1.0 - params.p2);
      if (ok && sent_cap > 0) {
        --sent_cap;
        if (b >= 0) {
          d2.add(b, static_cast<double>(t - q2.front()));
          delivered.add(b, 1.0);
        }
        q2.pop_front();
      }
    }
    if (extra_energy > 0.0 && b >= 0) en2.add(b, extra_energy);
    const int x1 = rng.poisson(params.lambda1);
    const int x2 = rng.poisson(params.lambda2);
    for (int k = 0; k < x1; ++k) q1.push_back(t);
    for (int k = 0; k < x2; ++k) q2.push_back(t);
    if (b >= 0) {
      arr1.add(b, x1);
      arr2.add(b, x2);
    }
    ++t;
    if (static_cast<long>(q1.size() + q2.size()) > opt.occupancy_limit) rep.unstable = true;
  };

  while (t < opt.slots) {
    ++rounds;
    if (turn_s1) {
      const int eff1 = std::min(static_cast<int>(q1.size()), policy.window1);
      const int burst = policy.burst1(eff1);
      int cap = std::min(eff1, burst);
      for (int k = 0; k < burst && t < opt.slots; ++k) do_slot(true, false, cap, 0.0);
    } else {
      const int eff1 = std::min(static_cast<int>(q1.size()), policy.window1);
      const int eff2 = std::min(static_cast<int>(q2.size()), policy.window2);
      const int burst = policy.burst2(eff1, eff2);
      int cap = std::min(eff2, burst);
      for (int k = 0; k < burst && t < opt.slots; ++k) do_slot(false, true, cap, 0.0);
      if (t < opt.slots) {
        int none = 0;
        // ACK / listening slot; the ACK is only sent after a real burst.
        do_slot(false, false, none, burst > 0 ? params.energy.e_ack : 0.0);
      }
    }
    turn_s1 = !turn_s1;
  }

  rep.metrics.push_back(mi1.estimate("mean_i1"));
  rep.metrics.push_back(mi2.estimate("mean_i2"));
  rep.metrics.push_back(d1.estimate("delay_node1"));
  rep.metrics.push_back(d2.estimate("delay_node2"));
  rep.metrics.push_back(arr1.estimate("rate1"));
  rep.metrics.push_back(arr2.estimate("rate2"));

  MetricEstimate rounds_m;
  rounds_m.name = "mean_round_slots";
  rounds_m.mean = static_cast<double>(opt.slots) / static_cast<double>(rounds);
  rounds_m.count = rounds;
  rep.metrics.push_back(rounds_m);

  const auto per_packet = [&](const detail::BatchAccumulator& acc, const std::string& name,
                              double rate) {
    MetricEstimate m = acc.estimate(name + "_raw");
    const double denom = rate * static_cast<double>(opt.slots - warmup);
    MetricEstimate out;
    out.name = name;
    out.count = m.count;
    if (denom > 0.0) {
      out.mean = m.mean * static_cast<double>(m.count) / denom;
      out.se = m.se * static_cast<double>(m.count) / denom;
    }
    return out;
  };
  rep.metrics.push_back(per_packet(en1, "energy_per_packet_s1", rep.mean_of("rate1")));
  rep.metrics.push_back(
      per_packet(en2, "energy_per_packet_s2", rep.mean_of("rate1") + rep.mean_of("rate2")));

  MetricEstimate thr = delivered.estimate("throughput");
  thr.mean = thr.mean * static_cast<double>(thr.count) /
             static_cast<double>(std::max<long>(1, opt.slots - warmup));
  thr.se = 0.0;
  rep.metrics.push_back(thr);
  return rep;
}

/// Batch completion runs (lambda = 0): independent absorbing episodes from
/// (M1, M2, S1); zero-dof turns are skipped outright.
inline SimReport simulate_hd_batch(int m1, int m2, const LineNetworkParams& params,
                                   const PolicyTable& policy, const SimOptions& opt) {
  params.validate();
  policy.validate();
  SimReport rep;
  rep.run_samples.reserve(static_cast<size_t>(opt.runs));
  double sum_t = 0.0, sum_t2 = 0.0, sum_e = 0.0, sum_e2 = 0.0;

  for (long run = 0; run < opt.runs; ++run) {
    CounterRng rng(opt.seed, static_cast<uint64_t>(run) + 1);
    int i1 = m1, i2 = m2;
    long slots = 0;
    double energy = 0.0;
    bool turn_s1 = true;
    while (i1 > 0 || i2 > 0) {
      if (turn_s1) {
        if (i1 > 0) {
          const int burst = policy.burst1(i1);
          int ok = 0;
          for (int k = 0; k < burst; ++k) ok += rng.bernoulli(1.0 - params.p1) ? 1 : 0;
          const int moved = std::min(ok, i1);
          i1 -= moved;
          i2 += moved;
          slots += burst;
          energy += burst * params.energy.e1;
        }
      } else {
        if (i2 > 0) {
          const int burst = policy.burst2(i1, i2);
          int ok = 0;
          for (int k = 0; k < burst; ++k) ok += rng.bernoulli(1.0 - params.p2) ? 1 : 0;
          i2 -= std::min(ok, i2);
          slots += burst + 1;  // trailing ACK slot
          energy += burst * params.energy.e2 + params.energy.e_ack;
        }
      }
      turn_s1 = !turn_s1;
    }
    rep.run_samples.emplace_back(static_cast<double>(slots), energy);
    sum_t += static_cast<double>(slots);
    sum_t2 += static_cast<double>(slots) * static_cast<double>(slots);
    sum_e += energy;
    sum_e2 += energy * energy;
  }

  const double n = static_cast<double>(opt.runs);
  MetricEstimate mt;
  mt.name = "mean_time";
  mt.mean = sum_t / n;
  mt.se = std::sqrt(std::max(0.0, (sum_t2 / n - mt.mean * mt.mean) / (n - 1.0)));
  mt.count = opt.runs;
  MetricEstimate me;
  me.name = "mean_energy";
  me.mean = sum_e / n;
  me.se = std::sqrt(std::max(0.0, (sum_e2 / n - me.mean * me.mean) / (n - 1.0)));
  me.count = opt.runs;
  rep.metrics.push_back(mt);
  rep.metrics.push_back(me);
  return rep;
}

/// Empirical one-step transition histogram from a fixed state, with the
/// total-variation distance to an analytical kernel evaluated over a wide
/// delta box.
struct TransitionEstimate {
  std::map<std::vector<int>, long> counts;
  long samples = 0;
  double tv_distance = 0.0;
};

namespace detail {

template <class SampleFn, class KernelFn>
TransitionEstimate estimate_transition_impl(long samples, uint64_t seed, SampleFn sample,
                                            KernelFn kernel,
                                            const std::vector<std::vector<int>>& support) {
  if (samples < 10000)
    throw std::invalid_argument("estimate_transition: need at least 1e4 samples");
  TransitionEstimate est;
  est.samples = samples;
  for (long k = 0; k < samples; ++k) {
    CounterRng rng(seed, static_cast<uint64_t>(k) + 1);
    est.counts[sample(rng)] += 1;
  }
  double tv = 0.0;
  double covered = 0.0;
  for (const auto& delta : support) {
    const double p = kernel(delta);
    covered += p;
    const auto it = est.counts.find(delta);
    const double ph = it == est.counts.end()
                          ? 0.0
                          : static_cast<double>(it->second) / static_cast<double>(samples);
    tv += std::abs(ph - p);
  }
  for (const auto& [delta, cnt] : est.counts) {
    bool listed = false;
    for (const auto& d : support)
      if (d == delta) {
        listed = true;
        break;
      }
    if (!listed) tv += static_cast<double>(cnt) / static_cast<double>(samples);
  }
  tv += std::max(0.0, 1.0 - covered);  // analytic mass outside the box
  est.tv_distance = 0.5 * tv;
  return est;
}

}  // namespace detail

inline TransitionEstimate estimate_transition_genie_inter(const GenieState& s,
                                                          const LineNetworkParams& params,
                                                          long samples, uint64_t seed) {
  params.validate();
  const int x1 = poisson_tail_cutoff(params.lambda1, 1e-12) + 2;
  const int x2 = poisson_tail_cutoff(params.lambda2, 1e-12) + 2;
  std::vector<std::vector<int>> support;
  for (int d1 = -1; d1 <= x1; ++d1)
    for (int d2 = -1; d2 <= x2 + 1; ++d2) support.push_back({d1, d2});

  return detail::estimate_transition_impl(
      samples, seed,
      [&](CounterRng& rng) {
        const bool y1 = s.i1 > 0 && rng.bernoulli(1.0 - params.p1);
        const bool y2 = s.i2 > 0 && rng.bernoulli(1.0 - params.p2);
        const int a1 = rng.poisson(params.lambda1);
        const int a2 = rng.poisson(params.lambda2);
        return std::vector<int>{a1 - (y1 ? 1 : 0), a2 + (y1 ? 1 : 0) - (y2 ? 1 : 0)};
      },
      [&](const std::vector<int>& d) { return transition_prob(s, d[0], d[1], params); },
      support);
}

inline TransitionEstimate estimate_transition_genie_intra(
    const IntraState& s, const LineNetworkParams& params, const SchedulingPolicy& policy,
    ServiceMode mode, long samples, uint64_t seed) {
  params.validate();
  const int x1 = poisson_tail_cutoff(params.lambda1, 1e-12) + 2;
  const int x2 = poisson_tail_cutoff(params.lambda2, 1e-12) + 2;
  std::vector<std::vector<int>> support;
  for (int d1 = -1; d1 <= x1; ++d1)
    for (int d2 = -1; d2 <= 1; ++d2)
      for (int d3 = -1; d3 <= x2 + 1; ++d3) support.push_back({d1, d2, d3});

  return detail::estimate_transition_impl(
      samples, seed,
      [&](CounterRng& rng) {
        int flow;
        if (mode == ServiceMode::reassign_empty && s.i3 == 0) {
          flow = 1;
        } else if (mode == ServiceMode::reassign_empty && s.i2 == 0) {
          flow = 2;
        } else if (policy.chooser) {
          flow = policy.chooser(s);
        } else {
          flow = rng.bernoulli(policy.ps) ? 1 : 2;
        }
        const bool y1 = s.i1 > 0 && rng.bernoulli(1.0 - params.p1);
        const int i_served = flow == 1 ? s.i2 : s.i3;
        const bool y2 = i_served > 0 && rng.bernoulli(1.0 - params.p2);
        const int a1 = rng.poisson(params.lambda1);
        const int a2 = rng.poisson(params.lambda2);
        const int d1 = a1 - (y1 ? 1 : 0);
        const int d2 = (y1 ? 1 : 0) - (flow == 1 && y2 ? 1 : 0);
        const int d3 = a2 - (flow == 2 && y2 ? 1 : 0);
        return std::vector<int>{d1, d2, d3};
      },
      [&](const std::vector<int>& d) {
        return policy_kernel(s, d[0], d[1], d[2], params, policy, mode);
      },
      support);
}

}  // namespace lineflow

#endif  // LINEFLOW_SIMULATOR_HPP
