#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lineflow/genie_inter.hpp"
#include "lineflow/genie_intra.hpp"
#include "lineflow/rng.hpp"
#include "lineflow/simulator.hpp"

using namespace lineflow;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

LineNetworkParams fig2_params(double lambda1 = 0.12) {
  LineNetworkParams p;
  p.lambda1 = lambda1;
  p.lambda2 = 0.25;
  p.p1 = 0.3;
  p.p2 = 0.4;
  p.energy.e1 = 1.0;
  p.energy.e2 = 2.0;
  return p;
}

}  // namespace

TEST_CASE("counter rng streams are independent of draw interleaving") {
  CounterRng a(42, 0);
  CounterRng b(42, 0);
  for (int k = 0; k < 1000; ++k) CHECK(a.next_u64() == b.next_u64());
  CounterRng c(42, 1);
  CHECK(c.next_u64() != CounterRng(42, 0).next_u64());
  CHECK(CounterRng(42, 7).next_u64() == CounterRng(42, 7).next_u64());
}

TEST_CASE("counter rng uniform and poisson sanity") {
  CounterRng rng(7, 0);
  double acc = 0.0;
  const int n = 200000;
  for (int k = 0; k < n; ++k) acc += rng.uniform01();
  CHECK_THAT(acc / n, WithinAbs(0.5, 0.01));
  CounterRng rng2(7, 1);
  long total = 0;
  for (int k = 0; k < n; ++k) total += rng2.poisson(0.37);
  CHECK_THAT(static_cast<double>(total) / n, WithinAbs(0.37, 0.01));
  CHECK(rng2.poisson(0.0) == 0);
}

TEST_CASE("simulation is bit-reproducible for a fixed seed") {
  const SimOptions opt{.seed = 99, .slots = 20000};
  const SimReport a = simulate_genie_inter(fig2_params(), opt);
  const SimReport b = simulate_genie_inter(fig2_params(), opt);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (size_t k = 0; k < a.metrics.size(); ++k) {
    CHECK(a.metrics[k].mean == b.metrics[k].mean);
    CHECK(a.metrics[k].se == b.metrics[k].se);
  }
  SimOptions other = opt;
  other.seed = 100;
  const SimReport c = simulate_genie_inter(fig2_params(), other);
  CHECK(a.mean_of("mean_i1") != c.mean_of("mean_i1"));
}

TEST_CASE("zero arrivals mean an idle network") {
  LineNetworkParams params;
  params.p1 = 0.3;
  params.p2 = 0.4;
  const SimReport rep = simulate_genie_inter(params, {.seed = 1, .slots = 5000});
  CHECK(rep.mean_of("mean_i1") == 0.0);
  CHECK(rep.mean_of("mean_i2") == 0.0);
  CHECK(rep.mean_of("energy_per_packet_s1") == 0.0);
  CHECK_FALSE(rep.unstable);
}

TEST_CASE("genie inter simulation matches the chain analytics") {
  const LineNetworkParams params = fig2_params();
  const GenieInterReport an = analyze_genie_inter(params, {.cap = 60, .auto_cap = false});
  const SimReport sim = simulate_genie_inter(params, {.seed = 2024, .slots = 1000000});

  CHECK_THAT(sim.mean_of("delay_node1"), WithinRel(an.metrics.delay_node1, 0.02));
  CHECK_THAT(sim.mean_of("delay_node2"), WithinRel(an.metrics.delay_node2, 0.02));
  CHECK_THAT(sim.mean_of("energy_per_packet_s1"), WithinRel(an.metrics.energy_per_packet_s1, 0.02));
  CHECK_THAT(sim.mean_of("energy_per_packet_s2"), WithinRel(an.metrics.energy_per_packet_s2, 0.02));
  CHECK_THAT(sim.mean_of("busy_frac1"), WithinRel(1.0 - an.p_empty1, 0.02));

  // Monte Carlo occupancy of the empty state against the stationary mass.
  const MetricEstimate* p00 = sim.find("p_state_00");
  const double pi00 = an.steady.pi[0];
  CHECK(std::abs(p00->mean - pi00) <= 3.0 * p00->se);
}

TEST_CASE("little's law closes inside the simulator") {
  const SimReport sim = simulate_genie_inter(fig2_params(), {.seed = 5, .slots = 800000});
  const double lhs1 = sim.mean_of("mean_i1") / sim.mean_of("rate1");
  CHECK_THAT(lhs1, WithinRel(sim.mean_of("delay_node1"), 0.01));
  const double lhs2 = sim.mean_of("mean_i2") / (sim.mean_of("rate1") + sim.mean_of("rate2"));
  CHECK_THAT(lhs2, WithinRel(sim.mean_of("delay_node2"), 0.01));
}

TEST_CASE("unstable configurations are flagged, not aborted") {
  LineNetworkParams bad;
  bad.lambda1 = 0.9;
  bad.lambda2 = 0.4;
  bad.p1 = 0.5;
  bad.p2 = 0.5;
  const SimReport rep =
      simulate_genie_inter(bad, {.seed = 3, .slots = 400000, .occupancy_limit = 20000});
  CHECK(rep.unstable);
}

TEST_CASE("one-step histogram agrees with the worked kernel values") {
  LineNetworkParams params;
  params.p1 = 0.3;
  params.p2 = 0.4;
  const TransitionEstimate est = estimate_transition_genie_inter({1, 1}, params, 1000000, 77);
  CHECK(est.tv_distance < 0.003);
  const double p_42 = static_cast<double>(est.counts.at({-1, 0})) / est.samples;
  CHECK_THAT(p_42, WithinAbs(0.42, 0.005));
  // Seed change stays within the sampling band.
  const TransitionEstimate est2 = estimate_transition_genie_inter({1, 1}, params, 1000000, 1234);
  CHECK(est2.tv_distance < 4.0 / std::sqrt(1e6));
}

TEST_CASE("one-step histograms match kernels on probe states") {
  const LineNetworkParams params = fig2_params();
  for (const auto& s : {GenieState{0, 0}, GenieState{2, 1}, GenieState{1, 3}}) {
    const TransitionEstimate est = estimate_transition_genie_inter(s, params, 200000, 11);
    INFO("state (" << s.i1 << "," << s.i2 << ")");
    CHECK(est.tv_distance <= 4.0 / std::sqrt(2e5));
  }
}

TEST_CASE("degenerate state yields a degenerate histogram") {
  LineNetworkParams params;
  params.p1 = 0.3;
  params.p2 = 0.4;
  const TransitionEstimate est = estimate_transition_genie_inter({0, 0}, params, 10000, 5);
  CHECK(est.counts.size() == 1);
  CHECK(est.counts.at({0, 0}) == est.samples);
  CHECK(est.tv_distance < 1e-12);
}

TEST_CASE("intra simulation matches the kronecker chain analytics") {
  const LineNetworkParams params = fig2_params();
  const SchedulingPolicy policy = SchedulingPolicy::randomized(0.75);
  const IntraReport an = intra_metrics(params, policy, {.cap = 40});
  const SimReport sim = simulate_genie_intra(params, policy, ServiceMode::reassign_empty,
                                             {.seed = 31, .slots = 1000000});
  CHECK_THAT(sim.mean_of("d1_flow1"), WithinRel(an.metrics.d1_flow1, 0.02));
  CHECK_THAT(sim.mean_of("d2_flow1"), WithinRel(an.metrics.d2_flow1, 0.03));
  CHECK_THAT(sim.mean_of("d2_flow2"), WithinRel(an.metrics.d2_flow2, 0.03));
}

TEST_CASE("intra one-step histogram respects the policy mixture") {
  const LineNetworkParams params = fig2_params();
  const SchedulingPolicy policy = SchedulingPolicy::randomized(0.6);
  const TransitionEstimate est = estimate_transition_genie_intra(
      {1, 1, 2}, params, policy, ServiceMode::reassign_empty, 200000, 13);
  CHECK(est.tv_distance <= 4.0 / std::sqrt(2e5));
}

TEST_CASE("batch completion runs reproduce the geometric closed form") {
  LineNetworkParams params;
  params.p1 = 0.0;
  params.p2 = 0.5;
  params.energy.e2 = 2.0;
  const PolicyTable policy = PolicyTable::backlog(0, 1);
  const SimReport rep = simulate_hd_batch(0, 1, params, policy, {.seed = 17, .runs = 100000});
  const MetricEstimate* mt = rep.find("mean_time");
  CHECK(std::abs(mt->mean - 4.0) <= 3.0 * mt->se);
  const MetricEstimate* me = rep.find("mean_energy");
  CHECK(std::abs(me->mean - 4.0) <= 3.0 * me->se);
  CHECK(rep.run_samples.size() == 100000);
}

TEST_CASE("half-duplex online with no arrivals never queues") {
  LineNetworkParams params;
  params.p1 = 0.3;
  params.p2 = 0.4;
  const OnlinePolicy policy = OnlinePolicy::backlog(4, 4, 4);
  const SimReport rep = simulate_hd_online(params, policy, {.seed = 23, .slots = 20000});
  CHECK(rep.mean_of("mean_i1") == 0.0);
  CHECK(rep.mean_of("mean_i2") == 0.0);
  CHECK(rep.mean_of("energy_per_packet_s1") == 0.0);
}
