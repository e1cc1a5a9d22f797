#ifndef LINEFLOW_GENIE_INTRA_HPP
#define LINEFLOW_GENIE_INTRA_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>

#include "lineflow/errors.hpp"
#include "lineflow/genie_inter.hpp"
#include "lineflow/kernels.hpp"
#include "lineflow/markov.hpp"

// Genie-aided full-duplex chain with intra-session coding: the relay keeps
// the two flows apart and must pick one of them to serve each slot. State
// (i1, i2, i3): flow-1 dof at S1, flow-1 dof at S2, flow-2 dof at S2.
//
// Conditioned on the served flow the kernel factorises into an (i1,i2)
// block and an i3 block, so the chain is stored as two Kronecker products
// mixed by a per-state scheduling weight instead of one assembled matrix.

namespace lineflow {

struct IntraState {
  int i1 = 0;
  int i2 = 0;
  int i3 = 0;
};

/// What happens when the scheduler picks a flow with an empty relay queue:
/// hand the slot to the other flow, or let it idle as scheduled.
enum class ServiceMode { reassign_empty, strict_schedule };

struct SchedulingPolicy {
  double ps = 1.0;  // probability of serving flow 1 (randomized policy)
  std::function<int(const IntraState&)> chooser;  // state-based policy, returns 1 or 2

  static SchedulingPolicy randomized(double ps) {
    if (!(ps >= 0.0 && ps <= 1.0))
      throw std::invalid_argument("Ps must be in [0,1]");
    SchedulingPolicy p;
    p.ps = ps;
    return p;
  }
  static SchedulingPolicy state_based(std::function<int(const IntraState&)> f) {
    SchedulingPolicy p;
    p.chooser = std::move(f);
    return p;
  }

  /// Effective probability that flow 1 is served from this state.
  double weight_flow1(const IntraState& s, ServiceMode mode) const {
    if (mode == ServiceMode::reassign_empty) {
      if (s.i3 == 0) return 1.0;
      if (s.i2 == 0) return 0.0;
    }
    if (chooser) {
      const int flow = chooser(s);
      if (flow != 1 && flow != 2)
        throw std::invalid_argument("state-based policy must return flow 1 or 2");
      return flow == 1 ? 1.0 : 0.0;
    }
    return ps;
  }
};

/// Kernel conditioned on flow 1 being served: flow-2 arrivals factored onto
/// i3, and the inter-session one-slot kernel with lambda2 = 0 on (i1, i2).
inline double transition_given_flow1(const IntraState& s, int d1, int d2, int d3,
                                     const LineNetworkParams& params) {
  if (s.i1 < 0 || s.i2 < 0 || s.i3 < 0)
    throw std::invalid_argument("state coordinates must be >= 0");
  const double arr3 = d3 >= 0 ? arrival_pmf(d3, 1, params.lambda2) : 0.0;
  if (arr3 == 0.0) return 0.0;
  LineNetworkParams inner = params;
  inner.lambda2 = 0.0;
  return arr3 * transition_prob({s.i1, s.i2}, d1, d2, inner);
}

/// Kernel conditioned on flow 2 being served: service/arrival bracket on
/// (i3, d3) times the S1 transfer bracket on (i1, d1) with d2 in {0, 1}.
inline double transition_given_flow2(const IntraState& s, int d1, int d2, int d3,
                                     const LineNetworkParams& params) {
  if (s.i1 < 0 || s.i2 < 0 || s.i3 < 0)
    throw std::invalid_argument("state coordinates must be >= 0");
  const ServiceSplit l3 = one_slot_service(s.i3, params.p2);
  const auto a2 = [&](int x) { return x >= 0 ? arrival_pmf(x, 1, params.lambda2) : 0.0; };
  const double bracket3 = l3.d1 * a2(d3 + 1) + l3.d0 * a2(d3);
  if (bracket3 == 0.0) return 0.0;

  const ServiceSplit l1 = one_slot_service(s.i1, params.p1);
  const auto a1 = [&](int x) { return x >= 0 ? arrival_pmf(x, 1, params.lambda1) : 0.0; };
  double bracket1 = 0.0;
  if (d2 == 1) bracket1 = l1.d1 * a1(d1 + 1);
  if (d2 == 0) bracket1 = l1.d0 * a1(d1);
  return bracket3 * bracket1;
}

/// Policy mixture of the two conditional kernels, with empty-queue
/// reassignment applied first in the default mode.
inline double policy_kernel(const IntraState& s, int d1, int d2, int d3,
                            const LineNetworkParams& params, const SchedulingPolicy& policy,
                            ServiceMode mode = ServiceMode::reassign_empty) {
  const double w = policy.weight_flow1(s, mode);
  double p = 0.0;
  if (w > 0.0) p += w * transition_given_flow1(s, d1, d2, d3, params);
  if (w < 1.0) p += (1.0 - w) * transition_given_flow2(s, d1, d2, d3, params);
  return p;
}

/// Kronecker-structured intra-session chain over [0,cap]^3.
class IntraChain final : public StochasticOperator {
 public:
  IntraChain(const LineNetworkParams& params, const SchedulingPolicy& policy,
             ServiceMode mode, int cap, double eps_tail = 1e-10)
      : cap_(cap), mode_(mode) {
    params.validate();
    if (cap < 1) throw std::invalid_argument("intra chain: cap must be >= 1");
    LineNetworkParams inner = params;
    inner.lambda2 = 0.0;
    const TruncatedChain k1 = build_chain(inner, cap, eps_tail);
    k1_ = k1.P;
    tail_mass_ = k1.tail_mass;
    build_transfer_only(params, eps_tail);
    build_i3_factors(params, eps_tail);
    build_weights(policy);
  }

  int cap() const { return cap_; }
  double tail_mass() const { return tail_mass_; }
  Eigen::Index index(int i1, int i2, int i3) const {
    const Eigen::Index side = cap_ + 1;
    return (static_cast<Eigen::Index>(i1) * side + i2) * side + i3;
  }
  IntraState state_of(Eigen::Index idx) const {
    const Eigen::Index side = cap_ + 1;
    return {static_cast<int>(idx / (side * side)), static_cast<int>((idx / side) % side),
            static_cast<int>(idx % side)};
  }

  Eigen::Index size() const override {
    const Eigen::Index side = cap_ + 1;
    return side * side * side;
  }

  void multiply_left(const Eigen::VectorXd& x, Eigen::VectorXd& y) const override {
    using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Index side = cap_ + 1;
    const Eigen::Index n12 = side * side;
    Eigen::VectorXd masked = x.cwiseProduct(weight1_);
    Eigen::Map<const MatrixRM> x1(masked.data(), n12, side);
    MatrixRM t1 = x1 * l1_;
    MatrixRM y1 = k1_.transpose() * t1;
    Eigen::VectorXd masked2 = x - masked;
    Eigen::Map<const MatrixRM> x2(masked2.data(), n12, side);
    MatrixRM t2 = x2 * l2_;
    y1 += k2_.transpose() * t2;
    y = Eigen::Map<Eigen::VectorXd>(y1.data(), size());
  }

  /// Row of the mixed kernel, for validation against the pointwise ops.
  double prob(const IntraState& from, const IntraState& to) const {
    const Eigen::Index side = cap_ + 1;
    const double w = weight1_[index(from.i1, from.i2, from.i3)];
    const Eigen::Index a = static_cast<Eigen::Index>(from.i1) * side + from.i2;
    const Eigen::Index b = static_cast<Eigen::Index>(to.i1) * side + to.i2;
    const double p1 = k1_.coeff(a, b) * l1_.coeff(from.i3, to.i3);
    const double p2 = k2_.coeff(a, b) * l2_.coeff(from.i3, to.i3);
    return w * p1 + (1.0 - w) * p2;
  }

 private:
  void build_transfer_only(const LineNetworkParams& params, double eps_tail) {
    const int side = cap_ + 1;
    const Eigen::Index n12 = static_cast<Eigen::Index>(side) * side;
    std::vector<Triplet> trips;
    for (int i1 = 0; i1 < side; ++i1) {
      const ServiceSplit l1 = one_slot_service(i1, params.p1);
      for (int i2 = 0; i2 < side; ++i2) {
        const Eigen::Index from = static_cast<Eigen::Index>(i1) * side + i2;
        for (int y1 = 0; y1 <= 1; ++y1) {
          const double w = (y1 == 0) ? l1.d0 : l1.d1;
          if (w == 0.0) continue;
          const int t2 = std::min(i2 + y1, cap_);
          const ArrivalSpread sp = spread_arrivals(i1 - y1, params.lambda1, cap_, eps_tail);
          for (const auto& [t1, m] : sp.mass)
            trips.emplace_back(static_cast<int>(from),
                               static_cast<int>(static_cast<Eigen::Index>(t1) * side + t2),
                               w * m);
        }
      }
    }
    k2_.resize(n12, n12);
    k2_.setFromTriplets(trips.begin(), trips.end());
  }

  void build_i3_factors(const LineNetworkParams& params, double eps_tail) {
    const int side = cap_ + 1;
    std::vector<Triplet> t1, t2;
    for (int i3 = 0; i3 < side; ++i3) {
      const ArrivalSpread arr = spread_arrivals(i3, params.lambda2, cap_, eps_tail);
      for (const auto& [t, m] : arr.mass) t1.emplace_back(i3, t, m);
      const ServiceSplit l3 = one_slot_service(i3, params.p2);
      for (int y = 0; y <= 1; ++y) {
        const double w = (y == 0) ? l3.d0 : l3.d1;
        if (w == 0.0) continue;
        const ArrivalSpread sp = spread_arrivals(i3 - y, params.lambda2, cap_, eps_tail);
        for (const auto& [t, m] : sp.mass) t2.emplace_back(i3, t, w * m);
      }
    }
    l1_.resize(side, side);
    l1_.setFromTriplets(t1.begin(), t1.end());
    l2_.resize(side, side);
    l2_.setFromTriplets(t2.begin(), t2.end());
  }

  void build_weights(const SchedulingPolicy& policy) {
    weight1_.resize(size());
    const int side = cap_ + 1;
    for (int i1 = 0; i1 < side; ++i1)
      for (int i2 = 0; i2 < side; ++i2)
        for (int i3 = 0; i3 < side; ++i3)
          weight1_[index(i1, i2, i3)] = policy.weight_flow1({i1, i2, i3}, mode_);
  }

  int cap_;
  ServiceMode mode_;
  SparseRowMatrix k1_, k2_;  // (i1,i2) factors: flow-1 service / transfer only
  SparseRowMatrix l1_, l2_;  // i3 factors: arrivals only / service + arrivals
  Eigen::VectorXd weight1_;
  double tail_mass_ = 0.0;
};

struct IntraFlowMetrics {
  double d1_flow1 = 0.0;       // E[D1^1]
  double d2_flow1 = 0.0;       // E[D2^1]
  double d2_flow2 = 0.0;       // E[D2^2]
  double flow1_total = 0.0;
  double flow2_total = 0.0;
  double fairness_gap = 0.0;   // |flow1_total - flow2_total|
  double gap_signed = 0.0;     // flow1_total - flow2_total
};

struct IntraReport {
  IntraFlowMetrics metrics;
  SteadyState steady;
  int cap = 0;
  double tail_mass = 0.0;
};

struct IntraAnalysisOptions {
  int cap = 60;
  double eps_tail = 1e-10;
  double tol = 1e-10;
  const Eigen::VectorXd* warm_start = nullptr;
  long max_iters = 500000;
};

inline void check_intra_stability(const LineNetworkParams& params,
                                  const SchedulingPolicy& policy, ServiceMode mode) {
  if (!(params.lambda1 < 1.0 - params.p1))
    throw InstabilityError("intra: flow 1 unstable at S1 (requires lambda1 < 1-p1)");
  if (mode == ServiceMode::strict_schedule && !policy.chooser) {
    if (!(params.lambda1 < policy.ps * (1.0 - params.p2)))
      throw InstabilityError(
          "intra: flow 1 unstable at S2 under strict schedule (requires lambda1 < Ps*(1-p2))");
    if (!(params.lambda2 < (1.0 - policy.ps) * (1.0 - params.p2)))
      throw InstabilityError(
          "intra: flow 2 unstable at S2 under strict schedule (requires lambda2 < (1-Ps)*(1-p2))");
    return;
  }
  if (!(params.lambda1 + params.lambda2 < 1.0 - params.p2))
    throw InstabilityError("intra: flows at S2 unstable (requires lambda1+lambda2 < 1-p2)");
}

/// Steady-state per-flow stage delays by Little's law on the 3-coordinate
/// truncated chain.
inline IntraReport intra_metrics(const LineNetworkParams& params, const SchedulingPolicy& policy,
                                 const IntraAnalysisOptions& opt = {},
                                 ServiceMode mode = ServiceMode::reassign_empty) {
  params.validate();
  check_intra_stability(params, policy, mode);
  if (!(params.lambda1 > 0.0))
    throw std::domain_error("intra_metrics: lambda1 must be > 0");

  const IntraChain chain(params, policy, mode, opt.cap, opt.eps_tail);
  IntraReport r;
  r.cap = opt.cap;
  r.tail_mass = chain.tail_mass();
  r.steady = stationary_by_power(chain, opt.tol, opt.max_iters, opt.warm_start);
  r.steady.cap = opt.cap;

  const int side = opt.cap + 1;
  double e1 = 0.0, e2 = 0.0, e3 = 0.0;
  for (int i1 = 0; i1 < side; ++i1)
    for (int i2 = 0; i2 < side; ++i2)
      for (int i3 = 0; i3 < side; ++i3) {
        const double pi = r.steady.pi[chain.index(i1, i2, i3)];
        e1 += i1 * pi;
        e2 += i2 * pi;
        e3 += i3 * pi;
      }

  IntraFlowMetrics& m = r.metrics;
  m.d1_flow1 = e1 / params.lambda1;
  m.d2_flow1 = e2 / params.lambda1;
  m.d2_flow2 = params.lambda2 > 0.0 ? e3 / params.lambda2 : 0.0;
  m.flow1_total = m.d1_flow1 + m.d2_flow1;
  m.flow2_total = m.d2_flow2;
  m.gap_signed = m.flow1_total - m.flow2_total;
  m.fairness_gap = std::abs(m.gap_signed);
  return r;
}

struct FairnessResult {
  bool found = false;
  double ps = 0.0;
  double gap = 0.0;  // signed achieved gap at ps
  int evals = 0;
};

/// Bisection on Ps for |flow1_total - flow2_total| <= tol. Returns
/// found = false when the gap does not change sign on the probe interval.
inline FairnessResult fairness_solve(const LineNetworkParams& params, int cap, double tol,
                                     ServiceMode mode = ServiceMode::reassign_empty,
                                     double eps_tail = 1e-10) {
  params.validate();
  if (!(params.lambda1 > 0.0 && params.lambda2 > 0.0))
    throw std::domain_error("fairness_solve: both arrival rates must be > 0");

  FairnessResult out;
  Eigen::VectorXd warm;
  const auto gap_at = [&](double ps) {
    IntraAnalysisOptions opt;
    opt.cap = cap;
    opt.eps_tail = eps_tail;
    opt.warm_start = warm.size() > 0 ? &warm : nullptr;
    const IntraReport r = intra_metrics(params, SchedulingPolicy::randomized(ps), opt, mode);
    warm = r.steady.pi;
    ++out.evals;
    return r.metrics.gap_signed;
  };

  if (std::isinf(tol)) {
    out.ps = 0.5;
    out.gap = gap_at(0.5);
    out.found = true;
    return out;
  }

  double lo = 0.0, hi = 1.0;
  if (mode == ServiceMode::strict_schedule) {
    lo = std::min(1.0, params.lambda1 / (1.0 - params.p2)) + 1e-3;
    hi = std::max(0.0, 1.0 - params.lambda2 / (1.0 - params.p2)) - 1e-3;
    if (!(lo < hi)) return out;
  }
  double glo = gap_at(lo);
  double ghi = gap_at(hi);
  if (std::abs(glo) <= tol) {
    out.found = true;
    out.ps = lo;
    out.gap = glo;
    return out;
  }
  if (std::abs(ghi) <= tol) {
    out.found = true;
    out.ps = hi;
    out.gap = ghi;
    return out;
  }
  if (glo * ghi > 0.0) {
    out.ps = std::abs(glo) < std::abs(ghi) ? lo : hi;
    out.gap = std::abs(glo) < std::abs(ghi) ? glo : ghi;
    return out;  // no fair point in (0,1)
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double gmid = gap_at(mid);
    out.ps = mid;
    out.gap = gmid;
    if (std::abs(gmid) <= tol || hi - lo < 1e-9) {
      out.found = std::abs(gmid) <= tol;
      return out;
    }
    if ((gmid > 0.0) == (glo > 0.0)) {
      lo = mid;
      glo = gmid;
    } else {
      hi = mid;
      ghi = gmid;
    }
  }
  return out;
}

}  // namespace lineflow

#endif  // LINEFLOW_GENIE_INTRA_HPP
