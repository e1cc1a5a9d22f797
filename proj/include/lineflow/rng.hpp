#ifndef LINEFLOW_RNG_HPP
#define LINEFLOW_RNG_HPP

#include <cmath>
#include <cstdint>

namespace lineflow {

// Counter-based generator: draw n of stream s under seed k is
//   mix64(key(k, s) + (n + 1) * 0x9E3779B97F4A7C15)
// where mix64 is the splitmix64 finaliser and key folds the stream id into
// the seed with the same mixer. Streams are therefore independent of
// scheduling: any (seed, stream, draw index) triple names one fixed uint64.
class CounterRng {
 public:
  explicit CounterRng(uint64_t seed, uint64_t stream = 0)
      : key_(mix64(seed ^ mix64(stream + 0x9E3779B97F4A7C15ull))) {}

  uint64_t next_u64() {
    counter_ += 0x9E3779B97F4A7C15ull;
    return mix64(key_ + counter_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Poisson by Knuth inversion; draws nothing when mean == 0.
  int poisson(double mean) {
    if (mean <= 0.0) return 0;
    const double limit = std::exp(-mean);
    int k = 0;
    double prod = uniform01();
    while (prod > limit) {
      ++k;
      prod *= uniform01();
    }
    return k;
  }

 private:
  static uint64_t mix64(uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace lineflow

#endif  // LINEFLOW_RNG_HPP
