#pragma once

#include <cmath>
#include <cstdint>

namespace qlc {

inline std::uint64_t splitmix64_next(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// One independent xoshiro256** stream per Monte Carlo replication, keyed by
// (master_seed, counter). Samplers are hand-rolled so that results do not
// depend on the standard library implementation or on scheduling.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t counter) {
    std::uint64_t x = master_seed ^ (0xd1342543de82ef95ULL * (counter + 1));
    for (auto& si : s_) si = splitmix64_next(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform on [0,1)
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform on (0,1], safe as a log argument
  double uniform01_pos() { return 1.0 - uniform01(); }

  double normal() {
    const double u = uniform01_pos();
    const double v = uniform01();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(6.283185307179586476925286766559 * v);
  }

  // Knuth product method; Poisson additivity splits large means.
  long poisson(double mean) {
    if (mean <= 0.0) return 0;
    if (mean > 30.0) return poisson(mean / 2.0) + poisson(mean - mean / 2.0);
    const double limit = std::exp(-mean);
    long k = 0;
    double prod = uniform01_pos();
    while (prod > limit) {
      ++k;
      prod *= uniform01_pos();
    }
    return k;
  }

  int bernoulli(double prob) { return uniform01() < prob ? 1 : 0; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
};

}  // namespace qlc
