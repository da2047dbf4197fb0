#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace autohr {

// splitmix64 generator. Used everywhere instead of <random> distributions so
// that every sampled value is identical across standard library
// implementations, which keeps datasets and training runs reproducible

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, spare value cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, n). Modulo bias is negligible for the n used here.
  int64_t below(int64_t n) { return int64_t(next_u64() % uint64_t(n)); }

  // Fisher-Yates. Hand-rolled so shuffles do not depend on std::shuffle's
  // unspecified consumption pattern.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[size_t(below(int64_t(i)))]);
    }
  }

  // Independent stream keyed by (seed, a, b, c). Streams with different keys
  // are uncorrelated for practical purposes.
  static Rng stream(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    Rng r(seed);
    r.state_ ^= 0x632be59bd9b4e019ull + (r.next_u64() ^ a);
    r.state_ ^= 0x9e6c63d0876a9a35ull + (r.next_u64() ^ b);
    r.state_ ^= 0xd1b54a32d192ed03ull + (r.next_u64() ^ c);
    r.next_u64();
    return r;
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace autohr
