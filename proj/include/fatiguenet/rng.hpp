#pragma once
#include <cmath>
#include <cstdint>
#include <vector>

namespace fatiguenet {

// xoshiro256++ seeded through splitmix64. The standard library distributions
// are implementation-defined, so uniform/normal draws are spelled out here to
// keep every artifact bit-reproducible across compilers.
class Rng {
public:
  explicit Rng(uint64_t seed, uint64_t stream = 0) {
    uint64_t x = seed;
    for (auto& si : s_) {
      x += 0x9e3779b97f4a7c15ull ^ stream;
      si = splitmix(x);
    }
    // decorrelate nearby (seed, stream) pairs
    for (int i = 0; i < 8; ++i) next();
  }

  uint64_t next() {
    uint64_t r = rotl(s_[0] + s_[3], 23) + s_[0];
    uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return r;
  }

  // [0, 1)
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal, Box-Muller (cosine branch only, so one value per call
  // and no hidden cache state)
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  // unbiased integer in [0, n)
  uint64_t below(uint64_t n) {
    uint64_t limit = n * ((~uint64_t(0)) / n);
    uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % n;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = size_t(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  Rng fork(uint64_t stream) const {
    Rng child(splitmix_const(s_[0] ^ s_[2]), stream);
    return child;
  }

private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static uint64_t splitmix(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  static uint64_t splitmix_const(uint64_t x) { return splitmix(x); }

  uint64_t s_[4];
};

}  // namespace fatiguenet
