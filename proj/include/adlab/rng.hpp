#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace adlab {

// Deterministic stream derivation: every stochastic call in the project pulls
// from an RngStream derived from (master seed, purpose, step, sample) so that
// reruns with the same config are bit-identical and independent cells never
// share a stream.

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(mix64(seed)), seed_(seed) {}

  // Child stream keyed by up to three indices; children are independent of
  // the parent's draw position.
  RngStream child(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
    std::uint64_t s = seed_;
    s = mix64(s ^ mix64(a + 0x100));
    s = mix64(s ^ mix64(b + 0x200));
    s = mix64(s ^ mix64(c + 0x300));
    return RngStream(s);
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on the open interval (0,1); safe inside log().
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  // Standard normal via Box-Muller (portable, unlike std::normal_distribution).
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  double gumbel() { return -std::log(-std::log(uniform())); }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

 private:
  std::mt19937_64 gen_;
  std::uint64_t seed_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace adlab
