#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "t2i/common.hpp"

namespace t2i {

// Seeded random source. Gaussian draws go through an explicit Box-Muller
// transform with no cached spare, so the mt19937_64 engine is the entire
// state and serializes exactly.
class Rng {
 public:
  Rng() : eng_(0) {}
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t raw() { return eng_(); }

  // Uniform in [0, 1).
  real uniform() {
    return static_cast<real>(eng_() >> 11) * 0x1.0p-53;
  }

  real uniform(real lo, real hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection sampling keeps the draw unbiased.
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = eng_();
    } while (v >= limit);
    return v % n;
  }

  real normal() {
    real u1 = uniform();
    real u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  real normal(real mean, real stdev) { return mean + stdev * normal(); }

  // Split off an independent stream; advances this engine by one draw.
  // Used to derive per-purpose streams (init, data order, noise, ...)
  // from a single run seed.
  Rng fork(std::uint64_t salt) {
    std::uint64_t h = eng_() ^ (0x9e3779b97f4a7c15ull * (salt + 1));
    std::seed_seq seq{static_cast<std::uint32_t>(h),
                      static_cast<std::uint32_t>(h >> 32),
                      static_cast<std::uint32_t>(salt)};
    Rng out;
    out.eng_.seed(seq);
    return out;
  }

  std::string serialize() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    require(!is.fail(), "rng state failed to parse");
  }

  bool operator==(const Rng& o) const { return eng_ == o.eng_; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace t2i
