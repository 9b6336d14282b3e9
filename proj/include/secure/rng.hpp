#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace secure {

/// Deterministic random source. Wraps mt19937_64 but implements the
/// distributions by hand (Box-Muller for normals), because the standard
/// library's distribution algorithms differ between toolchains and every
/// experiment here must reproduce bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi], inclusive.
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
    const std::uint64_t span = hi - lo + 1;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return lo + x % span;
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    if (!have_spare_) {
      double u1;
      do {
        u1 = uniform();
      } while (u1 <= 0.0);
      const double u2 = uniform();
      const double r = std::sqrt(-2.0 * std::log(u1));
      spare_ = r * std::sin(2.0 * M_PI * u2);
      have_spare_ = true;
      return mean + stddev * r * std::cos(2.0 * M_PI * u2);
    }
    have_spare_ = false;
    return mean + stddev * spare_;
  }

  std::vector<double> normal_vector(std::size_t count, double mean = 0.0,
                                    double stddev = 1.0) {
    std::vector<double> out(count);
    for (auto& v : out) v = normal(mean, stddev);
    return out;
  }

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = uniform_int(0, i - 1);
      std::swap(idx[i - 1], idx[j]);
    }
    return idx;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace secure
