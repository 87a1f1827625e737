#pragma once

#include <complex>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace twrelay {

// Deterministic splittable random stream. Every consumer derives its own
// stream from (master seed, path of indices), so results are reproducible
// regardless of evaluation order or thread count. Gaussian variates come
// from an explicit Box-Muller transform instead of std::normal_distribution,
// whose output sequence is implementation defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // SplitMix64 finalizer, the usual bit mixer for seed derivation.
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  // Seed for the stream addressed by (master, path); fold of mixed indices.
  static std::uint64_t derive(std::uint64_t master,
                              std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = mix(master);
    for (std::uint64_t v : path) h = mix(h ^ mix(v));
    return h;
  }

  static Rng stream(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    return Rng(derive(master, path));
  }

  std::uint64_t next_u64() { return eng_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  // Standard normal, Box-Muller pair with one variate cached.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Circularly symmetric complex normal with unit variance.
  std::complex<double> cgaussian() {
    double re = gaussian();
    double im = gaussian();
    return {re * M_SQRT1_2, im * M_SQRT1_2};
  }

  // Two independent fair bits, used by the QPSK mapper.
  unsigned bits2() { return unsigned(eng_() >> 62); }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace twrelay
