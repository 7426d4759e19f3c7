#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace cream {

// splitmix64: cheap, well-mixed 64-bit hash used to derive independent
// sub-stream seeds from (base, path...) so every sampling site in a run is
// reproducible in isolation.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = splitmix64(base);
  for (std::uint64_t p : path) s = splitmix64(s ^ (p + 0x9e3779b97f4a7c15ULL));
  return s;
}

// Deterministic RNG wrapper.  Draw routines are hand-assembled from raw
// 64-bit outputs so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform double in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; the spare draw is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection-free modulo is biased for huge n; n here is always tiny
    // (candidate counts, prompt counts), so scale from the 53-bit uniform.
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
  }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace cream
