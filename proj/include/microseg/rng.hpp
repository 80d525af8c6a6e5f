#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace microseg::rng {

// splitmix64 finalizer; used to derive well-separated per-module seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Module seed = splitmix64(master + offset * golden). Offsets are part of the
// reproducibility contract and must never be reordered.
enum class StreamId : std::uint64_t {
  coefficients = 1,
  population = 2,
  train_init = 3,
  train_shuffle = 4,
  split = 5,
  kmeans = 6,
  null_permutation = 7,
  plot_sample = 8,
  gradcheck = 9,
};

inline std::uint64_t derive(std::uint64_t master, StreamId id) {
  return splitmix64(master + static_cast<std::uint64_t>(id) * 0x9E3779B97F4A7C15ULL);
}

// Deterministic random stream. The engine (mt19937_64) is fully specified by
// the standard; the distributions below are hand-rolled because the standard
// library ones are implementation-defined and would break cross-compiler
// reproducibility of artifacts.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller, pairs cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Fisher-Yates.
  template <class T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(i + 1));
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace microseg::rng
