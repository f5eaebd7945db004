#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <random>
#include <thread>
#include <vector>

namespace mvface {

/// Deterministic PRNG used everywhere seeds matter. The generator is a
/// standard mt19937_64; uniform and Gaussian draws are derived from it with
/// fixed arithmetic (53-bit mantissa scaling, Box-Muller) instead of the
/// library distributions, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    // mt19937_64 per the C++ standard; state initialized in the constructor.
    return state_();
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1]; safe as a log() argument.
  double uniform_open0() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller. Two uniforms are consumed per draw so
  /// the stream position does not depend on caching.
  double normal() {
    const double u1 = uniform_open0();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 state_;
};

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

/// Parallelism cap from MVFACE_THREADS; defaults to 1 (serial) so results are
/// trivially reproducible unless the user opts in.
inline int env_thread_cap() {
  const char* env = std::getenv("MVFACE_THREADS");
  if (!env) return 1;
  const int n = std::atoi(env);
  return n > 0 ? n : 1;
}

/// Runs fn(i) for i in [0, n). With threads <= 1 this is a plain loop.
/// Work items must write to disjoint locations; chunks are claimed through an
/// atomic counter, so scheduling never affects the values written.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = std::min(threads, n);
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace mvface
