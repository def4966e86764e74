#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace cnv {

/// Per-replicate random stream.
///
/// Wraps a 64-bit Mersenne Twister and adds the handful of variates the
/// simulators need. Every replicate owns its own stream; streams are never
/// shared between threads.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}
  explicit RandomStream(std::seed_seq& seq) : engine_(seq) {}

  static constexpr result_type min() { return std::numeric_limits<result_type>::min(); }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t n) {
    std::uint64_t x = engine_();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        x = engine_();
        m = static_cast<__uint128_t>(x) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  bool coin() { return (engine_() >> 63) != 0; }

  double exponential(double rate);
  double normal() { return normal_(engine_); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Tags separating the stream families of different experiment stages, so that
/// e.g. the SDE ensemble of a study never reuses a population replicate stream.
enum class StreamTag : std::uint64_t {
  population = 1,
  initial_state = 2,
  diffusion = 3,
  toy = 4,
  all_or_nothing = 5,
  adjudication = 6,
  verification = 7,
  unit_test = 99,
};

/// Derives the stream for (master_seed, tag, repetition, replicate).
///
/// The derivation feeds the 32-bit halves of all four values, in that order,
/// through std::seed_seq and seeds mt19937_64 from it. std::seed_seq's mixing
/// algorithm is fixed by the standard, so streams are reproducible across
/// platforms and independent of the thread that happens to run a replicate.
RandomStream derive_stream(std::uint64_t master_seed, StreamTag tag, std::uint64_t repetition,
                           std::uint64_t replicate);

}  // namespace cnv
