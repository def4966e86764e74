#include "cnv/rng.hpp"

#include <cmath>

namespace cnv {

double RandomStream::exponential(double rate) {
  // 1 - u lies in (0, 1], so the log is finite.
  return -std::log1p(-uniform()) / rate;
}

RandomStream derive_stream(std::uint64_t master_seed, StreamTag tag, std::uint64_t repetition,
                           std::uint64_t replicate) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  const auto t = static_cast<std::uint64_t>(tag);
  std::seed_seq seq{lo(master_seed), hi(master_seed), lo(t),         hi(t),
                    lo(repetition),  hi(repetition),  lo(replicate), hi(replicate)};
  return RandomStream(seq);
}

}  // namespace cnv
