#pragma once

#include <cstdint>
#include <random>

namespace lrtl {

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream, index). Streams keep unrelated
/// random draws (layout, noise, restarts, trials) from sharing a sequence.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

}  // namespace lrtl
