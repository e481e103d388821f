#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace gompertz {

/// SplitMix64 finaliser; a bijective avalanche mix of a 64-bit word.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Derive an independent substream key from a parent key and a path of
/// counters (e.g. {test index, replicate, attempt}). Depends only on the
/// values, never on call order, so parallel execution stays reproducible.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> counters) noexcept {
    std::uint64_t key = splitmix64(parent);
    for (std::uint64_t c : counters) key = splitmix64(key ^ splitmix64(c + 0x632BE59BD9B4E019ULL));
    return key;
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t parent, std::initializer_list<std::uint64_t> counters) {
    return Engine(derive_seed(parent, counters));
}

}  // namespace gompertz
