#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace agbmap {

using Engine = std::mt19937_64;

/// Independent, reproducible substream for (seed, stream ids...). Used so that
/// per-tree and per-candidate randomness does not depend on execution order.
inline Engine make_engine(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {})
{
    std::vector<std::uint32_t> words;
    words.reserve(2 + 2 * stream.size());
    words.push_back(static_cast<std::uint32_t>(seed));
    words.push_back(static_cast<std::uint32_t>(seed >> 32));
    for (auto s : stream) {
        words.push_back(static_cast<std::uint32_t>(s));
        words.push_back(static_cast<std::uint32_t>(s >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return Engine(seq);
}

/// A 64-bit seed for child computations, derived like make_engine.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> stream)
{
    return make_engine(seed, stream)();
}

} // namespace agbmap
