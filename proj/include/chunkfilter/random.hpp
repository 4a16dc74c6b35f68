#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace chunkfilter {

// std::mt19937_64 output is fully specified by the standard, but the
// <random> distributions and std::shuffle are not. Everything that must
// reproduce bit-for-bit across compilers goes through these two helpers.

// Uniform draw from [0, n) by rejection sampling, n >= 1.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t draw;
    do {
        draw = rng();
    } while (draw >= limit);
    return draw % n;
}

template <typename T>
void fisher_yates_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(uniform_index(rng, i));
        using std::swap;
        swap(items[i - 1], items[j]);
    }
}

} // namespace chunkfilter
