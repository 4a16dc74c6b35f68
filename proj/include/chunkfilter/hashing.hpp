#pragma once

#include <cstdint>
#include <string_view>

namespace chunkfilter {

// FNV-1a over bytes. Stable across platforms; used for cache keys, feature
// hashing, and seed derivation, never for adversarial inputs.
constexpr std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Finalizer from the splitmix64 generator; good avalanche, cheap.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

} // namespace chunkfilter
