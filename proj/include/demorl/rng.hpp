#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace demorl {

using Rng = std::mt19937_64;

// Stateless mixer used by the seed splitter.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// One master seed fans out to per-module seeds through these two
// derivations; a (master, tag) or (master, tag, index) pair always maps
// to the same stream. See README "Seeding".
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the tag
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return splitmix64(master ^ splitmix64(h));
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t index) {
    return splitmix64(derive_seed(master, tag) + 0x632be59bd9b4e019ULL * (index + 1));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace demorl
