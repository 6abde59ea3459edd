#pragma once
// Deterministic named RNG substreams derived from a master seed.

#include <cstdint>
#include <random>
#include <string_view>

namespace hgrec {

// FNV-1a so stream derivation does not depend on std::hash.
inline std::uint64_t hash_combine(std::uint64_t seed, std::string_view name,
                                  std::uint64_t index = 0) {
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&h](std::uint64_t x) {
        for (int i = 0; i < 8; ++i) {
            h ^= (x >> (8 * i)) & 0xff;
            h *= 1099511628211ull;
        }
    };
    mix(seed);
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    mix(index);
    return h;
}

inline std::mt19937_64 substream(std::uint64_t seed, std::string_view name,
                                 std::uint64_t index = 0) {
    return std::mt19937_64(hash_combine(seed, name, index));
}

inline double uniform01(std::mt19937_64& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double gaussian(std::mt19937_64& rng) {
    return std::normal_distribution<double>(0.0, 1.0)(rng);
}

// Uniform integer in [0, n).
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace hgrec
