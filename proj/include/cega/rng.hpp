#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cega {

using Rng = std::mt19937_64;

// Derives an independent seed for a named substream of a root seed, e.g.
// substream(root, "selector"). Used so that toggling one component does not
// shift the random draws of another.
std::uint64_t substream(std::uint64_t root, std::string_view name);
std::uint64_t substream(std::uint64_t root, std::uint64_t index);

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Uniform double in [0, 1) built from the top 53 bits; identical across
// standard library implementations, unlike std::uniform_real_distribution.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// 64-bit FNV-1a hash; the config digest in result files is its hex form.
std::uint64_t fnv1a(std::string_view text);

}  // namespace cega
