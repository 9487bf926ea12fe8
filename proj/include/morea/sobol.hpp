#pragma once

// Four-dimensional Sobol sequence (Joe-Kuo direction numbers) with XOR
// scrambling, plus the hashing helpers used to seed it.

#include <array>
#include <cstdint>
#include <span>

#include "morea/vec3.hpp"

namespace morea {

inline constexpr int kSobolDims = 4;

class Sobol4 {
  public:
    /// `scramble` words are XORed into every output of the matching dimension.
    explicit Sobol4(std::array<std::uint32_t, kSobolDims> scramble = {});

    /// Integer point of index i (direct, not Gray-code order).
    std::array<std::uint32_t, kSobolDims> point_bits(std::uint32_t i) const;
    /// Point of index i mapped to the open interval (0, 1).
    std::array<double, kSobolDims> point(std::uint32_t i) const;

  private:
    std::array<std::array<std::uint32_t, 32>, kSobolDims> v_{};
    std::array<std::uint32_t, kSobolDims> scramble_{};
};

/// FNV-1a over the bytes of a 64-bit word sequence.
std::uint64_t fnv1a64(std::span<const std::int64_t> words);

/// Hash of coordinates quantized to 1e-4 mm.
std::uint64_t hash_coordinates(std::span<const Vec3> points);

std::uint64_t splitmix64(std::uint64_t x);

/// Four 32-bit scramble words derived from a 64-bit seed.
std::array<std::uint32_t, kSobolDims> scramble_words(std::uint64_t seed);

} // namespace morea
