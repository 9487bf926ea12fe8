#include "morea/sobol.hpp"

#include <cmath>
#include <cstring>

namespace morea {

namespace {

struct DirectionSpec {
    int s;
    unsigned a;
    std::array<std::uint32_t, 3> m;
};

// Dimensions 2..4 of the new-joe-kuo-6.21201 table.
constexpr std::array<DirectionSpec, 3> kJoeKuo{{{1, 0, {1, 0, 0}}, {2, 1, {1, 3, 0}}, {3, 1, {1, 3, 1}}}};

} // namespace

Sobol4::Sobol4(std::array<std::uint32_t, kSobolDims> scramble) : scramble_(scramble) {
    for (int b = 0; b < 32; ++b) v_[0][static_cast<std::size_t>(b)] = 1u << (31 - b);
    for (std::size_t d = 1; d < kSobolDims; ++d) {
        const DirectionSpec &spec = kJoeKuo[d - 1];
        auto &v = v_[d];
        const auto s = static_cast<std::size_t>(spec.s);
        for (std::size_t i = 0; i < s; ++i) v[i] = spec.m[i] << (31 - i);
        for (std::size_t i = s; i < 32; ++i) {
            std::uint32_t x = v[i - s] ^ (v[i - s] >> s);
            for (std::size_t k = 1; k < s; ++k)
                if ((spec.a >> (s - 1 - k)) & 1u) x ^= v[i - k];
            v[i] = x;
        }
    }
}

std::array<std::uint32_t, kSobolDims> Sobol4::point_bits(std::uint32_t i) const {
    std::array<std::uint32_t, kSobolDims> x = scramble_;
    for (std::size_t b = 0; i != 0; ++b, i >>= 1)
        if (i & 1u)
            for (std::size_t d = 0; d < kSobolDims; ++d) x[d] ^= v_[d][b];
    return x;
}

std::array<double, kSobolDims> Sobol4::point(std::uint32_t i) const {
    const auto bits = point_bits(i);
    std::array<double, kSobolDims> r{};
    for (std::size_t d = 0; d < kSobolDims; ++d) r[d] = (static_cast<double>(bits[d]) + 0.5) / 4294967296.0;
    return r;
}

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;

std::uint64_t fnv1a_word(std::uint64_t h, std::int64_t w) {
    unsigned char bytes[8];
    std::memcpy(bytes, &w, 8);
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace

std::uint64_t fnv1a64(std::span<const std::int64_t> words) {
    std::uint64_t h = kFnvOffset;
    for (std::int64_t w : words) h = fnv1a_word(h, w);
    return h;
}

std::uint64_t hash_coordinates(std::span<const Vec3> points) {
    std::uint64_t h = kFnvOffset;
    for (const Vec3 &p : points)
        for (std::size_t a = 0; a < 3; ++a) h = fnv1a_word(h, std::llround(p[a] * 1e4));
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::array<std::uint32_t, kSobolDims> scramble_words(std::uint64_t seed) {
    const std::uint64_t a = splitmix64(seed);
    const std::uint64_t b = splitmix64(a);
    return {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
            static_cast<std::uint32_t>(b >> 32)};
}

} // namespace morea
