#pragma once

#include <cstdint>

namespace byteflow {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a per-use nonce.
inline constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t nonce) noexcept {
    return splitmix64(seed ^ splitmix64(nonce));
}

}  // namespace byteflow
