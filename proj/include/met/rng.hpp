#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace met {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// 64-bit FNV-1a. The constants are pinned: toy encoders and content hashes
/// depend on this function producing the same value across builds.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// Seed for an independent stream keyed by (seed, key). Used wherever a
/// per-entity or per-query draw must not depend on iteration order.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key) noexcept;

inline Rng make_rng(std::uint64_t seed, std::string_view key) { return Rng(derive_seed(seed, key)); }

/// Uniform integer in [0, n). Rejection sampling, so the result depends only
/// on the engine output and not on the standard library's distributions.
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Uniform real in the open interval (0, 1).
double uniform_open01(Rng& rng);

}  // namespace met
