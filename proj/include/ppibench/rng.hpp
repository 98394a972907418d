#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace ppibench::rng {

// Portable primitives: libstdc++/libc++ distributions differ, so shuffles and
// draws are built directly on the raw mt19937_64 / splitmix64 output streams.

std::uint64_t splitmix64(std::uint64_t x);

/// FNV-1a over the bytes of `s`.
std::uint64_t fnv1a(std::string_view s);

/// Derives a child seed from a parent seed and a salt.
std::uint64_t derive(std::uint64_t seed, std::uint64_t salt);

/// Uniform integer in [0, n) from a 64-bit draw (multiply-high reduction).
std::uint64_t bounded(std::uint64_t draw, std::uint64_t n);

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw.
double unit(std::uint64_t draw);

/// Deterministic uniform in [0, 1) keyed by (seed, key, ordinal, stream).
/// Identical arguments always give the identical value on every platform.
double keyed_unit(std::uint64_t seed, std::string_view key, std::uint64_t ordinal,
                  std::uint64_t stream);

/// Keyed uniform index in [0, n).
std::uint64_t keyed_index(std::uint64_t seed, std::string_view key, std::uint64_t ordinal,
                          std::uint64_t stream, std::uint64_t n);

/// In-place Fisher-Yates shuffle driven by a seeded mt19937_64.
template <class T>
void shuffle(std::vector<T>& items, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(bounded(engine(), i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace ppibench::rng
