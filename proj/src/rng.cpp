#include "ppibench/rng.hpp"

namespace ppibench::rng {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t salt) {
  return splitmix64(splitmix64(seed) ^ (salt * 0xD1B54A32D192ED03ULL));
}

std::uint64_t bounded(std::uint64_t draw, std::uint64_t n) {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(draw) * n) >> 64);
}

double unit(std::uint64_t draw) {
  return static_cast<double>(draw >> 11) * 0x1.0p-53;
}

namespace {

std::uint64_t keyed_draw(std::uint64_t seed, std::string_view key, std::uint64_t ordinal,
                         std::uint64_t stream) {
  std::uint64_t h = derive(seed, fnv1a(key));
  h = derive(h, ordinal);
  return derive(h, stream);
}

}  // namespace

double keyed_unit(std::uint64_t seed, std::string_view key, std::uint64_t ordinal,
                  std::uint64_t stream) {
  return unit(keyed_draw(seed, key, ordinal, stream));
}

std::uint64_t keyed_index(std::uint64_t seed, std::string_view key, std::uint64_t ordinal,
                          std::uint64_t stream, std::uint64_t n) {
  return bounded(keyed_draw(seed, key, ordinal, stream), n);
}

}  // namespace ppibench::rng
