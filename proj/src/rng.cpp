#include "tensorreg/rng.hpp"

#include <cmath>
#include <numbers>

namespace tensorreg {

namespace {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t root, std::uint64_t path) : root_(root), path_(path) {
  std::uint64_t x = root ^ rotl(path, 17) ^ 0xD1B54A32D192ED03ULL;
  // splitmix64 expansion; state is never all-zero because splitmix64 is a
  // bijection sequence over distinct counters.
  for (auto& w : s_) w = splitmix64(x);
}

RngStream RngStream::substream(std::uint64_t key) const {
  std::uint64_t x = path_ ^ (0x9E3779B97F4A7C15ULL * (key + 1));
  return RngStream(root_, splitmix64(x));
}

RngStream RngStream::substream(std::string_view name) const { return substream(fnv1a(name)); }

std::uint64_t RngStream::next_u64() {
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double RngStream::uniform() {
  // 53-bit mantissa shifted to the bin center: strictly inside (0,1).
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace tensorreg
