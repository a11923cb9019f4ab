#include "samcnn/rng.hpp"

#include <bit>
#include <cmath>
#include <numbers>

namespace samcnn {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_tag(std::string_view tag) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t part) noexcept {
  return splitmix64(seed ^ splitmix64(part + 0x632BE59BD9B4E019ULL));
}

std::uint64_t double_bits(double x) noexcept {
  if (x == 0.0)
    x = 0.0; // fold -0.0 onto +0.0
  return std::bit_cast<std::uint64_t>(x);
}

double Stream::uniform() {
  return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
}

std::uint64_t Stream::below(std::uint64_t bound) {
  // Rejection sampling on the top of the range; unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % bound;
}

double Stream::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cached_ = radius * std::sin(angle);
  has_cached_ = true;
  return radius * std::cos(angle);
}

} // namespace samcnn
