#pragma once

// Reproducible random streams.
//
// Every random quantity in a run is drawn from its own stream whose seed is
// derived from the base seed and a tag path, e.g. derive_seed(s, "sample", i).
// Streams never share state, so generation order and thread count never
// change results. The Gaussian and bounded-integer transforms are implemented
// here (not via <random> distributions) so output is identical across
// standard library implementations.

#include <cstdint>
#include <random>
#include <string_view>
#include <type_traits>

namespace samcnn {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// 64-bit FNV-1a, used to fold string tags into seeds.
std::uint64_t hash_tag(std::string_view tag) noexcept;

/// Fold one more component into a seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t part) noexcept;

/// Folds each tag (string or integer) into the seed in order.
template <typename... Parts>
std::uint64_t derive_seed(std::uint64_t seed, const Parts&... parts) noexcept {
  auto fold = [&seed](const auto& part) {
    if constexpr (std::is_convertible_v<decltype(part), std::string_view>)
      seed = mix_seed(seed, hash_tag(std::string_view(part)));
    else
      seed = mix_seed(seed, static_cast<std::uint64_t>(part));
  };
  (fold(parts), ...);
  return seed;
}

/// Bit pattern of a double, for hashing real-valued coordinates into seeds.
std::uint64_t double_bits(double x) noexcept;

class Stream {
public:
  explicit Stream(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on (0, 1], 53 bits of resolution.
  double uniform();

  /// Uniform integer on [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);

  /// Standard normal via Box-Muller; caches the second variate.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double prob) { return uniform() <= prob; }

  /// +1 or -1 with equal probability.
  int rademacher() { return (next_u64() >> 63) ? 1 : -1; }

private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

} // namespace samcnn
