#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace drlra {

/// Seeded random stream.
///
/// All derived draws (uniform reals, bounded integers, Bernoulli trials) are
/// computed from the raw 64-bit engine output, never through the standard
/// library's distribution objects, whose algorithms are implementation
/// defined. Identical seed and algorithm therefore give identical sequences
/// on every toolchain.
class RngStream {
public:
  static constexpr std::string_view kAlgorithm = "mt19937_64";

  explicit RngStream(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  std::string_view algorithm() const { return kAlgorithm; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();

  /// Uniform on {0, ..., n-1}; n must be positive.
  std::size_t uniform_index(std::size_t n);

  bool bernoulli(double p) { return uniform() < p; }

  /// Child stream keyed by `tag`. Depends only on this stream's seed, not on
  /// how many values have been drawn from it.
  RngStream derive(std::string_view tag) const;
  RngStream derive(std::uint64_t tag) const;

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// splitmix64 finaliser applied to `seed ^ golden * (tag + 1)`.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

/// FNV-1a over the bytes of `text`.
std::uint64_t hash_tag(std::string_view text);

/// Uniformly random k-subset of {0, ..., n-1}, returned sorted.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                    RngStream& rng);

} // namespace drlra
