#pragma once

#include <cstdint>
#include <random>

namespace mombo {

/// Seeded random stream. Identical (seed, stream) pairs yield bit-identical
/// draw sequences on every platform: mt19937_64 is fully specified by the
/// standard and every distribution below is derived from its raw output with
/// explicit arithmetic (no libstdc++-dependent distribution objects).
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  std::uint64_t next_u64();

  /// Uniform draw in [0, 1).
  double uniform01();
  double uniform(double lo, double hi);

  /// Standard normal via Box-Muller (second value cached).
  double normal();
  double normal(double mean, double stddev);

  /// Uniform index in {0, ..., n-1}; n must be positive.
  std::size_t uniform_index(std::size_t n);

  /// Independent stream derived from this one's identity and the given id.
  RngStream substream(std::uint64_t id) const;

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mombo
