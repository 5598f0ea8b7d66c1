#pragma once

#include <array>
#include <cstdint>

namespace selftune {

/// Philox4x32-10 block function (Salmon et al.). Stateless: output depends
/// only on (counter, key).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Counter-based generator: draw `index` of stream `stream` under `seed`.
/// Streams are disjoint, so trials can be generated in any order or in
/// parallel with identical results.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : seed_(seed), stream_(stream) {}

  std::uint64_t bits(std::uint64_t index) const;
  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform(std::uint64_t index) const;
  /// Standard normal by inverse CDF of uniform(index).
  double normal(std::uint64_t index) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
};

/// Sequential cursor over a CounterRng stream.
class RngCursor {
 public:
  explicit RngCursor(CounterRng rng) : rng_(rng) {}
  RngCursor(std::uint64_t seed, std::uint64_t stream) : rng_(seed, stream) {}

  double uniform() { return rng_.uniform(next_++); }
  double normal() { return rng_.normal(next_++); }

 private:
  CounterRng rng_;
  std::uint64_t next_ = 0;
};

/// Inverse of the standard normal CDF (Acklam's rational approximation with
/// one Halley refinement, relative error ~1e-15).
double standard_normal_quantile(double p);

}  // namespace selftune
