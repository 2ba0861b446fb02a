#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace colreg {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123).
///
/// A stream is addressed by (seed, stream id); the block counter is the only
/// mutable state, so any position of any stream can be reproduced directly.
/// Parallel work is split by stream id, never by sharing a stream.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  result_type operator()() {
    if (pos_ == 2) {
      block_ = philox(counter_++);
      pos_ = 0;
    }
    const auto lo = static_cast<std::uint64_t>(block_[2 * pos_]);
    const auto hi = static_cast<std::uint64_t>(block_[2 * pos_ + 1]);
    ++pos_;
    return (hi << 32) | lo;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; the second variate of each pair is kept.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    // Lemire's nearly-divisionless method.
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Raw Philox block for (key = seed, counter = (index, stream)).
  static std::array<std::uint32_t, 4> block(std::uint64_t seed, std::uint64_t stream,
                                            std::uint64_t index) {
    std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(index),
                                     static_cast<std::uint32_t>(index >> 32),
                                     static_cast<std::uint32_t>(stream),
                                     static_cast<std::uint32_t>(stream >> 32)};
    std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed),
                                     static_cast<std::uint32_t>(seed >> 32)};
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  std::array<std::uint32_t, 4> philox(std::uint64_t index) const {
    return block(seed_, stream_, index);
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int pos_ = 2;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Stream ids used by the generators and the experiment runner.
namespace streams {
inline constexpr std::uint64_t sigma = 1;
inline constexpr std::uint64_t train = 2;
inline constexpr std::uint64_t semi = 3;
inline constexpr std::uint64_t validation = 4;
inline constexpr std::uint64_t test = 5;
inline constexpr std::uint64_t oracle_test = 6;
inline constexpr std::uint64_t oracle_draws = 7;
inline constexpr std::uint64_t coefficients = 8;
inline constexpr std::uint64_t bound_draws = 9;
inline constexpr std::uint64_t oracle_draws_rf = 10;
/// Forest trees use stream forest_base + tree index.
inline constexpr std::uint64_t forest_base = 1ull << 32;
}  // namespace streams

}  // namespace colreg
