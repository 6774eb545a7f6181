/**
 * @file rng.hpp
 * @brief Counter-based random streams (Philox4x32-10).
 *
 * A stream is addressed by (master seed, replicate, particle lineage, step).
 * Draws therefore do not depend on the order in which particles or
 * replicates are processed, which keeps parallel runs bitwise reproducible.
 */
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace bbm {

/// Philox4x32 with 10 rounds (Salmon et al.'s parameters).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      ctr = single_round(ctr, key);
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

  static Counter single_round(const Counter& c, const Key& k) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
};

/// SplitMix64 finalizer, used to derive stream keys from (seed, replicate).
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Key shared by every stream of one replicate.
constexpr std::uint64_t replicate_key(std::uint64_t master_seed, std::uint64_t replicate) {
  return mix64(mix64(master_seed) ^ (replicate * 0xD6E8FEB86659FD93ull));
}

/**
 * One random stream. Each block of the Philox counter yields two doubles;
 * the fourth counter word enumerates blocks within the stream.
 */
class CounterRng {
 public:
  CounterRng(std::uint64_t key, std::uint64_t lineage, std::uint32_t step)
      : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)},
        lineage_(lineage),
        step_(step) {}

  /// Uniform on the open interval (0, 1).
  double uniform() {
    if (cursor_ == 2) refill();
    return buffer_[cursor_++];
  }

  double normal() {
    if (has_spare_normal_) {
      has_spare_normal_ = false;
      return spare_normal_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_normal_ = radius * std::sin(angle);
    has_spare_normal_ = true;
    return radius * std::cos(angle);
  }

  /// Exp(1).
  double exponential() { return -std::log(uniform()); }

 private:
  void refill() {
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(lineage_),
                                  static_cast<std::uint32_t>(lineage_ >> 32), step_, block_++};
    const auto out = Philox4x32::generate(ctr, key_);
    buffer_[0] = to_unit(out[0], out[1]);
    buffer_[1] = to_unit(out[2], out[3]);
    cursor_ = 0;
  }

  static double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  Philox4x32::Key key_;
  std::uint64_t lineage_;
  std::uint32_t step_;
  std::uint32_t block_ = 0;
  std::array<double, 2> buffer_{};
  int cursor_ = 2;
  double spare_normal_ = 0.0;
  bool has_spare_normal_ = false;
};

}  // namespace bbm
