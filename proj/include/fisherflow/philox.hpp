#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace fisherflow {

/// Philox4x32-10 block function.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kM0 = 0xD2511F53u;
  constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kW0;
      key[1] += kW1;
    }
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
  }
  return ctr;
}

/// Independent stream addressed by (seed, slot, index, purpose). Draws walk the fourth
/// counter word, so streams with different addresses never overlap.
class PhiloxStream {
 public:
  PhiloxStream(std::uint64_t seed, std::uint32_t slot, std::uint32_t index, std::uint32_t purpose)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        ctr_{slot, index, purpose, 0} {}

  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform() {
    if (cached_u_ == 0) refill();
    const std::uint64_t bits = (static_cast<std::uint64_t>(block_[4 - 2 * cached_u_]) << 32) |
                               block_[5 - 2 * cached_u_];
    --cached_u_;
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal by Box-Muller; pairs are consumed in order.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  void refill() {
    block_ = philox4x32(ctr_, key_);
    ++ctr_[3];
    cached_u_ = 2;
  }

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> ctr_;
  std::array<std::uint32_t, 4> block_{};
  int cached_u_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fisherflow
