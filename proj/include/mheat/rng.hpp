#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace mheat {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
/// A pure function of (counter, key); no state is carried between calls.
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      std::uint64_t p0 = std::uint64_t(kMul0) * ctr[0];
      std::uint64_t p1 = std::uint64_t(kMul1) * ctr[2];
      ctr = {std::uint32_t(p1 >> 32) ^ ctr[1] ^ key[0], std::uint32_t(p1),
             std::uint32_t(p0 >> 32) ^ ctr[3] ^ key[1], std::uint32_t(p0)};
    }
    return ctr;
  }
};

/// Gaussian stream keyed by (seed, stream index); draw (step, slot) is a pure
/// function of its coordinates, so paths are reproducible under any schedule.
class GaussianStream {
 public:
  GaussianStream(std::uint64_t seed, std::uint64_t stream)
      : key_{std::uint32_t(seed), std::uint32_t(seed >> 32)}, stream_(stream) {}

  /// Two independent standard normals for block `block` of step `step`.
  std::array<double, 2> normal_pair(std::uint64_t step, std::uint32_t block) const {
    Philox4x32::Counter ctr{std::uint32_t(step), std::uint32_t(step >> 32) ^ (block << 16),
                            std::uint32_t(stream_), std::uint32_t(stream_ >> 32)};
    auto r = Philox4x32::generate(ctr, key_);
    double u1 = to_open_unit(r[0], r[1]);
    double u2 = to_open_unit(r[2], r[3]);
    double rad = std::sqrt(-2.0 * std::log(u1));
    double ang = 2.0 * 3.14159265358979323846 * u2;
    return {rad * std::cos(ang), rad * std::sin(ang)};
  }

  /// Fills n standard normals for one step.
  template <class Out>
  void normals(std::uint64_t step, int n, Out&& out) const {
    for (int b = 0; 2 * b < n; ++b) {
      auto z = normal_pair(step, std::uint32_t(b));
      out[2 * b] = z[0];
      if (2 * b + 1 < n) out[2 * b + 1] = z[1];
    }
  }

  /// Uniform in (0, 1) from the same counter space (slot reserved above Gaussian blocks).
  double uniform(std::uint64_t step, std::uint32_t slot) const {
    Philox4x32::Counter ctr{std::uint32_t(step), std::uint32_t(step >> 32) ^ ((0x8000u + slot) << 16),
                            std::uint32_t(stream_), std::uint32_t(stream_ >> 32)};
    auto r = Philox4x32::generate(ctr, key_);
    return to_open_unit(r[0], r[1]);
  }

 private:
  // 53-bit uniform strictly inside (0, 1).
  static double to_open_unit(std::uint32_t hi, std::uint32_t lo) {
    std::uint64_t bits = ((std::uint64_t(hi) << 32) | lo) >> 11;
    return (double(bits) + 0.5) * 0x1.0p-53;
  }

  Philox4x32::Key key_;
  std::uint64_t stream_;
};

/// SplitMix64 finaliser, used to derive independent sub-seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace mheat
