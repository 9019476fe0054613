#pragma once

#include <cstdint>
#include <initializer_list>

namespace gms {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derives an independent 64-bit seed from a master seed and a list of tags.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t h = mix64(master ^ 0x6A09E667F3BCC908ULL);
  for (std::uint64_t t : tags) h = mix64(h ^ mix64(t + 0x9E3779B97F4A7C15ULL));
  return h;
}

/// Counter-based generator: the k-th draw of stream (seed, stream) is a pure
/// function of (seed, stream, k), so any row or tuple can be regenerated
/// without replaying earlier draws.
class CounterRng {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  constexpr explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_(derive_seed(seed, {stream})) {}

  constexpr std::uint64_t bits_at(std::uint64_t counter) const noexcept {
    return mix64(key_ + (counter + 1) * kGamma);
  }

  // Uniform on the open interval (0,1); never returns 0 or 1.
  constexpr double uniform_at(std::uint64_t counter) const noexcept {
    return (static_cast<double>(bits_at(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t next() noexcept { return bits_at(counter_++); }
  double uniform() noexcept { return uniform_at(counter_++); }

  // Unbiased integer in [0, n) (Lemire's multiply-and-reject).
  std::uint64_t below(std::uint64_t n) noexcept {
    std::uint64_t x = next();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        x = next();
        m = static_cast<__uint128_t>(x) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  std::uint64_t position() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace gms
