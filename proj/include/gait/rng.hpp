#pragma once

#include <cstdint>
#include <utility>

namespace gait {

/// Counter-based SplitMix64 generator. The full state is (seed, calls), two
/// u64 words, which makes checkpointed training resumable bit-for-bit and
/// keeps streams identical across platforms (unlike std distributions).
class Rng {
 public:
  Rng() = default;
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t next_u64() {
    ++calls_;
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 significant bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double next_range(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  /// Uniform integer in [0, n). Rejection-free modulo is fine at our scales.
  std::uint32_t next_below(std::uint32_t n) {
    return n == 0 ? 0 : static_cast<std::uint32_t>(next_u64() % n);
  }

  /// Fisher-Yates shuffle with this stream.
  template <typename Container>
  void shuffle(Container& c) {
    for (std::size_t i = c.size(); i > 1; --i) {
      std::size_t j = next_below(static_cast<std::uint32_t>(i));
      std::swap(c[i - 1], c[j]);
    }
  }

  /// Derive an independent stream (for per-subject/per-stage determinism).
  Rng fork(std::uint64_t salt) const {
    Rng child(seed_ ^ (0x6a09e667f3bcc909ULL + salt * 0x9e3779b97f4a7c15ULL));
    return child;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t calls() const { return calls_; }

  /// Restore an exact position in the stream.
  static Rng restore(std::uint64_t seed, std::uint64_t calls) {
    Rng r(seed);
    r.calls_ = calls;
    r.state_ = seed + calls * 0x9e3779b97f4a7c15ULL;
    return r;
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t state_ = 0;
  std::uint64_t calls_ = 0;
};

}  // namespace gait
