#pragma once

#include <cstdint>

namespace figforge {

// Deterministic generator used for every random draw in the toolkit.
// The sequence is fixed by this header and must never change: outputs are
// part of the reproducibility contract (identical seeds give identical
// corpora on any platform, any worker count).
//
// State transition (splitmix64, Steele et al.):
//   state += 0x9E3779B97F4A7C15
//   z = state
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   output = z ^ (z >> 31)
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform draw in [0, n), n > 0. Plain modulo: the bias for the small n
  // used here (panel counts, pool sizes) is far below 2^-32 and the
  // reduction is platform-stable.
  std::uint64_t next_below(std::uint64_t n) { return next() % n; }

  // Uniform draw in [lo, hi], inclusive.
  std::int64_t next_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(
                    next_below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  // Uniform draw in [0, 1) with 53 random bits.
  double next_real() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

// Stateless per-index seed derivation: one splitmix64 finalizer applied to
// master + (index + 1) * 0x9E3779B97F4A7C15. Figure i of a run always sees
// the same stream no matter which worker picks it up.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + (index + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace figforge
