#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace bamp {

/// Seeded generator with portable derived distributions.
///
/// std::mt19937_64 output is fully specified by the standard but the
/// <random> distributions are not, so bounded integers, uniforms and
/// normals are derived here to keep results identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound), bound > 0, rejection-sampled.
  std::uint64_t below(std::uint64_t bound);

  /// Standard normal via Box-Muller (one draw per call, spare cached).
  double normal();

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer; combines a seed with stream identifiers.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace bamp
