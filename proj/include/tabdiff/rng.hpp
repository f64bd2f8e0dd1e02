#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace tabdiff {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Counter-based seed splitting: the stream for (seed, index, tag) depends only on
/// those three values, never on how many other streams were created.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t tag = 0);

/// Stream tags used by the samplers.
enum class StreamTag : std::uint64_t {
  kGeneration = 0,  // X_T initialisation and per-step Z
  kResample = 1,    // RePaint alignment noise and re-noising
  kTraining = 2,
  kShuffle = 3,
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t index, StreamTag tag)
      : engine_(derive_seed(seed, index, static_cast<std::uint64_t>(tag))) {}

  double gaussian() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
  /// Uniform integer in [lo, hi].
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }
  std::vector<double> gaussian_vector(std::size_t n);
  void fill_gaussian(std::span<double> out);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace tabdiff
