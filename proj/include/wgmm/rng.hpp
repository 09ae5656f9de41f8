#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace wgmm {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of an independent stream identified by (master, stream). Streams are
/// a pure function of their indices, so results never depend on scheduling.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return mix64(mix64(master) ^ mix64(stream ^ 0xD1B54A32D192ED03ULL));
}

template <typename... Rest>
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    Rest... rest) {
  return derive_seed(derive_seed(master, stream), static_cast<std::uint64_t>(rest)...);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return uniform_(engine_); }
  double normal() { return normal_(engine_); }
  double exponential() { return exponential_(engine_); }
  double rademacher() { return (engine_() >> 63) ? 1.0 : -1.0; }
  Eigen::VectorXd normal_vector(Eigen::Index n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::exponential_distribution<double> exponential_{1.0};
};

}  // namespace wgmm
