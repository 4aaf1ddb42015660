#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace rdist {

/// Seeded generator. Every stochastic choice in the toolkit draws from one of these.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  float normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<float> normal_{0.0f, 1.0f};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Sets the process-wide base seed. Call before any parallel work starts.
void seed_all(std::uint64_t seed);
std::uint64_t global_seed();

/// Independent stream keyed by (seed, stream name, index).
Rng make_rng(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);
/// Same, keyed off the seed installed by seed_all.
Rng make_rng(std::string_view stream, std::uint64_t index = 0);

}  // namespace rdist
