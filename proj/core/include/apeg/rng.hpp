#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace apeg {

// Seeded random stream. Every consumer in the pipeline gets its own named
// sub-stream derived from the run seed, so adding draws in one place never
// shifts the numbers seen by another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // Child stream keyed by a name and an optional index (e.g. a time slot).
  Rng fork(std::string_view name, std::uint64_t index = 0) const;

  // Stateless variant used when only the root seed is at hand.
  static Rng derive(std::uint64_t seed, std::string_view name,
                    std::uint64_t index = 0);

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Inclusive on both ends.
  int uniform_int(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(engine_);
  }
  std::uint64_t next_u64() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace apeg
