#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace delip {

/// Seedable, splittable random source. Every stochastic operation takes one
/// of these explicitly; there is no process-wide generator.
///
/// `split(k)` derives a child stream from the seed alone (not the current
/// engine state), so child streams are stable regardless of how much the
/// parent has been consumed.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0);

  Rng split(std::uint64_t stream) const;

  double uniform();  // [0, 1)
  double normal();   // N(0, 1)
  std::size_t uniform_index(std::size_t n);

  std::uint64_t seed() const { return seed_; }

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace delip
