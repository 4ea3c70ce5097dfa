// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MOLSTACK_RNG_H_
#define MOLSTACK_RNG_H_

#include <array>
#include <cstdint>
#include <limits>

namespace molstack {

// splitmix64 step; used to expand a 64-bit seed into generator state.
std::uint64_t splitmix64(std::uint64_t& state);

// xoshiro256** seeded through splitmix64. Satisfies
// UniformRandomBitGenerator so it can drive <random> distributions.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()();

  // Uniform double in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, n), rejection sampled (no modulo bias).
  std::uint64_t below(std::uint64_t n);
  double normal(double mean = 0.0, double stddev = 1.0);
  double gamma(double shape);

  // Independent child stream; advances this generator by one draw.
  Rng split();

 private:
  std::array<std::uint64_t, 4> s_;
};

}  // namespace molstack

#endif  // MOLSTACK_RNG_H_
