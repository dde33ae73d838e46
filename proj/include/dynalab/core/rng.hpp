// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

namespace dynalab {

/// Seeded generator with a fully specified stream. std::mt19937_64 has a
/// standard-mandated output sequence; the distributions below are written
/// out by hand because std::*_distribution are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  /// Independent child seed for a named sub-stream (splitmix64 mixing).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer on [0, n), unbiased.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller; draws two uniforms per call.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace dynalab
