#pragma once

#include "vsdlab/types.hpp"

#include <cstdint>

namespace vsdlab {

// Purpose tags for deriving independent random streams from one seed.
enum class Stream : std::uint64_t {
  Init = 1,
  Select = 2,
  Draw = 3,
  EstimatorInit = 4,
  EstimatorTrain = 5,
  Sampler = 6,
  Projections = 7,
  Reference = 8,
  Camera = 9,
  Test = 99,
};

// Counter-based generator. The stream key is a hash of (seed, purpose, a, b);
// the i-th output is SplitMix64's finalizer applied to key + i * golden_gamma.
// Any draw can be reproduced from (key, counter) alone, so work split across
// threads by stream key never reorders draws.
class Rng {
 public:
  Rng(std::uint64_t seed, Stream purpose, std::uint64_t a = 0, std::uint64_t b = 0);

  static Rng from_state(std::uint64_t key, std::uint64_t counter);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller (pairs are not cached, one draw per call).
  double normal();
  Vector normal_vector(Eigen::Index dim);
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  Rng() = default;
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace vsdlab
