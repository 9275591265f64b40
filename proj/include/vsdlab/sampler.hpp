#pragma once

#include "vsdlab/gaussian_mixture.hpp"

#include <cstdint>
#include <vector>

namespace vsdlab {

struct SamplerConfig {
  std::int64_t n_steps = 200;
  std::int64_t n_samples = 10000;
  std::uint64_t seed = 0;

  bool operator==(const SamplerConfig&) const = default;
};

// Stochastic DDPM-style reverse process under the guided noise prediction.
// Starts from N(0, I) at t = 0.98, takes n_steps posterior steps down a
// uniform grid to t = 0.02, then returns the noise-free x0 estimate. Chain k
// draws from its own stream, so samples do not depend on evaluation order.
std::vector<Vector> ancestral_sample(const GuidedModel& guided, const SamplerConfig& config);

// Component index of highest responsibility per sample (ties -> lowest
// index), tallied into a histogram of size model.size().
std::vector<std::size_t> mode_assign(const std::vector<Vector>& samples,
                                     const GaussianMixture& model);

}  // namespace vsdlab
