#pragma once

#include "vsdlab/rng.hpp"
#include "vsdlab/types.hpp"

#include <cstdint>

namespace vsdlab {

struct AlphaSigma {
  double alpha;
  double sigma;
};

// Trigonometric variance-preserving schedule: alpha_t = cos(pi t / 2),
// sigma_t = sin(pi t / 2). Endpoints are pinned exactly.
AlphaSigma alpha_sigma(double t);

// x_t = alpha_t * x0 + sigma_t * noise.
Vector perturb(const Vector& x0, double t, const Vector& noise);

// Distillation weighting omega(t) = sigma_t^2.
double weight(double t);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double x) const { return lo <= x && x <= hi; }
  bool operator==(const Interval&) const = default;
};

// Two-stage distillation-time sampler: t ~ U(phase1) before switch_step,
// U(phase2) from then on. A switch_step of zero samples phase2 throughout.
struct TimeSchedule {
  Interval phase1{0.02, 0.98};
  Interval phase2{0.02, 0.50};
  std::int64_t switch_step = 0;

  // Throws InvariantError unless both ranges sit inside (0, 1) and phase2 is
  // contained in phase1.
  void validate() const;
  const Interval& range_at(std::int64_t step) const;

  // Uniform over the whole run: phase2 == phase1.
  static TimeSchedule uniform(Interval range = {0.02, 0.98});
  // Annealed default: switch after a fifth of the run.
  static TimeSchedule annealed(std::int64_t total_steps);

  bool operator==(const TimeSchedule&) const = default;
};

double sample_time(std::int64_t step, const TimeSchedule& schedule, Rng& rng);

}  // namespace vsdlab
