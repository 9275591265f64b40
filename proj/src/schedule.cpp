#include "vsdlab/schedule.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace vsdlab {

namespace {

void check_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw DomainError("diffusion time must lie in [0, 1], got " + std::to_string(t));
  }
}

}  // namespace

AlphaSigma alpha_sigma(double t) {
  check_time(t);
  if (t == 0.0) return {1.0, 0.0};
  if (t == 1.0) return {0.0, 1.0};
  const double angle = 0.5 * std::numbers::pi * t;
  return {std::cos(angle), std::sin(angle)};
}

Vector perturb(const Vector& x0, double t, const Vector& noise) {
  require_dim(noise, x0.size(), "perturb noise");
  const auto [alpha, sigma] = alpha_sigma(t);
  return alpha * x0 + sigma * noise;
}

double weight(double t) {
  const double sigma = alpha_sigma(t).sigma;
  return sigma * sigma;
}

void TimeSchedule::validate() const {
  for (const Interval* r : {&phase1, &phase2}) {
    if (!(r->lo > 0.0 && r->hi < 1.0 && r->lo <= r->hi)) {
      throw InvariantError("time schedule ranges must be nonempty subintervals of (0, 1)");
    }
  }
  if (phase2.lo < phase1.lo || phase2.hi > phase1.hi) {
    throw InvariantError("time schedule phase2 must be contained in phase1");
  }
  if (switch_step < 0) throw InvariantError("time schedule switch_step must be >= 0");
}

const Interval& TimeSchedule::range_at(std::int64_t step) const {
  return step < switch_step ? phase1 : phase2;
}

TimeSchedule TimeSchedule::uniform(Interval range) { return {range, range, 0}; }

TimeSchedule TimeSchedule::annealed(std::int64_t total_steps) {
  return {{0.02, 0.98}, {0.02, 0.50}, total_steps / 5};
}

double sample_time(std::int64_t step, const TimeSchedule& schedule, Rng& rng) {
  const Interval& r = schedule.range_at(step);
  return rng.uniform(r.lo, r.hi);
}

}  // namespace vsdlab
