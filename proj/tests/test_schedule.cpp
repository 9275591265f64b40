#include "test_util.hpp"
#include "vsdlab/schedule.hpp"

#include <doctest.h>

#include <cmath>

using namespace vsdlab;
using vsdlab::test::vec;

TEST_SUITE("schedule") {

TEST_CASE("alpha_sigma endpoints and midpoint") {
  CHECK(alpha_sigma(0.0).alpha == 1.0);
  CHECK(alpha_sigma(0.0).sigma == 0.0);
  CHECK(alpha_sigma(1.0).alpha == 0.0);
  CHECK(alpha_sigma(1.0).sigma == 1.0);
  const auto mid = alpha_sigma(0.5);
  CHECK(mid.alpha == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  CHECK(mid.sigma == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
}

TEST_CASE("alpha_sigma rejects times outside [0, 1]") {
  CHECK_THROWS_AS(alpha_sigma(-1e-9), DomainError);
  CHECK_THROWS_AS(alpha_sigma(1.0 + 1e-9), DomainError);
  CHECK_THROWS_AS(alpha_sigma(std::nan("")), DomainError);
  CHECK_THROWS_AS(weight(1.5), DomainError);
}

TEST_CASE("variance preservation and monotonicity over random times") {
  Rng rng(1, Stream::Test);
  for (int i = 0; i < 100000; ++i) {
    const double t = rng.uniform();
    const auto [a, s] = alpha_sigma(t);
    REQUIRE(std::abs(a * a + s * s - 1.0) < 1e-12);
  }
  double prev_a = 2.0, prev_s = -1.0;
  for (int i = 0; i <= 1000; ++i) {
    const auto [a, s] = alpha_sigma(i / 1000.0);
    CHECK(a <= prev_a);
    CHECK(s >= prev_s);
    prev_a = a;
    prev_s = s;
  }
}

TEST_CASE("perturb") {
  CHECK(perturb(vec({1, 0}), 0.0, vec({5, 5})) == vec({1, 0}));
  CHECK(perturb(vec({0, 0}), 1.0, vec({2, -1})) == vec({2, -1}));
  const Vector x = perturb(vec({2, 0}), 0.5, vec({0, 2}));
  CHECK(x[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(x[1] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(perturb(vec({1, 0}), 0.5, vec({1})), DimensionError);
}

TEST_CASE("weight is sigma squared") {
  CHECK(weight(0.0) == 0.0);
  CHECK(weight(1.0) == 1.0);
  CHECK(weight(0.5) == doctest::Approx(0.5).epsilon(1e-15));
  Rng rng(2, Stream::Test);
  for (int i = 0; i < 1000; ++i) {
    const double t = rng.uniform();
    const double s = alpha_sigma(t).sigma;
    CHECK(weight(t) == doctest::Approx(s * s).epsilon(1e-15));
  }
}

TEST_CASE("sample_time phases") {
  const TimeSchedule sched = TimeSchedule::annealed(1000);
  CHECK(sched.switch_step == 200);
  Rng rng(3, Stream::Test);
  const double t0 = sample_time(0, sched, rng);
  CHECK(t0 >= 0.02);
  CHECK(t0 <= 0.98);
  for (int i = 0; i < 1000; ++i) {
    const double t = sample_time(sched.switch_step, sched, rng);
    CHECK(t >= 0.02);
    CHECK(t <= 0.50);
  }
  const TimeSchedule point{{0.5, 0.5}, {0.5, 0.5}, 3};
  CHECK_NOTHROW(point.validate());
  CHECK(sample_time(0, point, rng) == 0.5);
  CHECK(sample_time(10, point, rng) == 0.5);
}

TEST_CASE("sample_time is uniform on its range") {
  const TimeSchedule sched = TimeSchedule::uniform();
  Rng rng(4, Stream::Test);
  std::vector<double> ts;
  for (int i = 0; i < 100000; ++i) ts.push_back(sample_time(i, sched, rng));
  CHECK(*std::min_element(ts.begin(), ts.end()) >= 0.02);
  CHECK(*std::max_element(ts.begin(), ts.end()) <= 0.98);
  CHECK(test::ks_uniform(ts, 0.02, 0.98) < 0.01);

  const TimeSchedule late = TimeSchedule::annealed(10);
  std::vector<double> late_ts;
  for (int i = 0; i < 100000; ++i) late_ts.push_back(sample_time(5, late, rng));
  CHECK(test::ks_uniform(late_ts, 0.02, 0.50) < 0.01);
}

TEST_CASE("time schedule validation") {
  CHECK_NOTHROW(TimeSchedule::annealed(100).validate());
  CHECK_THROWS_AS((TimeSchedule{{0.0, 0.98}, {0.02, 0.5}, 1}.validate()), InvariantError);
  CHECK_THROWS_AS((TimeSchedule{{0.02, 1.0}, {0.02, 0.5}, 1}.validate()), InvariantError);
  CHECK_THROWS_AS((TimeSchedule{{0.6, 0.4}, {0.6, 0.4}, 1}.validate()), InvariantError);
  CHECK_THROWS_AS((TimeSchedule{{0.2, 0.5}, {0.02, 0.5}, 1}.validate()), InvariantError);
  CHECK_THROWS_AS((TimeSchedule{{0.02, 0.98}, {0.02, 0.5}, -1}.validate()), InvariantError);
}

}  // TEST_SUITE
