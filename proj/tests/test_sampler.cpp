#include "test_util.hpp"
#include "vsdlab/config.hpp"
#include "vsdlab/metrics.hpp"
#include "vsdlab/sampler.hpp"

#include <doctest.h>

#include <cmath>

using namespace vsdlab;
using vsdlab::test::vec;

TEST_SUITE("sampler") {

TEST_CASE("standard normal is a fixed point") {
  const GaussianMixture n = GaussianMixture::standard_normal(2);
  const auto xs = ancestral_sample(GuidedModel(n, n, 0.0), {200, 10000, 3});
  REQUIRE(xs.size() == 10000);
  Vector mean = Vector::Zero(2), sq = Vector::Zero(2);
  for (const auto& x : xs) {
    mean += x;
    sq += x.cwiseProduct(x);
  }
  mean /= 10000.0;
  const Vector var = sq / 10000.0 - mean.cwiseProduct(mean);
  for (int k = 0; k < 2; ++k) {
    CHECK(std::abs(mean[k]) < 0.05);
    CHECK(std::abs(var[k] - 1.0) < 0.1);
  }
}

TEST_CASE("near-deterministic target") {
  const GaussianMixture point = GaussianMixture::isotropic(vec({3, 0}), 1e-4);
  const auto xs = ancestral_sample(GuidedModel(point, broadened(point), 0.0), {200, 2000, 4});
  for (const auto& x : xs) CHECK((x - vec({3, 0})).norm() < 0.1);
}

TEST_CASE("no samples requested") {
  const GaussianMixture n = GaussianMixture::standard_normal(1);
  CHECK(ancestral_sample(GuidedModel(n, n, 0.0), {200, 0, 0}).empty());
  CHECK_THROWS_AS(ancestral_sample(GuidedModel(n, n, 0.0), {0, 10, 0}), InvariantError);
}

TEST_CASE("chains are independent of the sample count") {
  const GuidedModel g = preset("fig4-2d").guided_model();
  const auto small = ancestral_sample(g, {50, 10, 5});
  const auto large = ancestral_sample(g, {50, 40, 5});
  for (std::size_t i = 0; i < small.size(); ++i) CHECK(test::same_bits(small[i], large[i]));
}

TEST_CASE("mode assignment") {
  const GaussianMixture b = preset("fig4-2d").guided_model().conditional;
  CHECK(mode_assign({vec({2, 0}), vec({-2, 0}), vec({-2, 0})}, b) == std::vector<std::size_t>{1, 2});
  const Matrix id = Matrix::Identity(2, 2);
  const GaussianMixture twins({{0.5, vec({1, 1}), id}, {0.5, vec({1, 1}), id}});
  CHECK(mode_assign({vec({0, 0})}, twins) == std::vector<std::size_t>{1, 0});
  const GaussianMixture pair({{0.5, vec({1, 0}), id}, {0.5, vec({-1, 0}), id}});
  CHECK(mode_assign({vec({0, 3})}, pair) == std::vector<std::size_t>{1, 0});
  CHECK(mode_assign({}, pair) == std::vector<std::size_t>{0, 0});
}

TEST_CASE("bimodal samples split evenly and symmetrically") {
  const GuidedModel g = preset("fig4-2d").guided_model(0.0);
  const auto xs = ancestral_sample(g, {200, 10000, 6});
  const auto hist = mode_assign(xs, g.conditional);
  CHECK(std::abs(static_cast<double>(hist[0]) / 10000.0 - 0.5) < 0.03);
  Vector mean = Vector::Zero(2);
  for (const auto& x : xs) mean += x;
  mean /= 10000.0;
  // sd of the x coordinate is about 2.06, so 4 standard errors is about 0.08.
  CHECK(std::abs(mean[0]) < 0.08);
  CHECK(std::abs(mean[1]) < 0.02);
}

TEST_CASE("finer discretization does not move away from direct samples") {
  const GuidedModel g = preset("fig4-2d").guided_model(0.0);
  Rng direct_rng(7, Stream::Test);
  const auto direct = g.conditional.sample(4000, direct_rng);
  Rng p1(1, Stream::Projections), p2(1, Stream::Projections);
  const double coarse = sliced_w2(ancestral_sample(g, {50, 4000, 8}), direct, 64, p1);
  const double fine = sliced_w2(ancestral_sample(g, {400, 4000, 8}), direct, 64, p2);
  CHECK(fine <= coarse + 0.02);
  CHECK(fine < 0.1);
}

}  // TEST_SUITE
