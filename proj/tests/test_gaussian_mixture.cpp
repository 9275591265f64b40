#include "test_util.hpp"
#include "vsdlab/gaussian_mixture.hpp"
#include "vsdlab/schedule.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace vsdlab;
using vsdlab::test::vec;

namespace {

GaussianMixture bimodal_1d() {
  const Matrix one = Matrix::Identity(1, 1);
  return GaussianMixture({{0.5, vec({-1}), one}, {0.5, vec({1}), one}});
}

GaussianMixture bimodal_2d() {
  const Matrix cov = 0.25 * Matrix::Identity(2, 2);
  return GaussianMixture({{0.5, vec({2, 0}), cov}, {0.5, vec({-2, 0}), cov}});
}

// Unequal weights, anisotropic and correlated covariances.
GaussianMixture skewed_2d() {
  Matrix c1(2, 2);
  c1 << 0.6, 0.2, 0.2, 0.3;
  Matrix c2(2, 2);
  c2 << 0.2, -0.05, -0.05, 0.9;
  return GaussianMixture({{0.3, vec({1, -0.5}), c1}, {0.7, vec({-1.5, 1}), c2}});
}

double gaussian_1d(double x, double m, double v) {
  return std::exp(-0.5 * (x - m) * (x - m) / v) / std::sqrt(2.0 * std::numbers::pi * v);
}

double fd_rel_error(const GaussianMixture& model, double t, const Vector& x) {
  const double h = 1e-5;
  const Vector s = model.diffused_score(x, t);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Vector xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    const double fd = (model.diffused_log_density(xp, t) - model.diffused_log_density(xm, t)) / (2 * h);
    worst = std::max(worst, std::abs(fd - s[k]) / std::max(std::abs(s[k]), 1.0));
  }
  return worst;
}

}  // namespace

TEST_SUITE("gaussian_mixture") {

TEST_CASE("construction invariants") {
  const Matrix id = Matrix::Identity(2, 2);
  CHECK_THROWS_AS(GaussianMixture({}), InvariantError);
  CHECK_THROWS_AS(GaussianMixture({{0.4, vec({0, 0}), id}, {0.4, vec({1, 0}), id}}), InvariantError);
  CHECK_THROWS_AS(GaussianMixture({{1.2, vec({0, 0}), id}, {-0.2, vec({1, 0}), id}}), InvariantError);
  CHECK_THROWS_AS(GaussianMixture({{0.5, vec({0, 0}), id}, {0.5, vec({1}), Matrix::Identity(1, 1)}}),
                  InvariantError);
  Matrix indefinite(2, 2);
  indefinite << 1, 2, 2, 1;
  CHECK_THROWS_AS(GaussianMixture({{1.0, vec({0, 0}), indefinite}}), InvariantError);
  Matrix asym(2, 2);
  asym << 1, 0.5, 0, 1;
  CHECK_THROWS_AS(GaussianMixture({{1.0, vec({0, 0}), asym}}), InvariantError);
  CHECK_THROWS_AS(GaussianMixture({{1.0, vec({0, std::nan("")}), id}}), InvariantError);
  CHECK_NOTHROW(GaussianMixture({{1.0 - 1e-13, vec({0, 0}), id}}));
}

TEST_CASE("log_density examples") {
  const double l2pi = std::log(2.0 * std::numbers::pi);
  CHECK(GaussianMixture::standard_normal(1).log_density(vec({0})) == doctest::Approx(-0.5 * l2pi).epsilon(1e-14));
  CHECK(bimodal_1d().log_density(vec({0})) ==
        doctest::Approx(std::log(std::exp(-0.5) / std::sqrt(2 * std::numbers::pi))).epsilon(1e-14));
  const GaussianMixture single = GaussianMixture::isotropic(vec({3, -1, 2}), 1.0);
  CHECK(single.log_density(vec({3, -1, 2})) == doctest::Approx(-1.5 * l2pi).epsilon(1e-14));
  CHECK_THROWS_AS(single.log_density(vec({0, 0})), DimensionError);
}

TEST_CASE("log_density survives far-away points") {
  const double far = bimodal_2d().log_density(vec({200, 0}));
  CHECK(std::isfinite(far));
  // Dominated by the +2 component: log 0.5 + log N(198; 0, 0.25) in x, N(0) in y.
  const double expected = std::log(0.5) - 198.0 * 198.0 / 0.5 - std::log(2 * std::numbers::pi * 0.25);
  CHECK(far == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("score examples") {
  CHECK(GaussianMixture::standard_normal(2).score(vec({1, 0})).isApprox(vec({-1, 0})));
  const Matrix id = Matrix::Identity(2, 2);
  const GaussianMixture sym({{0.5, vec({1, 0}), id}, {0.5, vec({-1, 0}), id}});
  CHECK(sym.score(vec({0, 0})).norm() == 0.0);
  const GaussianMixture b = bimodal_1d();
  const double h = 1e-5;
  const double fd = (b.log_density(vec({0.5 + h})) - b.log_density(vec({0.5 - h}))) / (2 * h);
  CHECK(b.score(vec({0.5}))[0] == doctest::Approx(fd).epsilon(1e-8));
  CHECK_THROWS_AS(b.score(vec({0.5, 1})), DimensionError);
}

TEST_CASE("score matches finite differences at diffusion times") {
  Rng rng(11, Stream::Test);
  for (const GaussianMixture& model : {bimodal_1d(), bimodal_2d(), skewed_2d()}) {
    for (double t : {0.0, 0.3, 0.6, 0.9}) {
      double worst = 0.0;
      for (int i = 0; i < 100; ++i) {
        const Vector x = 3.0 * rng.normal_vector(model.dimension());
        worst = std::max(worst, fd_rel_error(model, t, x));
      }
      CHECK(worst < 1e-5);
    }
  }
}

TEST_CASE("responsibilities are a distribution") {
  const GaussianMixture m = skewed_2d();
  Rng rng(12, Stream::Test);
  for (int i = 0; i < 50; ++i) {
    const Vector r = m.responsibilities(4.0 * rng.normal_vector(2));
    CHECK(r.sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(r.minCoeff() >= 0.0);
  }
}

TEST_CASE("diffused parameters") {
  const GaussianMixture n2 = GaussianMixture::standard_normal(2);
  for (double t : {0.0, 0.2, 0.7, 1.0}) {
    const GaussianMixture d = n2.diffused(t);
    CHECK(d.component(0).mean.norm() == 0.0);
    CHECK((d.component(0).cov - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);
  }
  const GaussianMixture shifted = GaussianMixture::isotropic(vec({2, 0}), 1.0);
  CHECK(shifted.diffused(0.0) == shifted);
  const GaussianMixture half = shifted.diffused(0.5);
  CHECK(half.component(0).mean[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(half.component(0).mean[1] == 0.0);
  CHECK((half.component(0).cov - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);

  const GaussianMixture sk = skewed_2d();
  const GaussianMixture sk0 = sk.diffused(0.0);
  for (std::size_t i = 0; i < sk.size(); ++i) {
    CHECK(sk0.component(i).weight == sk.component(i).weight);
    CHECK((sk0.component(i).mean - sk.component(i).mean).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((sk0.component(i).cov - sk.component(i).cov).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("diffused density equals convolution of the base density in 1D") {
  const GaussianMixture b = bimodal_1d();
  for (double t : {0.2, 0.5, 0.8}) {
    const auto [alpha, sigma] = alpha_sigma(t);
    // p_t(x) = int p_0(y) N(x; alpha y, sigma^2) dy on a fine trapezoid grid.
    const int n = 8001;
    const double lo = -10, hi = 10, dy = (hi - lo) / (n - 1);
    double worst = 0.0;
    for (double x = -4; x <= 4; x += 0.25) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        const double y = lo + i * dy;
        const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
        acc += w * std::exp(b.log_density(vec({y}))) * gaussian_1d(x, alpha * y, sigma * sigma);
      }
      acc *= dy;
      worst = std::max(worst, std::abs(acc - std::exp(b.diffused_log_density(vec({x}), t))));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("diffused N((2,0), I) at t = 0.5 matches 2D convolution") {
  const GaussianMixture m = GaussianMixture::isotropic(vec({2, 0}), 1.0);
  const auto [alpha, sigma] = alpha_sigma(0.5);
  const int n = 321;
  const double lo = -8, hi = 12, dy = (hi - lo) / (n - 1);
  const double lo2 = -10, hi2 = 10, dy2 = (hi2 - lo2) / (n - 1);
  for (const Vector& x : {vec({0, 0}), vec({1.4, 0.3}), vec({-1, 2})}) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double y0 = lo + i * dy, y1 = lo2 + j * dy2;
        const double w = ((i == 0 || i == n - 1) ? 0.5 : 1.0) * ((j == 0 || j == n - 1) ? 0.5 : 1.0);
        acc += w * std::exp(m.log_density(vec({y0, y1}))) * gaussian_1d(x[0], alpha * y0, sigma * sigma) *
               gaussian_1d(x[1], alpha * y1, sigma * sigma);
      }
    }
    acc *= dy * dy2;
    CHECK(std::exp(m.diffused_log_density(x, 0.5)) == doctest::Approx(acc).epsilon(1e-6));
  }
}

TEST_CASE("density integrates to one") {
  for (double t : {0.0, 0.5, 0.9}) {
    const GaussianMixture b = bimodal_1d();
    const int n = 4001;
    const double lo = -9, hi = 9, dx = (hi - lo) / (n - 1);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += ((i == 0 || i == n - 1) ? 0.5 : 1.0) * std::exp(b.diffused_log_density(vec({lo + i * dx}), t));
    }
    acc *= dx;
    CHECK(acc >= 0.999);
    CHECK(acc <= 1.001);
  }
}

TEST_CASE("sampling") {
  Rng rng(13, Stream::Test);
  const auto xs = GaussianMixture::standard_normal(2).sample(10000, rng);
  REQUIRE(xs.size() == 10000);
  Vector mean = Vector::Zero(2);
  for (const auto& x : xs) mean += x;
  mean /= 10000.0;
  CHECK(std::abs(mean[0]) < 0.05);
  CHECK(std::abs(mean[1]) < 0.05);

  const GaussianMixture point = GaussianMixture::isotropic(vec({7, 7}), 1e-12);
  for (const auto& x : point.sample(100, rng)) CHECK((x - vec({7, 7})).norm() < 1e-5);
  CHECK(point.sample(0, rng).empty());

  // Component frequencies follow the weights.
  const GaussianMixture sk = skewed_2d();
  const auto ys = sk.sample(20000, rng);
  int first = 0;
  for (const auto& y : ys) first += sk.responsibilities(y)[0] > 0.5;
  CHECK(std::abs(first / 20000.0 - 0.3) < 0.03);
}

TEST_CASE("guidance combination") {
  CHECK(guide(vec({1, 0}), vec({0, 0}), 2.0) == vec({3, 0}));
  const Vector ec = vec({0.3, -1.2});
  CHECK(guide(ec, vec({5, 5}), 0.0) == ec);
}

TEST_CASE("noise_prediction examples") {
  const GaussianMixture n2 = GaussianMixture::standard_normal(2);
  for (double s : {0.0, 1.0, 7.5, 100.0}) {
    const Vector eps = noise_prediction(GuidedModel(n2, n2, s), vec({1, 0}), 0.5);
    CHECK(eps[0] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
    CHECK(eps[1] == 0.0);
  }
  const GaussianMixture cond = bimodal_2d();
  const GuidedModel g0(cond, broadened(cond), 0.0);
  const Vector x = vec({0.7, -0.3});
  const Vector expected = -alpha_sigma(0.4).sigma * cond.diffused_score(x, 0.4);
  CHECK(test::same_bits(noise_prediction(g0, x, 0.4), expected));
  CHECK_THROWS_AS(noise_prediction(g0, x, 0.0), SingularTimeError);
  CHECK_THROWS_AS(GuidedModel(cond, broadened(cond), -1.0), InvariantError);
  CHECK_THROWS_AS(GuidedModel(cond, bimodal_1d(), 1.0), InvariantError);
}

TEST_CASE("noise_prediction is independent of s when both mixtures agree") {
  const GaussianMixture m = skewed_2d();
  Rng rng(14, Stream::Test);
  for (int i = 0; i < 100; ++i) {
    const Vector x = 2.0 * rng.normal_vector(2);
    const double t = rng.uniform(0.02, 1.0);
    const Vector base = noise_prediction(GuidedModel(m, m, 0.0), x, t);
    for (double s : {0.5, 3.0, 30.0}) CHECK(test::same_bits(noise_prediction(GuidedModel(m, m, s), x, t), base));
  }
}

TEST_CASE("noise_prediction equals the posterior mean of the noise") {
  // E[eps | x_t] by self-normalized importance sampling over eps ~ N(0, I)
  // with weights p_0((x_t - sigma eps) / alpha).
  const GaussianMixture m = skewed_2d();
  const double t = 0.5;
  const auto [alpha, sigma] = alpha_sigma(t);
  Rng rng(15, Stream::Test);
  for (const Vector& x : {vec({0.5, 0.2}), vec({-1, 0.6})}) {
    Vector num = Vector::Zero(2);
    double den = 0.0;
    for (int i = 0; i < 400000; ++i) {
      const Vector eps = rng.normal_vector(2);
      const double w = std::exp(m.log_density((x - sigma * eps) / alpha));
      num += w * eps;
      den += w;
    }
    const Vector mc = num / den;
    const Vector eps = noise_prediction(GuidedModel(m, m, 0.0), x, t);
    CHECK((mc - eps).norm() < 0.01);
  }
}

TEST_CASE("broadened copy") {
  const GaussianMixture b = broadened(bimodal_2d());
  CHECK(b.component(0).mean == vec({1, 0}));
  CHECK(b.component(0).cov == Matrix::Identity(2, 2));
  CHECK(b.component(1).weight == 0.5);
  CHECK(log_sum_exp(vec({std::log(2.0), std::log(3.0)})) == doctest::Approx(std::log(5.0)).epsilon(1e-15));
  CHECK(log_sum_exp(vec({-1000, -1000})) == doctest::Approx(-1000 + std::log(2.0)).epsilon(1e-15));
}

}  // TEST_SUITE
