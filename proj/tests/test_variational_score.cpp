#include "test_util.hpp"
#include "vsdlab/variational_score.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace vsdlab;
using vsdlab::test::vec;

namespace {

LearnedEstimator make_estimator(Eigen::Index image_dim, std::uint64_t seed, std::int64_t batch = 64,
                                double lr = 1e-3) {
  Rng init(seed, Stream::EstimatorInit);
  return LearnedEstimator(image_dim, {64, batch, {OptimizerKind::Adam, lr}}, init);
}

double train(LearnedEstimator& est, const ParticleEnsemble& ens, const Renderer& r, std::uint64_t seed, int steps,
             double lr, std::vector<double>* losses = nullptr) {
  Rng rng(seed, Stream::EstimatorTrain);
  double loss = 0.0;
  for (int s = 0; s < steps; ++s) {
    loss = train_step(est, ens, r, rng, lr);
    if (losses) losses->push_back(loss);
  }
  return loss;
}

}  // namespace

TEST_SUITE("variational_score") {

TEST_CASE("ensemble invariants") {
  CHECK_THROWS_AS(ParticleEnsemble({vec({1, 2}), vec({1})}), InvariantError);
  const ParticleEnsemble e({vec({1, 2}), vec({3, 4})});
  CHECK(e.size() == 2);
  CHECK(e.dimension() == 2);
}

TEST_CASE("dirac estimate returns the injected noise") {
  CHECK(dirac_estimate(vec({5, 5}), 0.3, vec({0.3, -0.2})) == vec({0.3, -0.2}));
  CHECK(dirac_estimate(vec({5, 5}), 0.3, vec({0, 0})).norm() == 0.0);
  const Vector x0 = vec({1.5, -0.7}), eps = vec({0.3, -0.2});
  const double t = 0.37;
  const auto [alpha, sigma] = alpha_sigma(t);
  const Vector x_t = perturb(x0, t, eps);
  CHECK(((x_t - alpha * x0) / sigma - dirac_estimate(x_t, t, eps)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("empirical estimate with one particle recovers the noise") {
  const Renderer id = Renderer::identity(2);
  const Renderer lin = Renderer::linear_projection();
  Rng rng(31, Stream::Test);
  for (int i = 0; i < 100; ++i) {
    const Vector theta = rng.normal_vector(2);
    const double t = rng.uniform(0.02, 1.0);
    for (const Renderer& r : {id, lin}) {
      const Camera c = r.sample_camera(rng);
      const Vector eps = rng.normal_vector(r.image_dim());
      const Vector x_t = perturb(r.render(theta, c), t, eps);
      const Vector est = empirical_estimate(ParticleEnsemble({theta}), r, c, x_t, t);
      CHECK((est - eps).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("empirical estimate is zero at the symmetric midpoint") {
  const ParticleEnsemble e({vec({1, 0}), vec({-1, 0})});
  const Vector est = empirical_estimate(e, Renderer::identity(2), {}, vec({0, 0}), 0.5);
  CHECK(est.norm() == 0.0);
}

TEST_CASE("empirical estimate matches finite differences of the log density") {
  Rng rng(32, Stream::Test);
  for (const Renderer& r : {Renderer::identity(2), Renderer::linear_projection(3, 2)}) {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Vector> ps;
      for (int i = 0; i < 3; ++i) ps.push_back(rng.normal_vector(r.param_dim()));
      const EmpiricalScore score{ParticleEnsemble(ps), r};
      const double t = rng.uniform(0.1, 0.95);
      const Camera c = r.sample_camera(rng);
      const Vector x = rng.normal_vector(r.image_dim());
      const Vector est = score.estimate(x, t, c);
      const double sigma = alpha_sigma(t).sigma;
      const double h = 1e-5;
      for (Eigen::Index k = 0; k < x.size(); ++k) {
        Vector xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        const double fd = -sigma * (score.log_density(xp, t, c) - score.log_density(xm, t, c)) / (2 * h);
        CHECK(std::abs(fd - est[k]) / std::max(std::abs(est[k]), 1.0) < 1e-5);
      }
    }
  }
}

TEST_CASE("empirical log density is normalized") {
  const ParticleEnsemble e({vec({-1}), vec({0.5}), vec({2})});
  const EmpiricalScore score(e, Renderer::identity(1));
  const int n = 4001;
  const double lo = -10, hi = 10, dx = (hi - lo) / (n - 1);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += ((i == 0 || i == n - 1) ? 0.5 : 1.0) * std::exp(score.log_density(vec({lo + i * dx}), 0.4, {}));
  }
  CHECK(acc * dx == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("empirical estimate does not depend on particle order") {
  Rng rng(33, Stream::Test);
  std::vector<Vector> ps;
  for (int i = 0; i < 17; ++i) ps.push_back(rng.normal_vector(2));
  std::vector<Vector> reversed(ps.rbegin(), ps.rend());
  std::vector<Vector> rotated = ps;
  std::rotate(rotated.begin(), rotated.begin() + 5, rotated.end());
  const Renderer lin = Renderer::linear_projection();
  for (int i = 0; i < 50; ++i) {
    const Vector x = rng.normal_vector(1);
    const double t = rng.uniform(0.02, 1.0);
    const Camera c = lin.sample_camera(rng);
    const Vector a = empirical_estimate(ParticleEnsemble(ps), lin, c, x, t);
    CHECK(test::same_bits(a, empirical_estimate(ParticleEnsemble(reversed), lin, c, x, t)));
    CHECK(test::same_bits(a, empirical_estimate(ParticleEnsemble(rotated), lin, c, x, t)));
  }
}

TEST_CASE("empirical estimate errors") {
  const ParticleEnsemble e({vec({1, 0})});
  CHECK_THROWS_AS(empirical_estimate(e, Renderer::identity(2), {}, vec({0, 0}), 0.0), SingularTimeError);
  CHECK_THROWS_AS(empirical_estimate(ParticleEnsemble(), Renderer::identity(2), {}, vec({0, 0}), 0.5),
                  InvariantError);
  CHECK_THROWS_AS(empirical_estimate(e, Renderer::identity(2), {}, vec({0}), 0.5), DimensionError);
}

TEST_CASE("empirical estimate stays finite far from all particles") {
  const ParticleEnsemble e({vec({1, 0}), vec({-1, 0})});
  const Vector est = empirical_estimate(e, Renderer::identity(2), {}, vec({500, 0}), 0.05);
  CHECK(est.allFinite());
}

TEST_CASE("fresh learned estimator predicts zero") {
  const LearnedEstimator est = make_estimator(2, 1);
  Rng rng(34, Stream::Test);
  for (int i = 0; i < 20; ++i) {
    const Vector out = learned_estimate(est, 3.0 * rng.normal_vector(2), rng.uniform(), {rng.uniform(0, 6)});
    CHECK(out.norm() == 0.0);
  }
  CHECK(est.features(vec({1, 2}), 0.25, {0.0}).size() == 7);
}

TEST_CASE("zero learning rate leaves weights unchanged") {
  LearnedEstimator est = make_estimator(2, 2);
  const Vector before = est.network().parameters();
  Rng rng(1, Stream::EstimatorTrain);
  const double loss = train_step(est, ParticleEnsemble({vec({1, 1})}), Renderer::identity(2), rng, 0.0);
  CHECK(std::isfinite(loss));
  CHECK(test::same_bits(est.network().parameters(), before));
}

TEST_CASE("training converges to the single-particle optimum") {
  // With one particle y the noise is recoverable: eps = (x_t - alpha y) / sigma.
  const Vector theta = vec({1, -0.5});
  const ParticleEnsemble ens({theta});
  const Renderer id = Renderer::identity(2);
  LearnedEstimator est = make_estimator(2, 3);
  std::vector<double> losses;
  train(est, ens, id, 3, 5000, 1e-3, &losses);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 50; ++i) {
    first += losses[i] / 50;
    last += losses[losses.size() - 1 - i] / 50;
  }
  CHECK(last < 0.5 * first);
  CHECK(last < 0.02);

  Rng rng(35, Stream::Test);
  double mse = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double t = rng.uniform(0.02, 0.98);
    const auto [alpha, sigma] = alpha_sigma(t);
    const Vector x_t = perturb(theta, t, rng.normal_vector(2));
    const Vector optimum = (x_t - alpha * theta) / sigma;
    mse += (learned_estimate(est, x_t, t, {}) - optimum).squaredNorm() / 1000;
  }
  CHECK(mse < 0.05);
}

TEST_CASE("trained predictions depend on the camera") {
  const ParticleEnsemble ens({vec({1, 0})});
  const Renderer lin = Renderer::linear_projection();
  LearnedEstimator est = make_estimator(1, 4);
  train(est, ens, lin, 4, 3000, 1e-3);
  // Renders are 1 at c = 0 and 0 at c = pi/2.
  const Vector x = vec({0.5});
  const double d = (learned_estimate(est, x, 0.3, {0.0}) - learned_estimate(est, x, 0.3, {std::numbers::pi / 2}))
                       .cwiseAbs()
                       .maxCoeff();
  CHECK(d > 0.01);
}

TEST_CASE("plain SGD reduces the loss over several seeds") {
  const ParticleEnsemble ens({vec({1, 0}), vec({-1, 0.5}), vec({0, 2})});
  const Renderer id = Renderer::identity(2);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng init(seed, Stream::EstimatorInit);
    LearnedEstimator est(2, {64, 16, {OptimizerKind::Sgd, 1e-3}}, init);
    std::vector<double> losses;
    train(est, ens, id, seed, 500, 1e-3, &losses);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 50; ++i) {
      first += losses[i];
      last += losses[losses.size() - 1 - i];
    }
    CHECK(last < first);
  }
}

TEST_CASE("training is deterministic") {
  const ParticleEnsemble ens({vec({1, 0}), vec({-1, 0.5})});
  const Renderer lin = Renderer::linear_projection();
  LearnedEstimator a = make_estimator(1, 5, 8);
  LearnedEstimator b = make_estimator(1, 5, 8);
  train(a, ens, lin, 9, 200, 1e-3);
  train(b, ens, lin, 9, 200, 1e-3);
  CHECK(test::same_bits(a.network().parameters(), b.network().parameters()));
  CHECK(a.steps() == 200);
}

TEST_CASE("training errors") {
  LearnedEstimator est = make_estimator(2, 6);
  Rng rng(1, Stream::EstimatorTrain);
  CHECK_THROWS_AS(train_step(est, ParticleEnsemble(), Renderer::identity(2), rng, 1e-3), InvariantError);
  CHECK_THROWS_AS(train_step(est, ParticleEnsemble({vec({0, 0})}), Renderer::identity(2), rng, -1.0),
                  InvariantError);
  est.network().parameters()[0] = std::nan("");
  CHECK_THROWS_AS(train_step(est, ParticleEnsemble({vec({0, 0})}), Renderer::identity(2), rng, 1e-3), NumericError);
}

}  // TEST_SUITE
