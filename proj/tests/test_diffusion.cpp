#include <doctest.h>

#include <cmath>
#include <numeric>

#include "support.hpp"
#include "tabdiff/diffusion.hpp"
#include "tabdiff/error.hpp"
#include "tabdiff/guidance.hpp"
#include "tabdiff/schedule.hpp"

using namespace tabdiff;

namespace {

// Plain DDPM reverse update, written straight from the textbook expression.
Vector plain_ddpm_step(const DiffusionModel& m, const Vector& x, std::size_t t, const Vector& cond, const Vector& z) {
  const double a = m.schedule.alpha[t - 1];
  const double ab = m.schedule.alpha_bar[t - 1];
  const Vector e = m.eps.predict(x, t, cond);
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = (1.0 / std::sqrt(a)) * (x[i] - ((1.0 - a) / std::sqrt(1.0 - ab)) * e[i]);
    if (t > 1) out[i] += std::sqrt(m.schedule.beta[t - 1]) * z[i];
  }
  return out;
}

GuidanceConfig unguided() {
  GuidanceConfig g;
  g.gamma = g.lambda = 0.0;
  g.use_classifier = g.use_performance = false;
  return g;
}

}  // namespace

TEST_CASE("build_schedule hand values") {
  const NoiseSchedule s = build_schedule(4, 0.1, 0.4);
  const double beta[] = {0.1, 0.2, 0.3, 0.4};
  const double alpha_bar[] = {0.9, 0.72, 0.504, 0.3024};
  for (int i = 0; i < 4; ++i) {
    CHECK(s.beta[i] == doctest::Approx(beta[i]).epsilon(1e-15));
    CHECK(s.alpha[i] == doctest::Approx(1 - beta[i]).epsilon(1e-15));
    CHECK(s.alpha_bar[i] == doctest::Approx(alpha_bar[i]).epsilon(1e-14));
    CHECK(s.sigma[i] == doctest::Approx(std::sqrt(beta[i])).epsilon(1e-15));
  }
  CHECK(build_schedule(1, 0.5, 0.5).alpha_bar == std::vector<double>{0.5});
  CHECK_THROWS_AS(build_schedule(0, 0.1, 0.2), ConfigError);
  CHECK_THROWS_AS(build_schedule(3, 0.3, 0.2), ConfigError);
  CHECK_THROWS_AS(build_schedule(3, 0.0, 0.2), ConfigError);
  CHECK_THROWS_AS(build_schedule(3, 0.1, 1.0), ConfigError);
}

TEST_CASE("default schedule invariants") {
  const NoiseSchedule s = default_schedule(200);
  const double sum = std::accumulate(s.beta.begin(), s.beta.end(), 0.0);
  CHECK(sum == doctest::Approx(10.0).epsilon(0.01));
  CHECK(s.alpha_bar.back() < 1e-3);
  double prod = 1.0;
  for (std::size_t t = 0; t < s.steps; ++t) {
    CHECK(s.beta[t] > 0.0);
    CHECK(s.beta[t] < 1.0);
    prod *= s.alpha[t];
    CHECK(std::abs(s.alpha_bar[t] - prod) < 1e-12);
    if (t > 0) {
      CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
      CHECK(std::abs(s.alpha_bar[t] / s.alpha_bar[t - 1] - s.alpha[t]) < 1e-12);
    }
  }
}

TEST_CASE("q_sample hand values") {
  const Vector r = q_sample(Vector{1, 0}, 0.25, Vector{0, 1});
  CHECK(r[0] == 0.5);
  CHECK(r[1] == doctest::Approx(std::sqrt(0.75)).epsilon(1e-15));
  CHECK(q_sample(Vector{3, -2}, 1.0, Vector{7, 7}) == Vector{3, -2});
  const NoiseSchedule s = default_schedule(50);
  const Vector z = q_sample(Vector{2.0}, 10, Vector{0.0}, s);
  CHECK(z[0] == std::sqrt(s.alpha_bar[9]) * 2.0);
  CHECK_THROWS_AS(q_sample(Vector{1, 2}, 0.5, Vector{1}), ShapeError);
}

TEST_CASE("q_sample moments within 5 standard errors") {
  const NoiseSchedule s = default_schedule(200);
  const Vector x0{1.5, -0.5};
  Rng rng(21);
  const std::size_t n = 100000;
  for (std::size_t t : {1u, 50u, 200u}) {
    const double ab = s.alpha_bar_at(t);
    double sum[2] = {0, 0}, sq[2] = {0, 0};
    for (std::size_t i = 0; i < n; ++i) {
      const Vector x = q_sample(x0, t, rng.gaussian_vector(2), s);
      for (int k = 0; k < 2; ++k) {
        sum[k] += x[k];
        sq[k] += x[k] * x[k];
      }
    }
    for (int k = 0; k < 2; ++k) {
      const double mean = sum[k] / n;
      const double var = sq[k] / n - mean * mean;
      const double v = 1.0 - ab;
      CHECK(std::abs(mean - std::sqrt(ab) * x0[k]) < 5.0 * std::sqrt(v / n));
      // Variance of the sample variance for a Gaussian is 2 v^2 / n.
      CHECK(std::abs(var - v) < 5.0 * std::sqrt(2.0 * v * v / n));
    }
  }
}

TEST_CASE("guided_step reductions") {
  const DiffusionModel m = testing::zero_model(1, 10);
  const GuidanceConfig g = unguided();
  const Vector cond{0.0};
  const Vector x = guided_step(m, {}, Vector{0.8}, 1, cond, g, Vector{});
  CHECK(x[0] == doctest::Approx(0.8 / std::sqrt(m.schedule.alpha[0])).epsilon(1e-15));

  // Linear predictor P(x) = 2x, target 1, x = 0, lambda = 0.5 adds +2.
  PerformancePredictor pred;
  pred.design_dim = 1;
  pred.net.spec = mlp_spec(1, {}, 1, Activation::Identity, Activation::Identity);
  pred.net.params = ParameterSet::zeros(pred.net.spec);
  pred.net.params.layers[0].weight = {2.0};
  GuidanceConfig lam = unguided();
  lam.lambda = 0.5;
  lam.use_performance = true;
  lam.target = 1.0;
  GuidanceNets nets;
  nets.predictor = &pred;
  const Vector y = guided_step(m, nets, Vector{0.0}, 1, cond, lam, Vector{});
  CHECK(y[0] == doctest::Approx(2.0).epsilon(1e-15));

  // At P(x) == target the performance term vanishes.
  lam.target = 2.0 * 0.3;
  const Vector at_target = guided_step(m, nets, Vector{0.3}, 1, cond, lam, Vector{});
  CHECK(at_target[0] == doctest::Approx(0.3 / std::sqrt(m.schedule.alpha[0])).epsilon(1e-15));

  GuidanceConfig missing = unguided();
  missing.gamma = 0.7;
  missing.use_classifier = true;
  CHECK_THROWS_AS(guided_step(m, {}, Vector{0.0}, 1, cond, missing, Vector{}), ConfigError);
}

TEST_CASE("guided_step without guidance equals a plain DDPM update bit-exactly") {
  const DiffusionModel m = testing::random_model(3, 20);
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t t = 1 + static_cast<std::size_t>(rng.integer(0, 19));
    const Vector x = rng.gaussian_vector(3);
    const Vector z = rng.gaussian_vector(3);
    const Vector cond{rng.gaussian()};
    CHECK(guided_step(m, {}, x, t, cond, unguided(), z) == plain_ddpm_step(m, x, t, cond, z));
  }
}

TEST_CASE("sample is deterministic and handles n = 0") {
  const DiffusionModel m = testing::random_model(2, 15);
  ConditionVector c;
  c.performance_target = 0.1;
  CHECK(sample(m, {}, c, 0, unguided(), 1).empty());
  const auto a = sample(m, {}, c, 5, unguided(), 42);
  const auto b = sample(m, {}, c, 5, unguided(), 42);
  CHECK(a == b);
  CHECK(a != sample(m, {}, c, 5, unguided(), 43));
  std::size_t chains = 0;
  sample(m, {}, c, 4, unguided(), 1, [&] { ++chains; });
  CHECK(chains == 4);
}

TEST_CASE("sample reports non-finite states") {
  DiffusionModel m = testing::zero_model(1, 5);
  m.eps.backbone.params.layers.back().bias = {std::nan("")};
  ConditionVector c;
  CHECK_THROWS_AS(sample(m, {}, c, 1, unguided(), 0), SamplingError);
}

TEST_CASE("training with zero epochs leaves parameters unchanged") {
  DiffusionModel m = testing::random_model(2, 10);
  const Vector before = m.eps.backbone.params.flatten();
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK(train(m, {{0.0, 1.0}}, {{0.0}}, cfg).empty());
  CHECK(m.eps.backbone.params.flatten() == before);
  CHECK_THROWS_AS(train(m, {}, {}, cfg), DataError);
}

TEST_CASE("training on a single point reduces the loss") {
  DiffusionModel m = testing::random_model(2, 50);
  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.batch_size = 1;
  const auto rec = train(m, {{0.5, -0.5}}, {{0.0}}, cfg);
  REQUIRE(rec.size() == 500);
  double head = 0, tail = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    head += rec[i].mean_loss;
    tail += rec[rec.size() - 1 - i].mean_loss;
  }
  CHECK(tail < head);
  for (const auto& r : rec) CHECK((std::isfinite(r.mean_loss) && r.mean_loss >= 0.0));
}

TEST_CASE("training on the zero dataset converges below 5% of the initial loss") {
  Rng rng(7);
  DiffusionModel m;
  m.eps = NoisePredictor::create(1, 1, {32, 3, 16}, rng);
  m.schedule = default_schedule(200);
  m.design_stats = Normalizer::identity(1);
  m.condition_stats = Normalizer::identity(1);
  TrainConfig cfg;
  cfg.epochs = 2000;  // one batch per epoch: 2000 optimizer steps
  cfg.batch_size = 64;
  cfg.learning_rate = 3e-3;
  const std::vector<Vector> x0(64, Vector{0.0});
  const std::vector<Vector> cond(64, Vector{0.0});
  const auto rec = train(m, x0, cond, cfg);
  double head = 0, tail = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    head += rec[i].mean_loss / 20;
    tail += rec[rec.size() - 1 - i].mean_loss / 20;
  }
  MESSAGE("initial loss " << head << ", final loss " << tail);
  CHECK(tail < 0.05 * head);
}
