#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "clt/optim.hpp"

using namespace clt;

TEST_CASE("lr schedule boundary points") {
  ScheduleConfig s{5e-4, 5000, 100000};
  CHECK(lr_at_step(s, 0) == 0.0);
  CHECK(lr_at_step(s, 5000) == doctest::Approx(5e-4));
  CHECK(lr_at_step(s, 52500) == doctest::Approx(2.5e-4));
  CHECK(lr_at_step(s, 100000) == 0.0);
  CHECK_THROWS_AS(lr_at_step(s, -1), ValueError);
  CHECK_THROWS_AS(lr_at_step(s, 100001), ValueError);
}

TEST_CASE("lr schedule is piecewise linear, continuous, peaks once at warmup") {
  ScheduleConfig s{1e-3, 40, 200};
  double prev = -1.0;
  std::int64_t argmax = -1;
  double best = -1.0;
  for (std::int64_t t = 0; t <= 200; ++t) {
    double v = lr_at_step(s, t);
    if (v > best) {
      best = v;
      argmax = t;
    }
    if (t <= 40) CHECK(v >= prev);  // nondecreasing through warmup
    if (t > 40) CHECK(v <= prev);   // nonincreasing after
    prev = v;
  }
  CHECK(argmax == 40);
  CHECK(best == doctest::Approx(1e-3));

  // continuity at the peak: one-sided slopes
  double left = lr_at_step(s, 40) - lr_at_step(s, 39);
  CHECK(left == doctest::Approx(1e-3 / 40));
  double right = lr_at_step(s, 41) - lr_at_step(s, 40);
  CHECK(right == doctest::Approx(-1e-3 / 160));
}

TEST_CASE("zero-warmup schedule starts at the peak") {
  ScheduleConfig s{2e-4, 0, 100};
  CHECK(lr_at_step(s, 0) == doctest::Approx(2e-4));
  CHECK(lr_at_step(s, 50) == doctest::Approx(1e-4));
  CHECK(lr_at_step(s, 100) == 0.0);
}

TEST_CASE("decoupled decay shrinks a weight by exactly (1 - lr*wd) with zero grad") {
  auto w = Tensor<double>::from({2}, {1.0, -2.0}, true);
  AdamWConfig cfg;
  cfg.weight_decay = 0.1;
  cfg.clip_norm = 0.0;
  AdamW<double> opt({{"layer0.mlp.in.weight", w}}, cfg);
  w.zero_grad();  // grads stay zero
  const double lr = 0.01;
  opt.step(lr);
  CHECK(w.data()[0] == doctest::Approx(1.0 * (1.0 - lr * 0.1)).epsilon(1e-15));
  CHECK(w.data()[1] == doctest::Approx(-2.0 * (1.0 - lr * 0.1)).epsilon(1e-15));
}

TEST_CASE("biases and norm parameters are exempt from decay") {
  CHECK(AdamW<double>::is_decay_exempt("layer0.attention.query.bias"));
  CHECK(AdamW<double>::is_decay_exempt("embeddings.norm.gain"));
  CHECK(AdamW<double>::is_decay_exempt("mlm.output_bias"));
  CHECK_FALSE(AdamW<double>::is_decay_exempt("embeddings.word"));
  CHECK_FALSE(AdamW<double>::is_decay_exempt("layer3.mlp.out.weight"));

  auto b = Tensor<double>::from({1}, {3.0}, true);
  AdamWConfig cfg;
  cfg.weight_decay = 0.5;
  AdamW<double> opt({{"head.bias", b}}, cfg);
  b.zero_grad();
  opt.step(0.1);
  CHECK(b.data()[0] == 3.0);
}

TEST_CASE("wd = 0 matches the hand Adam recursion to 1e-12") {
  auto p = Tensor<double>::from({1}, {0.5}, true);
  AdamWConfig cfg;
  cfg.clip_norm = 0.0;
  AdamW<double> opt({{"w", p}}, cfg);

  const double grads[3] = {0.3, -0.2, 0.05};
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double x = 0.5, m = 0, v = 0;
  for (int t = 1; t <= 3; ++t) {
    p.zero_grad();
    p.grad_mut()[0] = grads[t - 1];
    opt.step(lr);
    m = b1 * m + (1 - b1) * grads[t - 1];
    v = b2 * v + (1 - b2) * grads[t - 1] * grads[t - 1];
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    x -= lr * mhat / (std::sqrt(vhat) + eps);
    CHECK(p.data()[0] == doctest::Approx(x).epsilon(1e-12));
  }
}

TEST_CASE("constant gradient drives the update magnitude toward lr") {
  auto p = Tensor<double>::from({1}, {0.0}, true);
  AdamWConfig cfg;
  cfg.clip_norm = 0.0;
  AdamW<double> opt({{"w", p}}, cfg);
  double prev = 0.0;
  double delta = 0.0;
  const double lr = 1e-3;
  for (int t = 0; t < 2000; ++t) {
    p.zero_grad();
    p.grad_mut()[0] = 0.37;
    prev = p.data()[0];
    opt.step(lr);
    delta = std::fabs(p.data()[0] - prev);
  }
  CHECK(delta == doctest::Approx(lr).epsilon(1e-3));
}

TEST_CASE("lr = 0 leaves parameters unchanged") {
  Rng rng(4);
  auto p = Tensor<double>::randn({32}, rng, 1.0, true);
  std::vector<double> before(p.data().begin(), p.data().end());
  AdamWConfig cfg;
  cfg.weight_decay = 0.1;
  AdamW<double> opt({{"layer0.mlp.in.weight", p}}, cfg);
  for (int t = 0; t < 5; ++t) {
    p.zero_grad();
    for (auto& g : p.grad_mut()) g = rng.normal();
    opt.step(0.0);
  }
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(p.data()[i] == before[i]);
}

TEST_CASE("global norm clipping rescales large gradients") {
  auto p = Tensor<double>::from({2}, {0.0, 0.0}, true);
  AdamWConfig cfg;
  cfg.clip_norm = 1.0;
  AdamW<double> opt({{"w", p}}, cfg);
  p.zero_grad();
  p.grad_mut()[0] = 30.0;
  p.grad_mut()[1] = 40.0;  // norm 50
  opt.step(0.0);           // lr 0: only the clip mutates grads
  CHECK(p.grad()[0] == doctest::Approx(0.6));
  CHECK(p.grad()[1] == doctest::Approx(0.8));
}
