#include <doctest.h>

#include <cmath>

#include "loss_reference.hpp"
#include "pses/loss.hpp"
#include "pses/optim.hpp"
#include "testutil.hpp"

using namespace pses;

namespace {

Tensor<double> random_binary_mask(Rng& rng, Shape shape, double p = 0.4) {
  Tensor<double> gt = Tensor<double>::zeros(std::move(shape));
  for (int64_t i = 0; i < gt.numel(); ++i) gt.data()[i] = rng.uniform() < p ? 1.0 : 0.0;
  return gt;
}

}  // namespace

TEST_CASE("weighted_bce_dice limits") {
  SUBCASE("perfect prediction is almost free") {
    Tensor<double> pred = Tensor<double>::full({1, 1, 8, 8}, 1.0);
    Tensor<double> gt = Tensor<double>::full({1, 1, 8, 8}, 1.0);
    CHECK(weighted_bce_dice(pred, gt).item() < 1e-5);
  }

  SUBCASE("confidently wrong prediction costs about -ln(1e-7)") {
    Tensor<double> pred = Tensor<double>::full({1, 1, 8, 8}, 1.0 - 1e-7);
    Tensor<double> gt = Tensor<double>::zeros({1, 1, 8, 8});
    const double loss = weighted_bce_dice(pred, gt).item();
    std::vector<double> p(64, 1.0 - 1e-7), g(64, 0.0);
    const double want = test::weighted_bce_dice_reference(p, g, 8, 8, 31, 5.0);
    CHECK(loss == doctest::Approx(want).epsilon(1e-9));
    CHECK(loss > 16.0);  // wBCE alone is -ln(1e-7) ~ 16.1
  }

  SUBCASE("interior pixels far from the boundary have unit weight") {
    // 8x8 all-ones mask: with a 31x31 window the zero padding always bleeds
    // in, so compare against the brute-force pooling reference; with a 3x3
    // window the interior is genuinely flat and w = 1 there.
    Tensor<double> gt = Tensor<double>::full({1, 1, 8, 8}, 1.0);
    Tensor<double> pooled = avg_pool2d(gt, 3, 1, 1);
    for (int64_t y = 1; y < 7; ++y) {
      for (int64_t x = 1; x < 7; ++x) {
        CHECK(pooled.data()[y * 8 + x] == doctest::Approx(1.0));
      }
    }
  }
}

TEST_CASE("weighted_bce_dice matches the scalar reference on random instances") {
  Rng rng(71);
  for (int trial = 0; trial < 25; ++trial) {
    Tensor<double> pred = test::random_tensor({1, 1, 8, 8}, rng, 0.02, 0.98);
    Tensor<double> gt = random_binary_mask(rng, {1, 1, 8, 8});
    const double got = weighted_bce_dice(pred, gt).item();
    std::vector<double> p(pred.data(), pred.data() + 64);
    std::vector<double> g(gt.data(), gt.data() + 64);
    const double want = test::weighted_bce_dice_reference(p, g, 8, 8, 31, 5.0);
    CHECK(got == doctest::Approx(want).epsilon(1e-5));
    CHECK(got >= 0.0);
  }
}

TEST_CASE("weighted_bce_dice contract errors") {
  Tensor<double> pred = Tensor<double>::full({1, 1, 4, 4}, 0.5);
  CHECK_THROWS_AS(weighted_bce_dice(pred, Tensor<double>::zeros({1, 1, 8, 8})), ShapeError);
  Tensor<double> bad_gt = Tensor<double>::full({1, 1, 4, 4}, 0.3);
  CHECK_THROWS_AS(weighted_bce_dice(pred, bad_gt), ContractError);
}

TEST_CASE("weighted_bce_dice gradient matches finite differences") {
  for (uint64_t seed : {70u, 71u, 73u}) {
    Rng rng(seed);
    Tensor<double> pred = test::random_tensor({1, 1, 8, 8}, rng, 0.05, 0.95);
    Tensor<double> gt = random_binary_mask(rng, {1, 1, 8, 8});
    auto res = test::gradcheck([&]() { return weighted_bce_dice(pred, gt); }, {pred}, 1e-5);
    CHECK_MESSAGE(res.ok(), "seed ", seed, " rel err ", res.max_rel_err);
  }
}

TEST_CASE("adamw update rule") {
  SUBCASE("zero gradient and zero decay is a fixed point") {
    Tensor<float> p = Tensor<float>::from({3}, {1.0f, -2.0f, 0.5f});
    p.set_requires_grad(true);
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt({p}, cfg);
    opt.step();
    opt.step();
    CHECK(p.data()[0] == 1.0f);
    CHECK(p.data()[1] == -2.0f);
    CHECK(p.data()[2] == 0.5f);
  }

  SUBCASE("zero gradient with decay scales by (1 - lr*wd)") {
    Tensor<float> p = Tensor<float>::from({1}, {1.0f});
    p.set_requires_grad(true);
    AdamWConfig cfg;
    cfg.lr = 1e-4;
    cfg.weight_decay = 1e-4;
    AdamW opt({p}, cfg);
    opt.step();
    CHECK(p.data()[0] == doctest::Approx(1.0f - 1e-8f).epsilon(1e-12));
  }

  SUBCASE("two steps with constant gradient match a hand trace") {
    Tensor<float> p = Tensor<float>::from({1}, {0.5f});
    p.set_requires_grad(true);
    AdamWConfig cfg;
    cfg.lr = 0.01;
    cfg.beta1 = 0.9;
    cfg.beta2 = 0.999;
    cfg.eps = 1e-8;
    cfg.weight_decay = 0.004;
    AdamW opt({p}, cfg);

    // Hand-executed recurrence in double precision.
    double hp = 0.5, m = 0.0, v = 0.0;
    for (int t = 1; t <= 2; ++t) {
      hp -= 0.01 * 0.004 * hp;
      m = 0.9 * m + 0.1 * 1.0;
      v = 0.999 * v + 0.001 * 1.0;
      const double mhat = m / (1.0 - std::pow(0.9, t));
      const double vhat = v / (1.0 - std::pow(0.999, t));
      hp -= 0.01 * mhat / (std::sqrt(vhat) + 1e-8);
    }

    for (int t = 0; t < 2; ++t) {
      p.grad()[0] = 1.0f;
      opt.step();
    }
    CHECK(p.data()[0] == doctest::Approx(hp).epsilon(1e-6));
  }

  SUBCASE("lr zero with zero decay leaves parameters untouched") {
    Tensor<float> p = Tensor<float>::from({2}, {0.25f, -0.75f});
    p.set_requires_grad(true);
    AdamWConfig cfg;
    cfg.lr = 0.0;
    cfg.weight_decay = 0.0;
    AdamW opt({p}, cfg);
    p.grad()[0] = 3.0f;
    p.grad()[1] = -2.0f;
    opt.step();
    CHECK(p.data()[0] == 0.25f);
    CHECK(p.data()[1] == -0.75f);
  }
}
