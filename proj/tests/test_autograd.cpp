#include <doctest.h>

#include "testutil.hpp"

using namespace pses;
using test::gradcheck;
using test::random_tensor;

// Every differentiable primitive against central finite differences on the
// 64-bit engine, five seeds each.

namespace {
constexpr uint64_t kSeeds[] = {101, 202, 303, 404, 505};
}

TEST_CASE("gradcheck conv2d") {
  for (uint64_t seed : kSeeds) {
    Rng rng(seed);
    Tensor<double> x = random_tensor({1, 2, 5, 5}, rng);
    Tensor<double> w = random_tensor({3, 2, 3, 3}, rng);
    Tensor<double> b = random_tensor({3}, rng);
    auto res = gradcheck([&]() { return sum(mul(conv2d(x, w, b, 1, 2, 2), conv2d(x, w, b, 1, 2, 2))); },
                         {x, w, b});
    CHECK_MESSAGE(res.ok(), "seed ", seed, " rel err ", res.max_rel_err);
  }
}

TEST_CASE("gradcheck conv2d strided") {
  for (uint64_t seed : kSeeds) {
    Rng rng(seed);
    Tensor<double> x = random_tensor({2, 2, 6, 6}, rng);
    Tensor<double> w = random_tensor({2, 2, 3, 3}, rng);
    auto res = gradcheck([&]() { return sum(conv2d(x, w, Tensor<double>(), 2, 1, 1)); }, {x, w});
    CHECK_MESSAGE(res.ok(), "seed ", seed, " rel err ", res.max_rel_err);
  }
}

TEST_CASE("gradcheck depthwise_conv2d") {
  for (uint64_t seed : kSeeds) {
    Rng rng(seed);
    Tensor<double> x = random_tensor({1, 3, 5, 5}, rng);
    Tensor<double> w = random_tensor({3, 1, 3, 3}, rng);
    Tensor<double> b = random_tensor({3}, rng);
    auto res = gradcheck([&]() { return sum(mul(depthwise_conv2d(x, w, b, 1, 1),
                                                depthwise_conv2d(x, w, b, 1, 1))); },
                         {x, w, b});
    CHECK_MESSAGE(res.ok(), "seed ", seed, " rel err ", res.max_rel_err);
  }
}

TEST_CASE("gradcheck avg_pool2d") {
  for (uint64_t seed : kSeeds) {
    Rng rng(seed);
    Tensor<double> x = random_tensor({1, 2, 6, 6}, rng);
    auto res = gradcheck([&]() { return sum(mul(avg_pool2d(x, 3, 2, 1), avg_pool2d(x, 3, 2, 1))); }, {x});
    CHECK_MESSAGE(res.ok(), "seed ", seed, " rel err ", res.max_rel_err);
  }
}

TEST_CASE("gradcheck bilinear_resize") {
  for (uint64_t seed : kSeeds) {
    Rng rng(seed);
    Tensor<double> x = random_tensor({1, 2, 4, 5}, rng);
    auto res = gradcheck([&]() { return sum(mul(bilinear_resize(x, 7, 3), bilinear_resize(x, 7, 3))); }, {x});
    CHECK_MESSAGE(res.ok(), "seed ", seed, " rel err ", res.max_rel_err);
  }
}

TEST_CASE("gradcheck batch_norm training and eval") {
  for (uint64_t seed : kSeeds) {
    Rng rng(seed);
    Tensor<double> x = random_tensor({2, 3, 4, 4}, rng);
    Tensor<double> g = random_tensor({3}, rng, 0.5, 1.5);
    Tensor<double> b = random_tensor({3}, rng);
    Tensor<double> rm = random_tensor({3}, rng);
    Tensor<double> rv = random_tensor({3}, rng, 0.5, 1.5);
    for (bool training : {true, false}) {
      auto res = gradcheck(
          [&]() {
            Tensor<double> m = rm.clone_values();
            Tensor<double> v = rv.clone_values();
            Tensor<double> y = batch_norm(x, g, b, m, v, training);
            return sum(mul(y, y));
          },
          {x, g, b});
      CHECK_MESSAGE(res.ok(), "seed ", seed, " training ", training, " rel err ", res.max_rel_err);
    }
  }
}

TEST_CASE("gradcheck layer_norm_chw") {
  for (uint64_t seed : kSeeds) {
    Rng rng(seed);
    Tensor<double> x = random_tensor({2, 4, 3, 3}, rng);
    // Spread the channels so every normalized slice has O(1) variance; a
    // near-constant slice makes the finite-difference step too coarse.
    for (int64_t c = 0; c < 4; ++c) {
      for (int64_t i = 0; i < 9; ++i) {
        x.data()[c * 9 + i] += static_cast<double>(c) * 1.5;
        x.data()[(4 + c) * 9 + i] += static_cast<double>(c) * 1.5;
      }
    }
    Tensor<double> g = random_tensor({4}, rng, 0.5, 1.5);
    Tensor<double> b = random_tensor({4}, rng);
    auto res = gradcheck(
        [&]() {
          Tensor<double> y = layer_norm_chw(x, g, b);
          return sum(mul(y, y));
        },
        {x, g, b});
    CHECK_MESSAGE(res.ok(), "seed ", seed, " rel err ", res.max_rel_err);
  }
}

TEST_CASE("gradcheck matmul and linear") {
  for (uint64_t seed : kSeeds) {
    Rng rng(seed);
    Tensor<double> a = random_tensor({2, 3, 4}, rng);
    Tensor<double> b = random_tensor({2, 4, 5}, rng);
    auto res = gradcheck([&]() { return sum(mul(matmul(a, b), matmul(a, b))); }, {a, b});
    CHECK_MESSAGE(res.ok(), "matmul seed ", seed, " rel err ", res.max_rel_err);

    Tensor<double> x = random_tensor({3, 4}, rng);
    Tensor<double> w = random_tensor({4, 2}, rng);
    Tensor<double> bias = random_tensor({2}, rng);
    auto res2 = gradcheck([&]() { return sum(mul(linear(x, w, bias), linear(x, w, bias))); }, {x, w, bias});
    CHECK_MESSAGE(res2.ok(), "linear seed ", seed, " rel err ", res2.max_rel_err);
  }
}

TEST_CASE("gradcheck layout ops") {
  for (uint64_t seed : kSeeds) {
    Rng rng(seed);
    Tensor<double> x = random_tensor({2, 3, 4}, rng);
    auto res = gradcheck([&]() { return sum(mul(transpose_last2(x), transpose_last2(x))); }, {x});
    CHECK_MESSAGE(res.ok(), "transpose seed ", seed);

    Tensor<double> a = random_tensor({2, 2, 3, 3}, rng);
    Tensor<double> b = random_tensor({2, 1, 3, 3}, rng);
    auto res2 = gradcheck(
        [&]() {
          Tensor<double> c = concat({a, b}, 1);
          return sum(mul(c, c));
        },
        {a, b});
    CHECK_MESSAGE(res2.ok(), "concat seed ", seed);

    auto res3 = gradcheck(
        [&]() {
          Tensor<double> s = slice(a, 1, 0, 1);
          Tensor<double> r = reshape(s, {2, 9});
          return sum(mul(r, r));
        },
        {a});
    CHECK_MESSAGE(res3.ok(), "slice/reshape seed ", seed);

    Tensor<double> rows = random_tensor({5, 3}, rng);
    auto res4 = gradcheck(
        [&]() {
          Tensor<double> gathered = gather_rows(rows, {0, 2, 2, 4});
          return sum(mul(gathered, gathered));
        },
        {rows});
    CHECK_MESSAGE(res4.ok(), "gather seed ", seed);
  }
}

TEST_CASE("gradcheck pointwise ops") {
  for (uint64_t seed : kSeeds) {
    Rng rng(seed);
    // Keep values away from the relu/clamp kinks so the numeric derivative
    // is well defined.
    Tensor<double> x = random_tensor({2, 7}, rng, 0.1, 0.9);
    Tensor<double> y = random_tensor({2, 7}, rng, 1.1, 2.0);

    auto r1 = gradcheck([&]() { return sum(mul(relu(sub(x, y)), relu(sub(x, y)))); }, {x, y});
    CHECK_MESSAGE(r1.ok(), "relu seed ", seed, " rel err ", r1.max_rel_err);

    auto r2 = gradcheck([&]() { return sum(sigmoid(mul(x, y))); }, {x, y});
    CHECK_MESSAGE(r2.ok(), "sigmoid seed ", seed);

    auto r3 = gradcheck([&]() { return sum(log(add(x, y))); }, {x, y});
    CHECK_MESSAGE(r3.ok(), "log seed ", seed);

    auto r4 = gradcheck([&]() { return sum(clamp(mul(x, y), 0.2, 1.5)); }, {x});
    CHECK_MESSAGE(r4.ok(), "clamp seed ", seed);

    auto r5 = gradcheck([&]() { return sum(div(x, y)); }, {x, y});
    CHECK_MESSAGE(r5.ok(), "div seed ", seed);

    auto r6 = gradcheck([&]() { return mean(add_scalar(scale(x, 2.5), -0.75)); }, {x});
    CHECK_MESSAGE(r6.ok(), "scale seed ", seed);
  }
}

TEST_CASE("gradcheck softmax") {
  for (uint64_t seed : kSeeds) {
    Rng rng(seed);
    Tensor<double> x = random_tensor({2, 4, 3}, rng, -2.0, 2.0);
    Tensor<double> w = random_tensor({2, 4, 3}, rng);
    auto res = gradcheck([&]() { return sum(mul(softmax(x, 1), w)); }, {x});
    CHECK_MESSAGE(res.ok(), "seed ", seed, " rel err ", res.max_rel_err);
  }
}

TEST_CASE("gradcheck channel pooling and scale_map") {
  for (uint64_t seed : kSeeds) {
    Rng rng(seed);
    Tensor<double> x = random_tensor({2, 3, 3, 3}, rng);
    // Keep the per-position channel maximum unambiguous so the perturbation
    // cannot flip the argmax.
    for (int64_t b = 0; b < 2; ++b) {
      for (int64_t i = 0; i < 9; ++i) {
        double* v0 = &x.data()[(b * 3 + 0) * 9 + i];
        double* v1 = &x.data()[(b * 3 + 1) * 9 + i];
        double* v2 = &x.data()[(b * 3 + 2) * 9 + i];
        double* top = *v0 > *v1 ? (*v0 > *v2 ? v0 : v2) : (*v1 > *v2 ? v1 : v2);
        *top += 0.1;
      }
    }
    auto r1 = gradcheck([&]() { return sum(mul(channel_max(x), channel_max(x))); }, {x});
    CHECK_MESSAGE(r1.ok(), "channel_max seed ", seed);
    auto r2 = gradcheck([&]() { return sum(mul(channel_mean(x), channel_mean(x))); }, {x});
    CHECK_MESSAGE(r2.ok(), "channel_mean seed ", seed);

    Tensor<double> g = random_tensor({2, 1, 3, 3}, rng);
    auto r3 = gradcheck([&]() { return sum(mul(scale_map(x, g), scale_map(x, g))); }, {x, g});
    CHECK_MESSAGE(r3.ok(), "scale_map seed ", seed);
  }
}
