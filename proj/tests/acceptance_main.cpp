// Acceptance suite: runs every criterion end to end and prints one
// [PASS]/[FAIL] line per criterion. Exit code is the number of failures.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "loss_reference.hpp"
#include "pses/checkpoint.hpp"
#include "pses/image_io.hpp"
#include "pses/loss.hpp"
#include "pses/metrics.hpp"
#include "pses/model.hpp"
#include "pses/train.hpp"
#include "synth_data.hpp"
#include "testutil.hpp"

using namespace pses;
namespace fs = std::filesystem;

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

ModelConfig desk_model_config() {
  ModelConfig cfg;
  cfg.encoder.input_h = 64;
  cfg.encoder.input_w = 64;
  cfg.encoder.stage_channels = {8, 16, 40, 64};
  return cfg;
}

ModelConfig tiny_model_config() {
  ModelConfig cfg;
  cfg.encoder.input_h = 32;
  cfg.encoder.input_w = 32;
  cfg.encoder.stage_channels = {4, 8, 12, 16};
  return cfg;
}

// ---------------------------------------------------------------------------
// 1. Shape contract at 352x352 under 10 s.
// ---------------------------------------------------------------------------
Outcome criterion1() {
  Outcome out;
  ModelConfig cfg;  // paper configuration, one block per stage
  PolypSesModel<float> model(cfg, 42);
  Tensor<float> img = Tensor<float>::full({1, 3, 352, 352}, 0.5f);
  const auto t0 = std::chrono::steady_clock::now();
  ForwardTrace<float> trace = model.forward_traced(img, false);
  const double elapsed = seconds_since(t0);

  out.require(trace.pyramid.f1.shape() == Shape{1, 64, 88, 88}, "F1 shape");
  out.require(trace.pyramid.f2.shape() == Shape{1, 128, 44, 44}, "F2 shape");
  out.require(trace.pyramid.f3.shape() == Shape{1, 320, 22, 22}, "F3 shape");
  out.require(trace.pyramid.f4.shape() == Shape{1, 512, 11, 11}, "F4 shape");
  for (const Tensor<float>* m :
       {&trace.outputs.m_initial, &trace.outputs.m1, &trace.outputs.m2, &trace.outputs.m}) {
    out.require(m->shape() == Shape{1, 1, 44, 44}, "output map shape");
  }
  out.require(elapsed < 10.0, "forward took " + std::to_string(elapsed) + " s");
  char buf[64];
  std::snprintf(buf, sizeof(buf), "forward %.2f s", elapsed);
  if (out.pass) out.detail = buf;
  return out;
}

// ---------------------------------------------------------------------------
// 2. Finite-difference gradient checks: all primitives (step 1e-3) and all
//    composite blocks (step 1e-5; see note below), 5 seeds each, < 2 min.
// ---------------------------------------------------------------------------
Outcome criterion2() {
  Outcome out;
  const auto t0 = std::chrono::steady_clock::now();
  const uint64_t seeds[5] = {101, 202, 303, 404, 505};

  auto check = [&](const char* name, uint64_t seed, test::GradCheckResult res) {
    out.require(res.ok(), std::string(name) + " seed " + std::to_string(seed) + " rel " +
                              std::to_string(res.max_rel_err));
  };

  for (uint64_t seed : seeds) {
    Rng rng(seed);
    // conv2d (dense, strided, dilated)
    {
      Tensor<double> x = test::random_tensor({1, 2, 5, 5}, rng);
      Tensor<double> w = test::random_tensor({3, 2, 3, 3}, rng);
      Tensor<double> b = test::random_tensor({3}, rng);
      check("conv2d", seed,
            test::gradcheck([&]() { return sum(mul(conv2d(x, w, b, 1, 2, 2), conv2d(x, w, b, 1, 2, 2))); },
                            {x, w, b}));
      check("conv2d_strided", seed,
            test::gradcheck([&]() { return sum(conv2d(x, w, b, 2, 1, 1)); }, {x, w, b}));
    }
    {
      Tensor<double> x = test::random_tensor({1, 3, 5, 5}, rng);
      Tensor<double> w = test::random_tensor({3, 1, 3, 3}, rng);
      Tensor<double> b = test::random_tensor({3}, rng);
      check("depthwise", seed,
            test::gradcheck(
                [&]() { return sum(mul(depthwise_conv2d(x, w, b, 1, 1), depthwise_conv2d(x, w, b, 1, 1))); },
                {x, w, b}));
    }
    {
      Tensor<double> x = test::random_tensor({1, 2, 6, 6}, rng);
      check("avg_pool2d", seed,
            test::gradcheck([&]() { return sum(mul(avg_pool2d(x, 3, 2, 1), avg_pool2d(x, 3, 2, 1))); }, {x}));
      check("bilinear_resize", seed,
            test::gradcheck(
                [&]() { return sum(mul(bilinear_resize(x, 9, 4), bilinear_resize(x, 9, 4))); }, {x}));
    }
    {
      Tensor<double> x = test::random_tensor({2, 3, 4, 4}, rng);
      Tensor<double> g = test::random_tensor({3}, rng, 0.5, 1.5);
      Tensor<double> b = test::random_tensor({3}, rng);
      Tensor<double> rm = test::random_tensor({3}, rng);
      Tensor<double> rv = test::random_tensor({3}, rng, 0.5, 1.5);
      for (bool training : {true, false}) {
        check(training ? "batch_norm_train" : "batch_norm_eval", seed,
              test::gradcheck(
                  [&]() {
                    Tensor<double> m = rm.clone_values();
                    Tensor<double> v = rv.clone_values();
                    return sum(mul(batch_norm(x, g, b, m, v, training),
                                   batch_norm(x, g, b, m, v, training)));
                  },
                  {x, g, b}));
      }
    }
    {
      Tensor<double> x = test::random_tensor({2, 4, 3, 3}, rng);
      for (int64_t c = 0; c < 4; ++c) {
        for (int64_t i = 0; i < 9; ++i) {
          x.data()[c * 9 + i] += static_cast<double>(c) * 1.5;
          x.data()[(4 + c) * 9 + i] += static_cast<double>(c) * 1.5;
        }
      }
      Tensor<double> g = test::random_tensor({4}, rng, 0.5, 1.5);
      Tensor<double> b = test::random_tensor({4}, rng);
      check("layer_norm", seed,
            test::gradcheck(
                [&]() {
                  Tensor<double> y = layer_norm_chw(x, g, b);
                  return sum(mul(y, y));
                },
                {x, g, b}));
    }
    {
      Tensor<double> a = test::random_tensor({2, 3, 4}, rng);
      Tensor<double> b = test::random_tensor({2, 4, 5}, rng);
      check("matmul", seed,
            test::gradcheck([&]() { return sum(mul(matmul(a, b), matmul(a, b))); }, {a, b}));
      Tensor<double> x = test::random_tensor({3, 4}, rng);
      Tensor<double> w = test::random_tensor({4, 2}, rng);
      Tensor<double> bias = test::random_tensor({2}, rng);
      check("linear", seed,
            test::gradcheck([&]() { return sum(mul(linear(x, w, bias), linear(x, w, bias))); },
                            {x, w, bias}));
      check("transpose", seed,
            test::gradcheck([&]() { return sum(mul(transpose_last2(a), transpose_last2(a))); }, {a}));
    }
    {
      Tensor<double> a = test::random_tensor({2, 2, 3, 3}, rng);
      Tensor<double> b = test::random_tensor({2, 1, 3, 3}, rng);
      check("concat", seed, test::gradcheck(
                                [&]() {
                                  Tensor<double> cc = concat({a, b}, 1);
                                  return sum(mul(cc, cc));
                                },
                                {a, b}));
      check("slice_reshape", seed, test::gradcheck(
                                       [&]() {
                                         Tensor<double> s = reshape(slice(a, 1, 0, 1), {2, 9});
                                         return sum(mul(s, s));
                                       },
                                       {a}));
      Tensor<double> rows = test::random_tensor({5, 3}, rng);
      check("gather_rows", seed, test::gradcheck(
                                     [&]() {
                                       Tensor<double> picked = gather_rows(rows, {0, 2, 2, 4});
                                       return sum(mul(picked, picked));
                                     },
                                     {rows}));
    }
    {
      Tensor<double> x = test::random_tensor({2, 7}, rng, 0.1, 0.9);
      Tensor<double> y = test::random_tensor({2, 7}, rng, 1.1, 2.0);
      check("relu", seed,
            test::gradcheck([&]() { return sum(mul(relu(sub(x, y)), relu(sub(x, y)))); }, {x, y}));
      check("sigmoid", seed, test::gradcheck([&]() { return sum(sigmoid(mul(x, y))); }, {x, y}));
      check("log", seed, test::gradcheck([&]() { return sum(log(add(x, y))); }, {x, y}));
      check("clamp", seed, test::gradcheck([&]() { return sum(clamp(mul(x, y), 0.2, 1.5)); }, {x}));
      check("div", seed, test::gradcheck([&]() { return sum(div(x, y)); }, {x, y}));
      check("scale", seed, test::gradcheck([&]() { return mean(add_scalar(scale(x, 2.5), -0.75)); }, {x}));
    }
    {
      Tensor<double> x = test::random_tensor({2, 4, 3}, rng, -2.0, 2.0);
      Tensor<double> w = test::random_tensor({2, 4, 3}, rng);
      check("softmax", seed, test::gradcheck([&]() { return sum(mul(softmax(x, 1), w)); }, {x}));
    }
    {
      Tensor<double> x = test::random_tensor({2, 3, 3, 3}, rng);
      for (int64_t b = 0; b < 2; ++b) {
        for (int64_t i = 0; i < 9; ++i) {
          double* v0 = &x.data()[(b * 3 + 0) * 9 + i];
          double* v1 = &x.data()[(b * 3 + 1) * 9 + i];
          double* v2 = &x.data()[(b * 3 + 2) * 9 + i];
          double* top = *v0 > *v1 ? (*v0 > *v2 ? v0 : v2) : (*v1 > *v2 ? v1 : v2);
          *top += 0.1;
        }
      }
      check("channel_max", seed,
            test::gradcheck([&]() { return sum(mul(channel_max(x), channel_max(x))); }, {x}));
      check("channel_mean", seed,
            test::gradcheck([&]() { return sum(mul(channel_mean(x), channel_mean(x))); }, {x}));
      Tensor<double> g = test::random_tensor({2, 1, 3, 3}, rng);
      check("scale_map", seed,
            test::gradcheck([&]() { return sum(mul(scale_map(x, g), scale_map(x, g))); }, {x, g}));
    }
  }

  // Composite blocks. Step 1e-5 on the 64-bit engine: training-mode batch
  // norm gives these graphs third derivatives around 1e6, so the 1e-3
  // primitive step would leave pure truncation error above the tolerance;
  // the analytic gradients converge to the finite differences as the step
  // shrinks. Parameters are reinitialized to O(1) values so every component
  // is resolvable against the 1e-8 denominator clamp.
  auto leaves_of = [](ParamList<double>& params, std::initializer_list<Tensor<double>> extra) {
    std::vector<Tensor<double>> leaves(extra);
    for (NamedTensor<double>& nt : params) {
      if (nt.trainable) leaves.push_back(nt.tensor);
    }
    return leaves;
  };

  for (uint64_t seed : {70u, 71u, 72u, 73u, 77u}) {
    Rng rng(seed);
    LgsfBlock<double> block(3, rng);
    ParamList<double> params;
    block.collect("b", params);
    test::randomize_params(params, rng);
    Tensor<double> f = test::random_tensor({1, 3, 5, 5}, rng);
    auto leaves = leaves_of(params, {f});
    check("lgsf_local", seed, test::gradcheck(
                                  [&]() {
                                    Tensor<double> y = block.local(f, true);
                                    return sum(mul(y, y));
                                  },
                                  leaves, 1e-5));
    check("lgsf_global", seed, test::gradcheck(
                                   [&]() {
                                     Tensor<double> y = block.global(f);
                                     return sum(mul(y, y));
                                   },
                                   leaves, 1e-5));
  }
  for (uint64_t seed : {72u, 74u, 78u, 82u, 88u}) {
    Rng rng(seed);
    Msfa<double> msfa(3, 4, 5, rng);
    ParamList<double> params;
    msfa.collect("m", params);
    test::randomize_params(params, rng);
    Tensor<double> f2 = test::random_tensor({1, 3, 4, 4}, rng);
    Tensor<double> f3 = test::random_tensor({1, 4, 2, 2}, rng);
    Tensor<double> f4 = test::random_tensor({1, 5, 1, 1}, rng);
    auto leaves = leaves_of(params, {f2, f3, f4});
    check("msfa", seed, test::gradcheck(
                            [&]() {
                              Tensor<double> y = msfa.forward(f2, f3, f4, true);
                              return sum(mul(y, y));
                            },
                            leaves, 1e-5));
  }
  for (uint64_t seed : {70u, 71u, 72u, 74u, 75u}) {
    Rng rng(seed);
    CrossLayerAttention<double> ca(3, rng);
    ParamList<double> params;
    ca.collect("ca", params);
    test::randomize_params(params, rng);
    Tensor<double> f1 = test::random_tensor({1, 3, 4, 4}, rng);
    Tensor<double> m = Tensor<double>::full({1, 1, 2, 2}, 0.6);
    Tensor<double> mask = Tensor<double>::from({1, 1, 2, 2}, {1, 0, 1, 0});
    auto leaves = leaves_of(params, {f1});
    check("cross_layer_attention", seed, test::gradcheck(
                                             [&]() {
                                               Tensor<double> y = ca.forward(f1, m, mask);
                                               return sum(mul(y, y));
                                             },
                                             leaves, 1e-5));

    Rng rng2(seed);
    AttentionGate<double> ag(2, 3, rng2);
    ParamList<double> agp;
    ag.collect("ag", agp);
    test::randomize_params(agp, rng2);
    Tensor<double> gating = test::random_tensor({1, 2, 2, 2}, rng2);
    Tensor<double> skip = test::random_tensor({1, 3, 4, 4}, rng2);
    auto ag_leaves = leaves_of(agp, {gating, skip});
    check("attention_gate", seed, test::gradcheck(
                                      [&]() {
                                        Tensor<double> y = ag.forward(gating, skip);
                                        return sum(mul(y, y));
                                      },
                                      ag_leaves, 1e-5));

    Rng rng3(seed);
    Tensor<double> pred = test::random_tensor({1, 1, 8, 8}, rng3, 0.05, 0.95);
    Tensor<double> gt = Tensor<double>::zeros({1, 1, 8, 8});
    for (int64_t i = 0; i < 64; ++i) gt.data()[i] = rng3.uniform() < 0.4 ? 1.0 : 0.0;
    check("weighted_bce_dice", seed,
          test::gradcheck([&]() { return weighted_bce_dice(pred, gt); }, {pred}, 1e-5));
  }

  const double elapsed = seconds_since(t0);
  out.require(elapsed < 120.0, "suite took " + std::to_string(elapsed) + " s");
  if (out.pass) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f s", elapsed);
    out.detail = buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// 3. Dilated convolution vs the nested-loop oracle, >= 200 randomized cases.
// ---------------------------------------------------------------------------
Tensor<double> conv2d_oracle(const Tensor<double>& input, const Tensor<double>& weight, int64_t stride,
                             int64_t padding, int64_t dilation) {
  const int64_t n = input.extent(0), ic = input.extent(1), h = input.extent(2), w = input.extent(3);
  const int64_t oc = weight.extent(0), kh = weight.extent(2), kw = weight.extent(3);
  const int64_t oh = (h + 2 * padding - dilation * (kh - 1) - 1) / stride + 1;
  const int64_t ow = (w + 2 * padding - dilation * (kw - 1) - 1) / stride + 1;
  Tensor<double> out = Tensor<double>::zeros({n, oc, oh, ow});
  for (int64_t b = 0; b < n; ++b)
    for (int64_t o = 0; o < oc; ++o)
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (int64_t c = 0; c < ic; ++c)
            for (int64_t ky = 0; ky < kh; ++ky)
              for (int64_t kx = 0; kx < kw; ++kx) {
                const int64_t iy = oy * stride - padding + ky * dilation;
                const int64_t ix = ox * stride - padding + kx * dilation;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += input.data()[((b * ic + c) * h + iy) * w + ix] *
                       weight.data()[((o * ic + c) * kh + ky) * kw + kx];
              }
          out.data()[((b * oc + o) * oh + oy) * ow + ox] = acc;
        }
  return out;
}

Outcome criterion3() {
  Outcome out;
  Rng rng(4242);
  int64_t cases = 0;
  for (int64_t dilation : {1, 2, 4, 8}) {
    for (int64_t stride : {1, 2}) {
      for (int64_t padding : {0, 1, 2, 3, 4}) {
        const int64_t k = 3, h = 9, w = 9;
        if (h + 2 * padding - dilation * (k - 1) - 1 < 0) continue;
        for (int rep = 0; rep < 7; ++rep) {
          Tensor<double> x = test::random_tensor({2, 4, h, w}, rng);
          Tensor<double> wt = test::random_tensor({3, 4, k, k}, rng);
          Tensor<double> got = conv2d(x, wt, Tensor<double>(), stride, padding, dilation);
          Tensor<double> want = conv2d_oracle(x, wt, stride, padding, dilation);
          out.require(same_shape(got.shape(), want.shape()), "oracle shape mismatch");
          for (int64_t i = 0; i < got.numel(); ++i) {
            if (std::abs(got.data()[i] - want.data()[i]) > 1e-6) {
              out.require(false, "value mismatch at dilation " + std::to_string(dilation));
              break;
            }
          }
          ++cases;
        }
      }
    }
  }
  out.require(cases >= 200, "only " + std::to_string(cases) + " cases");
  if (out.pass) out.detail = std::to_string(cases) + " cases";
  return out;
}

// ---------------------------------------------------------------------------
// 4. Metric identities and hand-computed examples.
// ---------------------------------------------------------------------------
Outcome criterion4() {
  Outcome out;
  Tensor<float> a = Tensor<float>::from({2, 2}, {1, 1, 0, 0});
  Tensor<float> b = Tensor<float>::from({2, 2}, {1, 0, 0, 0});
  out.require(std::abs(dice(a, b) - 2.0 / 3.0) < 1e-6, "hand dice");
  out.require(std::abs(iou(a, b) - 0.5) < 1e-6, "hand iou");
  out.require(std::abs(mae(Tensor<float>::from({2}, {0.2f, 0.9f}), Tensor<float>::from({2}, {0, 1})) -
                       0.15) < 1e-6,
              "hand mae");

  Rng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    Tensor<float> p = Tensor<float>::zeros({30});
    Tensor<float> g = Tensor<float>::zeros({30});
    for (int64_t i = 0; i < 30; ++i) {
      p.data()[i] = rng.uniform() < 0.45 ? 1.0f : 0.0f;
      g.data()[i] = rng.uniform() < 0.45 ? 1.0f : 0.0f;
    }
    const double d = dice(p, g);
    const double j = iou(p, g);
    out.require(std::abs(d - 2.0 * j / (1.0 + j)) <= 1e-12, "identity dice = 2iou/(1+iou)");
    out.require(d >= j, "dice >= iou");
  }
  if (out.pass) out.detail = "identity on 300 random pairs";
  return out;
}

// ---------------------------------------------------------------------------
// 5. Overfit smoke test: 4 synthetic pairs, 200 steps, mDice > 0.95; the
//    double-ablated model still exceeds 0.90.
// ---------------------------------------------------------------------------
double overfit_run(bool use_ses, bool use_lgsf, double* elapsed) {
  Dataset ds = test::synthetic_rect_dataset(4, 64, 91);
  ModelConfig mcfg = desk_model_config();
  mcfg.use_ses = use_ses;
  mcfg.use_lgsf = use_lgsf;
  PolypSesModel<float> model(mcfg, 7);

  TrainConfig tcfg;
  tcfg.image_h = 64;
  tcfg.image_w = 64;
  tcfg.batch_size = 4;  // full batch: one step per epoch, 200 steps total
  tcfg.epochs = 200;
  tcfg.base_lr = 3e-3;
  tcfg.decay_epoch = 1000;
  tcfg.seed = 7;
  Trainer trainer(model, ds, tcfg);
  const auto t0 = std::chrono::steady_clock::now();
  trainer.fit();
  if (elapsed) *elapsed = seconds_since(t0);
  return trainer.history().back().mdice;
}

Outcome criterion5() {
  Outcome out;
  double elapsed = 0;
  const double full = overfit_run(true, true, &elapsed);
  out.require(full > 0.95, "full model mDice " + std::to_string(full));
  out.require(elapsed < 300.0, "run took " + std::to_string(elapsed) + " s");
  const double ablated = overfit_run(false, false, nullptr);
  out.require(ablated > 0.90, "ablated mDice " + std::to_string(ablated));
  char buf[96];
  std::snprintf(buf, sizeof(buf), "mDice %.3f (full, %.0f s), %.3f (w/o SES+LGSF)", full, elapsed, ablated);
  if (out.pass) out.detail = buf;
  return out;
}

// ---------------------------------------------------------------------------
// 6. Partition properties on 1,000 random maps.
// ---------------------------------------------------------------------------
Outcome criterion6() {
  Outcome out;
  Rng rng(123);
  for (int trial = 0; trial < 1000; ++trial) {
    const int64_t h = trial % 2 == 0 ? 8 : 16;
    Tensor<float> m = Tensor<float>::zeros({1, 1, h, h});
    for (int64_t i = 0; i < m.numel(); ++i) m.data()[i] = static_cast<float>(rng.uniform());
    SemanticPartition<float> p = partition_semantics(m, 4, 0.1, 0.8);
    SemanticPartition<float> q = partition_semantics(m, 4, 0.1, 0.8);
    for (int64_t i = 0; i < m.numel(); ++i) {
      out.require(p.s1_mask.data()[i] * p.s2_mask.data()[i] == 0.0f, "disjointness");
      out.require(p.s1_mask.data()[i] == q.s1_mask.data()[i] && p.s2_mask.data()[i] == q.s2_mask.data()[i],
                  "idempotence");
    }
    const int64_t cells = (h / 4) * (h / 4);
    const int64_t cell = static_cast<int64_t>(rng.below(static_cast<uint64_t>(cells)));
    const int64_t gy = cell / (h / 4), gx = cell % (h / 4);
    Tensor<float> raised = m.clone_values();
    for (int64_t py = 0; py < 4; ++py) {
      for (int64_t px = 0; px < 4; ++px) {
        float& v = raised.data()[(gy * 4 + py) * h + gx * 4 + px];
        v = std::min(1.0f, v + static_cast<float>(rng.uniform(0.0, 0.6)));
      }
    }
    SemanticPartition<float> r = partition_semantics(raised, 4, 0.1, 0.8);
    out.require(static_cast<int>(r.patch_grid[cell]) >= static_cast<int>(p.patch_grid[cell]),
                "monotonicity");
    if (!out.pass) return out;
  }

  // Empty-region fallback stays finite.
  Rng rng2(5);
  CrossLayerAttention<float> ca(4, rng2);
  Tensor<float> f1 = test::random_tensor_f({1, 4, 8, 8}, rng2);
  Tensor<float> m = Tensor<float>::zeros({1, 1, 4, 4});
  Tensor<float> zero_out = ca.forward(f1, m, m);
  for (int64_t i = 0; i < zero_out.numel(); ++i) {
    out.require(std::isfinite(zero_out.data()[i]) && zero_out.data()[i] == 0.0f, "empty-region fallback");
  }
  if (out.pass) out.detail = "1000 maps";
  return out;
}

// ---------------------------------------------------------------------------
// 7. Determinism and persistence.
// ---------------------------------------------------------------------------
Outcome criterion7(const std::string& cli) {
  Outcome out;
  Dataset ds = test::synthetic_rect_dataset(4, 32, 55);
  TrainConfig cfg;
  cfg.image_h = 32;
  cfg.image_w = 32;
  cfg.batch_size = 2;  // two steps per epoch
  cfg.epochs = 5;      // ten steps
  cfg.base_lr = 1e-3;
  cfg.decay_epoch = 1000;
  cfg.seed = 9;

  // (a) Two fixed-seed runs are bit-identical for 10 steps.
  std::vector<float> losses[2];
  for (int run = 0; run < 2; ++run) {
    PolypSesModel<float> model(tiny_model_config(), 13);
    Trainer trainer(model, ds, cfg);
    trainer.fit();
    losses[run] = trainer.step_losses();
  }
  out.require(losses[0].size() == 10 && losses[0] == losses[1], "10-step rerun not bit-identical");

  // (b) Checkpoint save/load mid-run continues bit-identically for 3 steps.
  const fs::path dir = fs::temp_directory_path() / "pses_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string ckpt = (dir / "mid.pses").string();
  {
    PolypSesModel<float> model(tiny_model_config(), 13);
    Trainer trainer(model, ds, cfg);
    trainer.run_epoch();
    trainer.run_epoch();
    trainer.save(ckpt);
  }
  {
    PolypSesModel<float> model(tiny_model_config(), 131313);
    Trainer trainer(model, ds, cfg);
    trainer.load(ckpt);
    trainer.run_epoch();
    trainer.run_epoch();  // steps 5..8 of the reference run
    const std::vector<float>& resumed = trainer.step_losses();
    for (size_t i = 0; i < 3; ++i) {
      out.require(resumed[i] == losses[0][4 + i], "resume diverged at step " + std::to_string(i));
    }
  }

  // (c) CLI artifacts are byte-stable across reruns.
  const fs::path data = dir / "data";
  fs::create_directories(data / "images");
  fs::create_directories(data / "masks");
  for (const SegSample& s : ds.samples) {
    Tensor<float> gray = Tensor<float>::zeros({1, 1, 32, 32});
    for (int64_t i = 0; i < 32 * 32; ++i) gray.data()[i] = s.image.data()[i];
    save_gray_png((data / "images" / (s.id + ".png")).string(), gray);
    save_gray_png((data / "masks" / (s.id + ".png")).string(), s.mask);
  }
  const fs::path config = dir / "config.json";
  {
    std::ofstream os(config);
    os << R"({"model": {"input_size": [32, 32], "stage_channels": [4, 8, 12, 16]},)"
       << R"( "train": {"batch_size": 2, "epochs": 2, "base_lr": 0.001, "seed": 9}})";
  }
  auto file_bytes = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::vector<char>{std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
  };
  auto run = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " >/dev/null 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
  };
  for (const char* name : {"t1", "t2"}) {
    out.require(run("train --config " + config.string() + " --data " + data.string() + " --out " +
                    (dir / name).string()) == 0,
                "cli train failed");
  }
  out.require(file_bytes(dir / "t1" / "checkpoint_final.pses") ==
                  file_bytes(dir / "t2" / "checkpoint_final.pses"),
              "cli checkpoints differ");
  out.require(file_bytes(dir / "t1" / "metrics.csv") == file_bytes(dir / "t2" / "metrics.csv"),
              "cli metrics differ");
  for (const char* name : {"i1.png", "i2.png"}) {
    out.require(run("infer --config " + config.string() + " --checkpoint " +
                    (dir / "t1" / "checkpoint_final.pses").string() + " --image " +
                    (data / "images" / "img0.png").string() + " --out " + (dir / name).string()) == 0,
                "cli infer failed");
  }
  out.require(file_bytes(dir / "i1.png") == file_bytes(dir / "i2.png"), "cli masks differ");
  fs::remove_all(dir);
  if (out.pass) out.detail = "train/resume/CLI byte-stable";
  return out;
}

// ---------------------------------------------------------------------------
// 8. Loss against the independent scalar reference, 100 random instances.
// ---------------------------------------------------------------------------
Outcome criterion8() {
  Outcome out;
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor<double> pred = test::random_tensor({1, 1, 8, 8}, rng, 0.01, 0.99);
    Tensor<double> gt = Tensor<double>::zeros({1, 1, 8, 8});
    for (int64_t i = 0; i < 64; ++i) gt.data()[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;

    std::vector<double> p(pred.data(), pred.data() + 64);
    std::vector<double> g(gt.data(), gt.data() + 64);
    const double want = test::weighted_bce_dice_reference(p, g, 8, 8, 31, 5.0);

    const double got = weighted_bce_dice(pred, gt).item();
    out.require(std::abs(got - want) < 1e-5, "double engine off by " + std::to_string(got - want));

    Tensor<float> predf = Tensor<float>::zeros({1, 1, 8, 8});
    Tensor<float> gtf = Tensor<float>::zeros({1, 1, 8, 8});
    for (int64_t i = 0; i < 64; ++i) {
      predf.data()[i] = static_cast<float>(pred.data()[i]);
      gtf.data()[i] = static_cast<float>(gt.data()[i]);
    }
    const double gotf = weighted_bce_dice(predf, gtf).item();
    out.require(std::abs(gotf - want) < 1e-5 * std::max(1.0, std::abs(want)),
                "float engine off by " + std::to_string(gotf - want));
  }
  if (out.pass) out.detail = "100 instances";
  return out;
}

}  // namespace

int main() {
  struct Entry {
    const char* name;
    std::function<Outcome()> fn;
  };
#ifdef PSES_CLI_PATH
  const std::string cli = PSES_CLI_PATH;
#else
  const std::string cli;
#endif
  const Entry entries[] = {
      {"shape contract (352x352 forward < 10 s)", criterion1},
      {"autodiff correctness (primitives + composites, 5 seeds)", criterion2},
      {"convolution oracle (randomized sweep)", criterion3},
      {"metric identities and hand examples", criterion4},
      {"overfit smoke test (200 steps, full and ablated)", criterion5},
      {"semantic partition properties (1000 maps)", criterion6},
      {"determinism and persistence", [&]() { return criterion7(cli); }},
      {"loss oracle (100 instances)", criterion8},
  };

  int failures = 0;
  int id = 1;
  for (const Entry& e : entries) {
    Outcome out;
    try {
      out = e.fn();
    } catch (const std::exception& ex) {
      out.pass = false;
      out.detail = std::string("exception: ") + ex.what();
    }
    std::printf("[%s] %d. %s%s%s\n", out.pass ? "PASS" : "FAIL", id, e.name,
                out.detail.empty() ? "" : " — ", out.detail.c_str());
    std::fflush(stdout);
    failures += out.pass ? 0 : 1;
    ++id;
  }
  return failures;
}
