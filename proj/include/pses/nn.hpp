#pragma once

#include <string>
#include <vector>

#include "pses/ops.hpp"
#include "pses/rng.hpp"
#include "pses/tensor.hpp"

namespace pses {

template <typename S>
struct NamedTensor {
  std::string name;
  Tensor<S> tensor;
  bool trainable = true;
};

template <typename S>
using ParamList = std::vector<NamedTensor<S>>;

/// Truncated-normal(std 0.02) weights, zero biases.
template <typename S>
Tensor<S> init_weight(Shape shape, Rng& rng, double stddev = 0.02);

template <typename S>
struct Conv2dLayer {
  Tensor<S> weight;  // OIKK
  Tensor<S> bias;    // undefined when constructed without bias
  int64_t stride = 1, padding = 0, dilation = 1;

  Conv2dLayer() = default;
  Conv2dLayer(int64_t in_c, int64_t out_c, int64_t kernel, int64_t stride, int64_t padding,
              int64_t dilation, bool with_bias, Rng& rng);

  Tensor<S> forward(const Tensor<S>& x) const { return conv2d(x, weight, bias, stride, padding, dilation); }
  void collect(const std::string& prefix, ParamList<S>& out) const;
};

template <typename S>
struct DepthwiseConv2dLayer {
  Tensor<S> weight;  // [C,1,K,K]
  Tensor<S> bias;
  int64_t stride = 1, padding = 0;

  DepthwiseConv2dLayer() = default;
  DepthwiseConv2dLayer(int64_t channels, int64_t kernel, int64_t stride, int64_t padding, bool with_bias,
                       Rng& rng);

  Tensor<S> forward(const Tensor<S>& x) const { return depthwise_conv2d(x, weight, bias, stride, padding); }
  void collect(const std::string& prefix, ParamList<S>& out) const;
};

template <typename S>
struct LinearLayer {
  Tensor<S> weight;  // [in, out]
  Tensor<S> bias;

  LinearLayer() = default;
  LinearLayer(int64_t in, int64_t out, bool with_bias, Rng& rng);

  Tensor<S> forward(const Tensor<S>& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, ParamList<S>& out) const;
};

/// Batch normalization layer. Training-mode forward updates the running
/// statistics in place.
template <typename S>
struct BatchNorm2dLayer {
  Tensor<S> gamma, beta;
  mutable Tensor<S> running_mean, running_var;
  double momentum = 0.1, eps = 1e-5;

  BatchNorm2dLayer() = default;
  explicit BatchNorm2dLayer(int64_t channels);

  Tensor<S> forward(const Tensor<S>& x, bool training) const {
    return batch_norm(x, gamma, beta, running_mean, running_var, training, momentum, eps);
  }
  void collect(const std::string& prefix, ParamList<S>& out) const;
};

template <typename S>
struct LayerNormChwLayer {
  Tensor<S> gamma, beta;
  double eps = 1e-5;

  LayerNormChwLayer() = default;
  explicit LayerNormChwLayer(int64_t channels);

  Tensor<S> forward(const Tensor<S>& x) const { return layer_norm_chw(x, gamma, beta, eps); }
  void collect(const std::string& prefix, ParamList<S>& out) const;
};

}  // namespace pses
