#include "pses/nn.hpp"

namespace pses {

template <typename S>
Tensor<S> init_weight(Shape shape, Rng& rng, double stddev) {
  Tensor<S> t = Tensor<S>::zeros(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<S>(rng.trunc_normal(stddev));
  t.set_requires_grad(true);
  return t;
}

template <typename S>
Conv2dLayer<S>::Conv2dLayer(int64_t in_c, int64_t out_c, int64_t kernel, int64_t stride_, int64_t padding_,
                            int64_t dilation_, bool with_bias, Rng& rng)
    : weight(init_weight<S>({out_c, in_c, kernel, kernel}, rng)),
      stride(stride_),
      padding(padding_),
      dilation(dilation_) {
  if (with_bias) bias = Tensor<S>::zeros({out_c}).set_requires_grad(true);
}

template <typename S>
void Conv2dLayer<S>::collect(const std::string& prefix, ParamList<S>& out) const {
  out.push_back({prefix + ".weight", weight, true});
  if (bias.defined()) out.push_back({prefix + ".bias", bias, true});
}

template <typename S>
DepthwiseConv2dLayer<S>::DepthwiseConv2dLayer(int64_t channels, int64_t kernel, int64_t stride_,
                                              int64_t padding_, bool with_bias, Rng& rng)
    : weight(init_weight<S>({channels, 1, kernel, kernel}, rng)), stride(stride_), padding(padding_) {
  if (with_bias) bias = Tensor<S>::zeros({channels}).set_requires_grad(true);
}

template <typename S>
void DepthwiseConv2dLayer<S>::collect(const std::string& prefix, ParamList<S>& out) const {
  out.push_back({prefix + ".weight", weight, true});
  if (bias.defined()) out.push_back({prefix + ".bias", bias, true});
}

template <typename S>
LinearLayer<S>::LinearLayer(int64_t in, int64_t out, bool with_bias, Rng& rng)
    : weight(init_weight<S>({in, out}, rng)) {
  if (with_bias) bias = Tensor<S>::zeros({out}).set_requires_grad(true);
}

template <typename S>
void LinearLayer<S>::collect(const std::string& prefix, ParamList<S>& out) const {
  out.push_back({prefix + ".weight", weight, true});
  if (bias.defined()) out.push_back({prefix + ".bias", bias, true});
}

template <typename S>
BatchNorm2dLayer<S>::BatchNorm2dLayer(int64_t channels)
    : gamma(Tensor<S>::full({channels}, S(1)).set_requires_grad(true)),
      beta(Tensor<S>::zeros({channels}).set_requires_grad(true)),
      running_mean(Tensor<S>::zeros({channels})),
      running_var(Tensor<S>::full({channels}, S(1))) {}

template <typename S>
void BatchNorm2dLayer<S>::collect(const std::string& prefix, ParamList<S>& out) const {
  out.push_back({prefix + ".gamma", gamma, true});
  out.push_back({prefix + ".beta", beta, true});
  out.push_back({prefix + ".running_mean", running_mean, false});
  out.push_back({prefix + ".running_var", running_var, false});
}

template <typename S>
LayerNormChwLayer<S>::LayerNormChwLayer(int64_t channels)
    : gamma(Tensor<S>::full({channels}, S(1)).set_requires_grad(true)),
      beta(Tensor<S>::zeros({channels}).set_requires_grad(true)) {}

template <typename S>
void LayerNormChwLayer<S>::collect(const std::string& prefix, ParamList<S>& out) const {
  out.push_back({prefix + ".gamma", gamma, true});
  out.push_back({prefix + ".beta", beta, true});
}

#define PSES_INSTANTIATE_NN(S)                              \
  template Tensor<S> init_weight<S>(Shape, Rng&, double);   \
  template struct Conv2dLayer<S>;                           \
  template struct DepthwiseConv2dLayer<S>;                  \
  template struct LinearLayer<S>;                           \
  template struct BatchNorm2dLayer<S>;                      \
  template struct LayerNormChwLayer<S>;

PSES_INSTANTIATE_NN(float)
PSES_INSTANTIATE_NN(double)

}  // namespace pses
