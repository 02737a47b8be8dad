#include "pses/decoder.hpp"

namespace pses {

template <typename S>
LgsfBlock<S>::LgsfBlock(int64_t channels, Rng& rng) {
  const int64_t rates[4] = {1, 2, 4, 8};
  for (int i = 0; i < 4; ++i) {
    dilated[i] = Conv2dLayer<S>(channels, channels, 3, 1, rates[i], rates[i], false, rng);
    dilated_bn[i] = BatchNorm2dLayer<S>(channels);
  }
  reduce = Conv2dLayer<S>(4 * channels, channels, 1, 1, 0, 1, true, rng);
  sa_conv = Conv2dLayer<S>(2, 1, 7, 1, 3, 1, true, rng);
  global_proj = Conv2dLayer<S>(channels, channels, 1, 1, 0, 1, true, rng);
  mlp_fc1 = LinearLayer<S>(channels, channels, true, rng);
  mlp_fc2 = LinearLayer<S>(channels, channels, true, rng);
  fuse = Conv2dLayer<S>(channels, channels, 3, 1, 1, 1, true, rng);
}

template <typename S>
Tensor<S> LgsfBlock<S>::local(const Tensor<S>& f, bool training) const {
  std::vector<Tensor<S>> branches;
  branches.reserve(4);
  for (int i = 0; i < 4; ++i) {
    branches.push_back(relu(dilated_bn[i].forward(dilated[i].forward(f), training)));
  }
  Tensor<S> merged = reduce.forward(concat(std::span<const Tensor<S>>(branches.data(), 4), 1));
  Tensor<S> pooled = concat({channel_max(merged), channel_mean(merged)}, 1);
  Tensor<S> attention = sigmoid(sa_conv.forward(pooled));
  return scale_map(merged, attention);
}

template <typename S>
Tensor<S> LgsfBlock<S>::global(const Tensor<S>& f) const {
  const int64_t n = f.extent(0), c = f.extent(1), h = f.extent(2), w = f.extent(3);
  const int64_t hw = h * w;
  // Pixel-relationship context: softmax over the flattened spatial axis.
  Tensor<S> proj = reshape(global_proj.forward(f), {n, c, hw});
  Tensor<S> weights = transpose_last2(softmax(transpose_last2(proj), 1));  // [N, C, hw]
  Tensor<S> context = mul(reshape(f, {n, c, hw}), weights);
  Tensor<S> tokens = transpose_last2(context);  // [N, hw, C]
  Tensor<S> gate = sigmoid(mlp_fc2.forward(relu(mlp_fc1.forward(tokens))));
  return mul(f, reshape(transpose_last2(gate), {n, c, h, w}));
}

template <typename S>
Tensor<S> LgsfBlock<S>::forward(const Tensor<S>& f, bool training) const {
  return fuse.forward(add(local(f, training), global(f)));
}

template <typename S>
void LgsfBlock<S>::collect(const std::string& prefix, ParamList<S>& out) const {
  for (int i = 0; i < 4; ++i) {
    const std::string bp = prefix + ".branch" + std::to_string(i + 1);
    dilated[i].collect(bp + ".conv", out);
    dilated_bn[i].collect(bp + ".bn", out);
  }
  reduce.collect(prefix + ".reduce", out);
  sa_conv.collect(prefix + ".sa", out);
  global_proj.collect(prefix + ".global_proj", out);
  mlp_fc1.collect(prefix + ".mlp.fc1", out);
  mlp_fc2.collect(prefix + ".mlp.fc2", out);
  fuse.collect(prefix + ".fuse", out);
}

template <typename S>
Msfa<S>::Msfa(int64_t c2, int64_t c3, int64_t c4, Rng& rng) {
  const int64_t hidden = c2;
  conv1 = Conv2dLayer<S>(c2 + c3 + c4, hidden, 1, 1, 0, 1, false, rng);
  bn1 = BatchNorm2dLayer<S>(hidden);
  conv2 = Conv2dLayer<S>(hidden, hidden, 3, 1, 1, 1, false, rng);
  bn2 = BatchNorm2dLayer<S>(hidden);
  head = Conv2dLayer<S>(hidden, 1, 1, 1, 0, 1, true, rng);
}

template <typename S>
Tensor<S> Msfa<S>::forward(const Tensor<S>& f2, const Tensor<S>& f3, const Tensor<S>& f4,
                           bool training) const {
  const int64_t h = f2.extent(2), w = f2.extent(3);
  if (f3.extent(2) * 2 != h || f3.extent(3) * 2 != w || f4.extent(2) * 4 != h || f4.extent(3) * 4 != w) {
    throw ShapeError("msfa inputs must have spatial extents at exact /1, /2, /4 ratios, got " +
                     shape_str(f2.shape()) + ", " + shape_str(f3.shape()) + ", " + shape_str(f4.shape()));
  }
  Tensor<S> merged = concat({f2, bilinear_resize(f3, h, w), bilinear_resize(f4, h, w)}, 1);
  Tensor<S> x = relu(bn1.forward(conv1.forward(merged), training));
  x = relu(bn2.forward(conv2.forward(x), training));
  return sigmoid(head.forward(x));
}

template <typename S>
void Msfa<S>::collect(const std::string& prefix, ParamList<S>& out) const {
  conv1.collect(prefix + ".conv1", out);
  bn1.collect(prefix + ".bn1", out);
  conv2.collect(prefix + ".conv2", out);
  bn2.collect(prefix + ".bn2", out);
  head.collect(prefix + ".head", out);
}

template <typename S>
Decoder<S>::Decoder(const std::array<int64_t, 4>& stage_channels, bool use_lgsf, Rng& rng)
    : use_lgsf_(use_lgsf) {
  for (int i = 0; i < 3; ++i) {
    const int64_t c = stage_channels[static_cast<size_t>(i + 1)];
    if (use_lgsf_) {
      lgsf_[i] = LgsfBlock<S>(c, rng);
    } else {
      plain_[i] = Conv2dLayer<S>(c, c, 3, 1, 1, 1, true, rng);
    }
  }
  msfa_ = Msfa<S>(stage_channels[1], stage_channels[2], stage_channels[3], rng);
}

template <typename S>
Tensor<S> Decoder<S>::refine(int level, const Tensor<S>& f, bool training) const {
  const int idx = level - 2;
  if (idx < 0 || idx > 2) throw ContractError("decoder refine level must be 2, 3 or 4");
  return use_lgsf_ ? lgsf_[idx].forward(f, training) : plain_[idx].forward(f);
}

template <typename S>
Tensor<S> Decoder<S>::decode_initial(const FeaturePyramid<S>& pyramid, bool training) const {
  // F1 is reserved for the semantic-enrichment stage.
  return msfa_.forward(refine(2, pyramid.f2, training), refine(3, pyramid.f3, training),
                       refine(4, pyramid.f4, training), training);
}

template <typename S>
void Decoder<S>::collect(ParamList<S>& out) const {
  for (int i = 0; i < 3; ++i) {
    const std::string lp = std::to_string(i + 2);
    if (use_lgsf_) {
      lgsf_[i].collect("decoder.lgsf" + lp, out);
    } else {
      plain_[i].collect("decoder.conv" + lp, out);
    }
  }
  msfa_.collect("decoder.msfa", out);
}

#define PSES_INSTANTIATE_DECODER(S) \
  template struct LgsfBlock<S>;     \
  template struct Msfa<S>;          \
  template class Decoder<S>;

PSES_INSTANTIATE_DECODER(float)
PSES_INSTANTIATE_DECODER(double)

}  // namespace pses
