#include "pses/encoder.hpp"

#include <cmath>

namespace pses {

void EncoderConfig::validate() const {
  if (input_h < 32 || input_w < 32 || input_h % 32 != 0 || input_w % 32 != 0) {
    throw ConfigError("encoder input size must be divisible by 32, got " + std::to_string(input_h) + "x" +
                      std::to_string(input_w));
  }
  for (int i = 0; i < 4; ++i) {
    if (stage_channels[i] < 1) throw ConfigError("stage channels must be positive");
    if (i > 0 && stage_channels[i] <= stage_channels[i - 1]) {
      throw ConfigError("stage channels must be strictly increasing");
    }
    if (blocks_per_stage[i] < 1) throw ConfigError("blocks per stage must be positive");
    if (mixers[i] == MixerKind::Attention && stage_channels[i] % attention_heads != 0) {
      throw ConfigError("attention stage channels must be divisible by the head count");
    }
  }
  if (attention_heads < 1) throw ConfigError("attention head count must be positive");
}

template <typename S>
Encoder<S>::Encoder(const EncoderConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  int64_t in_c = 3;
  for (int i = 0; i < 4; ++i) {
    const int64_t c = config_.stage_channels[i];
    Stage& st = stages_[i];
    if (i == 0) {
      st.stem = Conv2dLayer<S>(in_c, c, 7, 4, 2, 1, true, rng);
    } else {
      st.stem = Conv2dLayer<S>(in_c, c, 3, 2, 1, 1, true, rng);
    }
    st.stem_norm = LayerNormChwLayer<S>(c);
    st.blocks.resize(static_cast<size_t>(config_.blocks_per_stage[i]));
    for (Block& b : st.blocks) {
      b.norm1 = LayerNormChwLayer<S>(c);
      b.norm2 = LayerNormChwLayer<S>(c);
      b.kind = config_.mixers[i];
      if (b.kind == MixerKind::Conv) {
        b.conv_mixer.expand = Conv2dLayer<S>(c, 2 * c, 1, 1, 0, 1, true, rng);
        b.conv_mixer.depth = DepthwiseConv2dLayer<S>(2 * c, 7, 1, 3, true, rng);
        b.conv_mixer.project = Conv2dLayer<S>(2 * c, c, 1, 1, 0, 1, true, rng);
      } else {
        b.attn_mixer.wq = LinearLayer<S>(c, c, true, rng);
        b.attn_mixer.wk = LinearLayer<S>(c, c, true, rng);
        b.attn_mixer.wv = LinearLayer<S>(c, c, true, rng);
        b.attn_mixer.wo = LinearLayer<S>(c, c, true, rng);
        b.attn_mixer.heads = config_.attention_heads;
      }
      b.mlp1 = Conv2dLayer<S>(c, 4 * c, 1, 1, 0, 1, true, rng);
      b.mlp2 = Conv2dLayer<S>(4 * c, c, 1, 1, 0, 1, true, rng);
    }
    in_c = c;
  }
}

template <typename S>
Tensor<S> Encoder<S>::run_block(const Block& b, const Tensor<S>& x, bool training) const {
  (void)training;
  Tensor<S> t = b.norm1.forward(x);
  Tensor<S> mixed;
  if (b.kind == MixerKind::Conv) {
    mixed = b.conv_mixer.project.forward(
        b.conv_mixer.depth.forward(relu(b.conv_mixer.expand.forward(t))));
  } else {
    const int64_t n = t.extent(0), c = t.extent(1), h = t.extent(2), w = t.extent(3);
    const int64_t hw = h * w;
    Tensor<S> tokens = transpose_last2(reshape(t, {n, c, hw}));  // [N, hw, C]
    Tensor<S> q = b.attn_mixer.wq.forward(tokens);
    Tensor<S> k = b.attn_mixer.wk.forward(tokens);
    Tensor<S> v = b.attn_mixer.wv.forward(tokens);
    const int64_t heads = b.attn_mixer.heads;
    const int64_t dh = c / heads;
    const S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
    std::vector<Tensor<S>> head_outs;
    head_outs.reserve(static_cast<size_t>(heads));
    for (int64_t hd = 0; hd < heads; ++hd) {
      Tensor<S> qh = slice(q, 2, hd * dh, dh);
      Tensor<S> kh = slice(k, 2, hd * dh, dh);
      Tensor<S> vh = slice(v, 2, hd * dh, dh);
      Tensor<S> att = softmax(scale(matmul(qh, transpose_last2(kh)), inv_sqrt), 2);
      head_outs.push_back(matmul(att, vh));
    }
    Tensor<S> merged = concat(std::span<const Tensor<S>>(head_outs.data(), head_outs.size()), 2);
    mixed = reshape(transpose_last2(b.attn_mixer.wo.forward(merged)), {n, c, h, w});
  }
  Tensor<S> y = add(x, mixed);
  Tensor<S> m = b.mlp2.forward(relu(b.mlp1.forward(b.norm2.forward(y))));
  return add(y, m);
}

template <typename S>
FeaturePyramid<S> Encoder<S>::forward(const Tensor<S>& image, bool training) const {
  if (image.rank() != 4 || image.extent(1) != 3 || image.extent(2) != config_.input_h ||
      image.extent(3) != config_.input_w) {
    throw ShapeError("encoder expects N x 3 x " + std::to_string(config_.input_h) + " x " +
                     std::to_string(config_.input_w) + ", got " + shape_str(image.shape()));
  }
  FeaturePyramid<S> pyr;
  Tensor<S> x = image;
  for (int i = 0; i < 4; ++i) {
    const Stage& st = stages_[i];
    x = st.stem_norm.forward(st.stem.forward(x));
    for (const Block& b : st.blocks) x = run_block(b, x, training);
    switch (i) {
      case 0: pyr.f1 = x; break;
      case 1: pyr.f2 = x; break;
      case 2: pyr.f3 = x; break;
      default: pyr.f4 = x; break;
    }
  }
  return pyr;
}

template <typename S>
void Encoder<S>::collect(ParamList<S>& out) const {
  for (int i = 0; i < 4; ++i) {
    const Stage& st = stages_[i];
    const std::string sp = "encoder.stage" + std::to_string(i + 1);
    st.stem.collect(sp + ".stem.conv", out);
    st.stem_norm.collect(sp + ".stem.norm", out);
    for (size_t j = 0; j < st.blocks.size(); ++j) {
      const Block& b = st.blocks[j];
      const std::string bp = sp + ".block" + std::to_string(j + 1);
      b.norm1.collect(bp + ".norm1", out);
      if (b.kind == MixerKind::Conv) {
        b.conv_mixer.expand.collect(bp + ".mixer.expand", out);
        b.conv_mixer.depth.collect(bp + ".mixer.depth", out);
        b.conv_mixer.project.collect(bp + ".mixer.project", out);
      } else {
        b.attn_mixer.wq.collect(bp + ".mixer.wq", out);
        b.attn_mixer.wk.collect(bp + ".mixer.wk", out);
        b.attn_mixer.wv.collect(bp + ".mixer.wv", out);
        b.attn_mixer.wo.collect(bp + ".mixer.wo", out);
      }
      b.norm2.collect(bp + ".norm2", out);
      b.mlp1.collect(bp + ".mlp.fc1", out);
      b.mlp2.collect(bp + ".mlp.fc2", out);
    }
  }
}

template <typename S>
Encoder<S> build_encoder(const EncoderConfig& config, uint64_t seed) {
  Rng rng(seed);
  return Encoder<S>(config, rng);
}

template class Encoder<float>;
template class Encoder<double>;
template Encoder<float> build_encoder<float>(const EncoderConfig&, uint64_t);
template Encoder<double> build_encoder<double>(const EncoderConfig&, uint64_t);

}  // namespace pses
