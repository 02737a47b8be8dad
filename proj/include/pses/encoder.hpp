#pragma once

#include <array>
#include <cstdint>
#include <memory>

#include "pses/nn.hpp"

namespace pses {

enum class MixerKind { Conv, Attention };

/// Four-stage hierarchical backbone configuration. Stage i downsamples the
/// input by 2^(i+1), so H and W must be divisible by 32.
struct EncoderConfig {
  int64_t input_h = 352;
  int64_t input_w = 352;
  std::array<int64_t, 4> stage_channels{64, 128, 320, 512};
  std::array<int64_t, 4> blocks_per_stage{1, 1, 1, 1};
  std::array<MixerKind, 4> mixers{MixerKind::Conv, MixerKind::Conv, MixerKind::Attention,
                                  MixerKind::Attention};
  int64_t attention_heads = 2;

  void validate() const;
};

/// The four feature levels; f1 is the highest-resolution map, level i has
/// shape N x C_i x H/2^(i+1) x W/2^(i+1).
template <typename S>
struct FeaturePyramid {
  Tensor<S> f1, f2, f3, f4;
};

template <typename S>
class Encoder {
 public:
  Encoder(const EncoderConfig& config, Rng& rng);

  /// image must be N x 3 x input_h x input_w.
  FeaturePyramid<S> forward(const Tensor<S>& image, bool training) const;

  void collect(ParamList<S>& out) const;
  const EncoderConfig& config() const { return config_; }

 private:
  struct ConvMixer {
    Conv2dLayer<S> expand;          // C -> 2C, 1x1
    DepthwiseConv2dLayer<S> depth;  // 7x7
    Conv2dLayer<S> project;         // 2C -> C, 1x1
  };
  struct AttnMixer {
    LinearLayer<S> wq, wk, wv, wo;
    int64_t heads = 1;
  };
  struct Block {
    LayerNormChwLayer<S> norm1, norm2;
    MixerKind kind;
    ConvMixer conv_mixer;
    AttnMixer attn_mixer;
    Conv2dLayer<S> mlp1, mlp2;  // channel MLP, expansion 4
  };
  struct Stage {
    Conv2dLayer<S> stem;
    LayerNormChwLayer<S> stem_norm;
    std::vector<Block> blocks;
  };

  Tensor<S> run_block(const Block& b, const Tensor<S>& x, bool training) const;

  EncoderConfig config_;
  std::array<Stage, 4> stages_;
};

/// Seed-deterministic construction (same seed gives byte-identical buffers).
template <typename S>
Encoder<S> build_encoder(const EncoderConfig& config, uint64_t seed);

}  // namespace pses
