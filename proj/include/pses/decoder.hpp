#pragma once

#include "pses/encoder.hpp"
#include "pses/nn.hpp"

namespace pses {

/// Local-to-Global Spatial Fusion. Channel-preserving: the four dilated
/// branches (rates 1,2,4,8) are concatenated and reduced back to the input
/// width, gated by spatial attention; the global branch gates the input by
/// a sigmoid of an MLP over the softmax-weighted pixel context; local and
/// global paths are summed and fused by a 3x3 convolution.
template <typename S>
struct LgsfBlock {
  std::array<Conv2dLayer<S>, 4> dilated;
  std::array<BatchNorm2dLayer<S>, 4> dilated_bn;
  Conv2dLayer<S> reduce;       // 4C -> C, 1x1
  Conv2dLayer<S> sa_conv;      // 2 -> 1, 7x7
  Conv2dLayer<S> global_proj;  // C -> C, 1x1
  LinearLayer<S> mlp_fc1, mlp_fc2;
  Conv2dLayer<S> fuse;  // C -> C, 3x3

  LgsfBlock() = default;
  LgsfBlock(int64_t channels, Rng& rng);

  Tensor<S> local(const Tensor<S>& f, bool training) const;
  Tensor<S> global(const Tensor<S>& f) const;
  Tensor<S> forward(const Tensor<S>& f, bool training) const;
  void collect(const std::string& prefix, ParamList<S>& out) const;
};

/// Multi-Scale Feature Aggregation: upsample the two coarser inputs to the
/// finest resolution, concatenate, run two conv+BN+ReLU stages and a
/// single-channel sigmoid head. Hidden width equals the finest input width.
template <typename S>
struct Msfa {
  Conv2dLayer<S> conv1;  // 1x1, (c2+c3+c4) -> hidden
  BatchNorm2dLayer<S> bn1;
  Conv2dLayer<S> conv2;  // 3x3, hidden -> hidden
  BatchNorm2dLayer<S> bn2;
  Conv2dLayer<S> head;  // 1x1, hidden -> 1

  Msfa() = default;
  Msfa(int64_t c2, int64_t c3, int64_t c4, Rng& rng);

  Tensor<S> forward(const Tensor<S>& f2, const Tensor<S>& f3, const Tensor<S>& f4, bool training) const;
  void collect(const std::string& prefix, ParamList<S>& out) const;
};

/// High-level decoder over pyramid levels 2..4 producing the initial global
/// feature map at 1/8 input resolution. When LGSF is disabled the refinement
/// blocks are replaced by plain 3x3 convolutions.
template <typename S>
class Decoder {
 public:
  Decoder() = default;
  Decoder(const std::array<int64_t, 4>& stage_channels, bool use_lgsf, Rng& rng);

  Tensor<S> refine(int level, const Tensor<S>& f, bool training) const;  // level in {2,3,4}
  Tensor<S> decode_initial(const FeaturePyramid<S>& pyramid, bool training) const;

  bool use_lgsf() const { return use_lgsf_; }
  const Msfa<S>& msfa() const { return msfa_; }
  void collect(ParamList<S>& out) const;

 private:
  bool use_lgsf_ = true;
  std::array<LgsfBlock<S>, 3> lgsf_;        // levels 2..4
  std::array<Conv2dLayer<S>, 3> plain_;     // ablation replacement
  Msfa<S> msfa_;
};

}  // namespace pses
