#pragma once

#include "pses/decoder.hpp"

namespace pses {

enum class PatchLabel : uint8_t { Background = 0, S1 = 1, S2 = 2 };

/// Patch-grid split of an initial map into ambiguous (S1) and solid (S2)
/// regions. Masks are {0,1}-valued at map resolution and disjoint.
template <typename S>
struct SemanticPartition {
  int64_t patch_size = 0;
  int64_t grid_h = 0, grid_w = 0;
  std::vector<PatchLabel> patch_grid;  // [N, grid_h, grid_w] row-major
  Tensor<S> s1_mask, s2_mask;          // [N,1,h,w]
};

struct PartitionConfig {
  int64_t patch_size = 4;
  double tau_lo = 0.1;
  double tau_hi = 0.8;
};

/// Labels each patch by its mean value mu: S2 when mu >= tau_hi, S1 when
/// tau_lo <= mu < tau_hi, background below tau_lo.
template <typename S>
SemanticPartition<S> partition_semantics(const Tensor<S>& m, int64_t patch_size, double tau_lo,
                                         double tau_hi);

/// Scaled dot-product attention with pooled F1 positions as queries and the
/// map-weighted, mask-selected positions as keys/values. One head, attention
/// width equal to the F1 channel width. An empty mask yields a zero output.
template <typename S>
struct CrossLayerAttention {
  LinearLayer<S> wq, wk, wv;

  CrossLayerAttention() = default;
  CrossLayerAttention(int64_t channels, Rng& rng);

  Tensor<S> forward(const Tensor<S>& f1, const Tensor<S>& m, const Tensor<S>& region_mask) const;
  void collect(const std::string& prefix, ParamList<S>& out) const;
};

/// Additive attention gate: gating and skip projected to a shared width,
/// added, ReLU, 1-channel projection, sigmoid; the coefficient map scales
/// the skip. The gating signal is resized to the skip extent first.
template <typename S>
struct AttentionGate {
  Conv2dLayer<S> project_gate;  // gate_c -> inter, 1x1
  Conv2dLayer<S> project_skip;  // skip_c -> inter, 1x1
  Conv2dLayer<S> psi;           // inter -> 1, 1x1

  AttentionGate() = default;
  AttentionGate(int64_t gate_c, int64_t skip_c, Rng& rng);

  Tensor<S> forward(const Tensor<S>& gating, const Tensor<S>& skip) const;
  void collect(const std::string& prefix, ParamList<S>& out) const;
};

template <typename S>
struct SesOutputs {
  Tensor<S> m1, m2, m;
  SemanticPartition<S> partition;
};

/// Self-enrichment over the S1 and S2 regions: each path queries F1 against
/// its region, injects the result into levels 2..4 through attention gates
/// chained level-to-level, and decodes with its own MSFA; the two maps are
/// fused by a 1x1 convolution and sigmoid.
template <typename S>
class Ses {
 public:
  Ses() = default;
  Ses(const std::array<int64_t, 4>& stage_channels, const PartitionConfig& pcfg, Rng& rng);

  SesOutputs<S> enrich_and_decode(const FeaturePyramid<S>& pyramid, const Tensor<S>& m_initial,
                                  bool training) const;

  const PartitionConfig& partition_config() const { return pcfg_; }
  void collect(ParamList<S>& out) const;

 private:
  struct Path {
    CrossLayerAttention<S> ca;
    AttentionGate<S> ag2, ag3, ag4;
    Conv2dLayer<S> carry3, carry4;  // fold the prior enriched level into the gating signal
    Msfa<S> msfa;
  };

  Tensor<S> run_path(const Path& p, const FeaturePyramid<S>& pyramid, const Tensor<S>& m_initial,
                     const Tensor<S>& mask, bool training) const;
  void collect_path(const Path& p, const std::string& prefix, ParamList<S>& out) const;

  PartitionConfig pcfg_;
  Path s1_, s2_;
  Conv2dLayer<S> fuse_;  // 2 -> 1, 1x1
};

}  // namespace pses
