#pragma once

#include <optional>

#include "pses/ses.hpp"

namespace pses {

struct ModelConfig {
  EncoderConfig encoder;
  PartitionConfig partition;
  bool use_lgsf = true;
  bool use_ses = true;
  std::string backbone_tag = "caformer";

  void validate() const { encoder.validate(); }
};

/// All segmentation maps live at 1/8 input resolution. With SES disabled,
/// m aliases m_initial and m1/m2 are undefined.
template <typename S>
struct ModelOutputs {
  Tensor<S> m_initial;
  Tensor<S> m1, m2;
  Tensor<S> m;
  std::optional<SemanticPartition<S>> partition;

  /// Maps supervised during training, in fixed order.
  std::vector<Tensor<S>> supervised() const {
    if (m1.defined()) return {m_initial, m1, m2, m};
    return {m_initial};
  }
};

/// Per-level features before and after decoder refinement, for the
/// feature-dump command.
template <typename S>
struct ForwardTrace {
  FeaturePyramid<S> pyramid;
  Tensor<S> post2, post3, post4;
  ModelOutputs<S> outputs;
};

template <typename S>
class PolypSesModel {
 public:
  PolypSesModel(const ModelConfig& config, uint64_t seed);

  ModelOutputs<S> forward(const Tensor<S>& image, bool training) const;
  ForwardTrace<S> forward_traced(const Tensor<S>& image, bool training) const;

  /// Final prediction upsampled to (out_h, out_w), eval mode.
  Tensor<S> predict(const Tensor<S>& image, int64_t out_h, int64_t out_w) const;

  const ModelConfig& config() const { return config_; }
  const Encoder<S>& encoder() const { return encoder_; }

  /// Every named tensor including running statistics, in deterministic order.
  ParamList<S> named_state() const;
  /// Trainable parameters only.
  std::vector<Tensor<S>> trainable_params() const;

 private:
  ModelConfig config_;
  Encoder<S> encoder_;
  Decoder<S> decoder_;
  std::optional<Ses<S>> ses_;
};

}  // namespace pses
