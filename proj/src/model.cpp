#include "pses/model.hpp"

namespace pses {

namespace {
// Encoder parameters come from the seed itself; decoder and SES draw from a
// derived stream so adding blocks to one component does not shift the other.
constexpr uint64_t kDecoderStream = 0x9e3779b97f4a7c15ull;
constexpr uint64_t kSesStream = 0xc2b2ae3d27d4eb4full;
}  // namespace

template <typename S>
PolypSesModel<S>::PolypSesModel(const ModelConfig& config, uint64_t seed)
    : config_(config), encoder_(build_encoder<S>(config.encoder, seed)) {
  config_.validate();
  Rng dec_rng(seed ^ kDecoderStream);
  decoder_ = Decoder<S>(config_.encoder.stage_channels, config_.use_lgsf, dec_rng);
  if (config_.use_ses) {
    Rng ses_rng(seed ^ kSesStream);
    ses_.emplace(config_.encoder.stage_channels, config_.partition, ses_rng);
  }
}

template <typename S>
ModelOutputs<S> PolypSesModel<S>::forward(const Tensor<S>& image, bool training) const {
  return forward_traced(image, training).outputs;
}

template <typename S>
ForwardTrace<S> PolypSesModel<S>::forward_traced(const Tensor<S>& image, bool training) const {
  ForwardTrace<S> trace;
  trace.pyramid = encoder_.forward(image, training);
  trace.post2 = decoder_.refine(2, trace.pyramid.f2, training);
  trace.post3 = decoder_.refine(3, trace.pyramid.f3, training);
  trace.post4 = decoder_.refine(4, trace.pyramid.f4, training);

  ModelOutputs<S>& out = trace.outputs;
  out.m_initial = decoder_.msfa().forward(trace.post2, trace.post3, trace.post4, training);
  if (ses_.has_value()) {
    SesOutputs<S> ses = ses_->enrich_and_decode(trace.pyramid, out.m_initial, training);
    out.m1 = ses.m1;
    out.m2 = ses.m2;
    out.m = ses.m;
    out.partition = std::move(ses.partition);
  } else {
    out.m = out.m_initial;
  }
  return trace;
}

template <typename S>
Tensor<S> PolypSesModel<S>::predict(const Tensor<S>& image, int64_t out_h, int64_t out_w) const {
  ModelOutputs<S> out = forward(image, false);
  return bilinear_resize(out.m, out_h, out_w);
}

template <typename S>
ParamList<S> PolypSesModel<S>::named_state() const {
  ParamList<S> out;
  encoder_.collect(out);
  decoder_.collect(out);
  if (ses_.has_value()) ses_->collect(out);
  return out;
}

template <typename S>
std::vector<Tensor<S>> PolypSesModel<S>::trainable_params() const {
  std::vector<Tensor<S>> out;
  for (const NamedTensor<S>& nt : named_state()) {
    if (nt.trainable) out.push_back(nt.tensor);
  }
  return out;
}

template class PolypSesModel<float>;
template class PolypSesModel<double>;

}  // namespace pses
