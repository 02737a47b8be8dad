#include "pses/ses.hpp"

#include <cmath>

namespace pses {

template <typename S>
SemanticPartition<S> partition_semantics(const Tensor<S>& m, int64_t patch_size, double tau_lo,
                                         double tau_hi) {
  if (m.rank() != 4 || m.extent(1) != 1) {
    throw ShapeError("partition_semantics expects a single-channel NCHW map, got " + shape_str(m.shape()));
  }
  if (patch_size < 1) throw ConfigError("patch size must be positive");
  if (!(0.0 < tau_lo && tau_lo < tau_hi && tau_hi < 1.0)) {
    throw ConfigError("thresholds must satisfy 0 < tau_lo < tau_hi < 1");
  }
  const int64_t n = m.extent(0), h = m.extent(2), w = m.extent(3);
  if (h % patch_size != 0 || w % patch_size != 0) {
    throw GeometryError("patch size " + std::to_string(patch_size) + " does not divide map extents " +
                        std::to_string(h) + "x" + std::to_string(w));
  }

  SemanticPartition<S> part;
  part.patch_size = patch_size;
  part.grid_h = h / patch_size;
  part.grid_w = w / patch_size;
  part.patch_grid.assign(static_cast<size_t>(n * part.grid_h * part.grid_w), PatchLabel::Background);
  part.s1_mask = Tensor<S>::zeros({n, 1, h, w});
  part.s2_mask = Tensor<S>::zeros({n, 1, h, w});

  const double inv_area = 1.0 / static_cast<double>(patch_size * patch_size);
  for (int64_t b = 0; b < n; ++b) {
    const S* map = m.data() + b * h * w;
    for (int64_t gy = 0; gy < part.grid_h; ++gy) {
      for (int64_t gx = 0; gx < part.grid_w; ++gx) {
        double acc = 0.0;
        for (int64_t py = 0; py < patch_size; ++py) {
          const S* row = map + (gy * patch_size + py) * w + gx * patch_size;
          for (int64_t px = 0; px < patch_size; ++px) acc += static_cast<double>(row[px]);
        }
        const double mu = acc * inv_area;
        PatchLabel label = PatchLabel::Background;
        if (mu >= tau_hi) {
          label = PatchLabel::S2;
        } else if (mu >= tau_lo) {
          label = PatchLabel::S1;
        }
        part.patch_grid[(b * part.grid_h + gy) * part.grid_w + gx] = label;
        if (label != PatchLabel::Background) {
          Tensor<S>& mask = label == PatchLabel::S1 ? part.s1_mask : part.s2_mask;
          S* mp = mask.data() + b * h * w;
          for (int64_t py = 0; py < patch_size; ++py) {
            S* row = mp + (gy * patch_size + py) * w + gx * patch_size;
            for (int64_t px = 0; px < patch_size; ++px) row[px] = S(1);
          }
        }
      }
    }
  }
  return part;
}

template <typename S>
CrossLayerAttention<S>::CrossLayerAttention(int64_t channels, Rng& rng)
    : wq(channels, channels, true, rng), wk(channels, channels, true, rng), wv(channels, channels, true, rng) {}

template <typename S>
Tensor<S> CrossLayerAttention<S>::forward(const Tensor<S>& f1, const Tensor<S>& m,
                                          const Tensor<S>& region_mask) const {
  if (f1.rank() != 4 || m.rank() != 4 || region_mask.rank() != 4) {
    throw ShapeError("cross_layer_attention operands must be NCHW");
  }
  const int64_t n = f1.extent(0), c = f1.extent(1);
  const int64_t h = m.extent(2), w = m.extent(3);
  if (f1.extent(2) != 2 * h || f1.extent(3) != 2 * w) {
    throw ShapeError("cross_layer_attention: F1 extent must be twice the map extent, got " +
                     shape_str(f1.shape()) + " vs " + shape_str(m.shape()));
  }
  if (!same_shape(region_mask.shape(), m.shape()) || m.extent(0) != n) {
    throw ShapeError("cross_layer_attention: mask/map resolution mismatch");
  }
  const int64_t hw = h * w;
  const S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(c)));

  Tensor<S> pooled = avg_pool2d(f1, 2, 2, 0);          // [N,C,h,w]
  Tensor<S> weighted = scale_map(pooled, m);           // map-weighted key/value source

  std::vector<Tensor<S>> planes;
  planes.reserve(static_cast<size_t>(n));
  for (int64_t b = 0; b < n; ++b) {
    std::vector<int64_t> idx;
    const S* mk = region_mask.data() + b * hw;
    for (int64_t i = 0; i < hw; ++i) {
      if (mk[i] > S(0.5)) idx.push_back(i);
    }
    if (idx.empty()) {
      planes.push_back(Tensor<S>::zeros({1, c, h, w}));
      continue;
    }
    Tensor<S> q_tokens = transpose_last2(reshape(slice(pooled, 0, b, 1), {c, hw}));    // [hw, C]
    Tensor<S> kv_tokens = transpose_last2(reshape(slice(weighted, 0, b, 1), {c, hw}));  // [hw, C]
    Tensor<S> q = wq.forward(q_tokens);
    Tensor<S> k = wk.forward(gather_rows(kv_tokens, idx));
    Tensor<S> v = wv.forward(gather_rows(kv_tokens, idx));
    Tensor<S> att = softmax(scale(matmul(q, transpose_last2(k)), inv_sqrt), 1);  // [hw, K]
    planes.push_back(reshape(transpose_last2(matmul(att, v)), {1, c, h, w}));
  }
  return n == 1 ? planes[0] : concat(std::span<const Tensor<S>>(planes.data(), planes.size()), 0);
}

template <typename S>
void CrossLayerAttention<S>::collect(const std::string& prefix, ParamList<S>& out) const {
  wq.collect(prefix + ".wq", out);
  wk.collect(prefix + ".wk", out);
  wv.collect(prefix + ".wv", out);
}

template <typename S>
AttentionGate<S>::AttentionGate(int64_t gate_c, int64_t skip_c, Rng& rng) {
  const int64_t inter = std::max<int64_t>(1, skip_c / 2);
  project_gate = Conv2dLayer<S>(gate_c, inter, 1, 1, 0, 1, true, rng);
  project_skip = Conv2dLayer<S>(skip_c, inter, 1, 1, 0, 1, true, rng);
  psi = Conv2dLayer<S>(inter, 1, 1, 1, 0, 1, true, rng);
}

template <typename S>
Tensor<S> AttentionGate<S>::forward(const Tensor<S>& gating, const Tensor<S>& skip) const {
  Tensor<S> g = bilinear_resize(gating, skip.extent(2), skip.extent(3));
  Tensor<S> mixed = relu(add(project_gate.forward(g), project_skip.forward(skip)));
  Tensor<S> alpha = sigmoid(psi.forward(mixed));
  return scale_map(skip, alpha);
}

template <typename S>
void AttentionGate<S>::collect(const std::string& prefix, ParamList<S>& out) const {
  project_gate.collect(prefix + ".project_gate", out);
  project_skip.collect(prefix + ".project_skip", out);
  psi.collect(prefix + ".psi", out);
}

template <typename S>
Ses<S>::Ses(const std::array<int64_t, 4>& ch, const PartitionConfig& pcfg, Rng& rng) : pcfg_(pcfg) {
  for (Path* p : {&s1_, &s2_}) {
    p->ca = CrossLayerAttention<S>(ch[0], rng);
    p->ag2 = AttentionGate<S>(ch[0], ch[1], rng);
    p->ag3 = AttentionGate<S>(ch[0], ch[2], rng);
    p->ag4 = AttentionGate<S>(ch[0], ch[3], rng);
    p->carry3 = Conv2dLayer<S>(ch[1], ch[0], 1, 1, 0, 1, true, rng);
    p->carry4 = Conv2dLayer<S>(ch[2], ch[0], 1, 1, 0, 1, true, rng);
    p->msfa = Msfa<S>(ch[1], ch[2], ch[3], rng);
  }
  fuse_ = Conv2dLayer<S>(2, 1, 1, 1, 0, 1, true, rng);
}

template <typename S>
Tensor<S> Ses<S>::run_path(const Path& p, const FeaturePyramid<S>& pyramid, const Tensor<S>& m_initial,
                           const Tensor<S>& mask, bool training) const {
  Tensor<S> q = p.ca.forward(pyramid.f1, m_initial, mask);

  Tensor<S> rich2 = p.ag2.forward(q, pyramid.f2);

  Tensor<S> g3 = add(bilinear_resize(q, pyramid.f3.extent(2), pyramid.f3.extent(3)),
                     p.carry3.forward(bilinear_resize(rich2, pyramid.f3.extent(2), pyramid.f3.extent(3))));
  Tensor<S> rich3 = p.ag3.forward(g3, pyramid.f3);

  Tensor<S> g4 = add(bilinear_resize(q, pyramid.f4.extent(2), pyramid.f4.extent(3)),
                     p.carry4.forward(bilinear_resize(rich3, pyramid.f4.extent(2), pyramid.f4.extent(3))));
  Tensor<S> rich4 = p.ag4.forward(g4, pyramid.f4);

  return p.msfa.forward(rich2, rich3, rich4, training);
}

template <typename S>
SesOutputs<S> Ses<S>::enrich_and_decode(const FeaturePyramid<S>& pyramid, const Tensor<S>& m_initial,
                                        bool training) const {
  SesOutputs<S> out;
  out.partition = partition_semantics(m_initial, pcfg_.patch_size, pcfg_.tau_lo, pcfg_.tau_hi);
  out.m1 = run_path(s1_, pyramid, m_initial, out.partition.s1_mask, training);
  out.m2 = run_path(s2_, pyramid, m_initial, out.partition.s2_mask, training);
  out.m = sigmoid(fuse_.forward(concat({out.m1, out.m2}, 1)));
  return out;
}

template <typename S>
void Ses<S>::collect_path(const Path& p, const std::string& prefix, ParamList<S>& out) const {
  p.ca.collect(prefix + ".ca", out);
  p.ag2.collect(prefix + ".ag2", out);
  p.ag3.collect(prefix + ".ag3", out);
  p.carry3.collect(prefix + ".ag3.carry", out);
  p.ag4.collect(prefix + ".ag4", out);
  p.carry4.collect(prefix + ".ag4.carry", out);
  p.msfa.collect(prefix + ".msfa", out);
}

template <typename S>
void Ses<S>::collect(ParamList<S>& out) const {
  collect_path(s1_, "ses.s1", out);
  collect_path(s2_, "ses.s2", out);
  fuse_.collect("ses.fuse", out);
}

#define PSES_INSTANTIATE_SES(S)                                                                       \
  template SemanticPartition<S> partition_semantics<S>(const Tensor<S>&, int64_t, double, double);    \
  template struct CrossLayerAttention<S>;                                                             \
  template struct AttentionGate<S>;                                                                   \
  template class Ses<S>;

PSES_INSTANTIATE_SES(float)
PSES_INSTANTIATE_SES(double)

}  // namespace pses
