#include "pses/optim.hpp"

#include <cmath>

namespace pses {

AdamW::AdamW(std::vector<Tensor<float>> params, const AdamWConfig& config)
    : params_(std::move(params)), config_(config) {
  if (config_.lr < 0 || config_.weight_decay < 0) throw ConfigError("AdamW rates must be nonnegative");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor<float>& p : params_) {
    m_.push_back(Tensor<float>::zeros_like(p));
    v_.push_back(Tensor<float>::zeros_like(p));
  }
}

void AdamW::step() {
  ++t_;
  const float lr = static_cast<float>(config_.lr);
  const float b1 = static_cast<float>(config_.beta1);
  const float b2 = static_cast<float>(config_.beta2);
  const float eps = static_cast<float>(config_.eps);
  const float wd = static_cast<float>(config_.weight_decay);
  const float bc1 = 1.0f - std::pow(b1, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(b2, static_cast<float>(t_));

  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor<float>& p = params_[i];
    const float* g = p.grad();
    if (!g) continue;
    float* pv = p.data();
    float* mv = m_[i].data();
    float* vv = v_[i].data();
    const int64_t n = p.numel();
    for (int64_t j = 0; j < n; ++j) {
      pv[j] -= lr * wd * pv[j];
      mv[j] = b1 * mv[j] + (1.0f - b1) * g[j];
      vv[j] = b2 * vv[j] + (1.0f - b2) * g[j] * g[j];
      const float mhat = mv[j] / bc1;
      const float vhat = vv[j] / bc2;
      pv[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

void AdamW::zero_grad() {
  for (Tensor<float>& p : params_) p.zero_grad();
}

}  // namespace pses
