#pragma once

#include <vector>

#include "pses/tensor.hpp"

namespace pses {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// AdamW with decoupled weight decay applied before the moment update.
class AdamW {
 public:
  AdamW(std::vector<Tensor<float>> params, const AdamWConfig& config);

  void step();
  void zero_grad();

  void set_lr(double lr) { config_.lr = lr; }
  double lr() const { return config_.lr; }
  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }

  const std::vector<Tensor<float>>& params() const { return params_; }
  std::vector<Tensor<float>>& first_moments() { return m_; }
  std::vector<Tensor<float>>& second_moments() { return v_; }

 private:
  std::vector<Tensor<float>> params_;
  std::vector<Tensor<float>> m_, v_;
  AdamWConfig config_;
  int64_t t_ = 0;
};

}  // namespace pses
