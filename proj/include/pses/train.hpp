#pragma once

#include <array>

#include "pses/dataset.hpp"
#include "pses/metrics.hpp"
#include "pses/model.hpp"
#include "pses/optim.hpp"

namespace pses {

struct TrainConfig {
  int64_t image_h = 352;
  int64_t image_w = 352;
  int64_t batch_size = 16;
  int64_t epochs = 200;
  double base_lr = 1e-4;
  double lr_decay_rate = 1e-1;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 0;
  int64_t decay_epoch = 50;  // lr multiplied by lr_decay_rate every decay_epoch epochs
  // Supervision over (m_initial, m1, m2, m). Without SES only m_initial
  // exists and uses weights[0] (1.0 when that is zero).
  std::array<double, 4> supervision_weights{1.0, 1.0, 1.0, 1.0};
  int64_t loss_window = 31;
  double loss_boundary_factor = 5.0;
  int64_t checkpoint_every = 50;
  double threshold = 0.5;

  void validate() const;
};

struct EpochStats {
  int64_t epoch = 0;
  double loss = 0, mdice = 0, miou = 0, mae = 0, lr = 0;
};

/// Deterministic training loop: the sample order of epoch e is a pure
/// function of (seed, e), so a run resumed from a checkpoint continues
/// bit-identically.
class Trainer {
 public:
  Trainer(PolypSesModel<float>& model, const Dataset& dataset, const TrainConfig& config);

  EpochStats run_epoch();
  /// Runs the remaining epochs up to config.epochs.
  void fit();

  double lr_for_epoch(int64_t epoch) const;
  int64_t epoch() const { return epoch_; }
  const std::vector<EpochStats>& history() const { return history_; }
  const std::vector<float>& step_losses() const { return step_losses_; }

  /// Full training state: model tensors, optimizer moments, counters.
  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  std::vector<int64_t> epoch_order(int64_t epoch) const;
  float train_step(const std::vector<int64_t>& order, size_t begin, size_t end);

  PolypSesModel<float>& model_;
  const Dataset& dataset_;
  TrainConfig config_;
  AdamW optimizer_;
  std::vector<Tensor<float>> images_;  // resized to the training size
  std::vector<Tensor<float>> masks_;
  int64_t epoch_ = 0;
  std::vector<EpochStats> history_;
  std::vector<float> step_losses_;
};

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path);

}  // namespace pses
