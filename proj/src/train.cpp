#include "pses/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "pses/checkpoint.hpp"
#include "pses/loss.hpp"
#include "pses/tape.hpp"

namespace pses {

void TrainConfig::validate() const {
  if (image_h < 32 || image_w < 32) throw ConfigError("training image size too small");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (epochs < 1) throw ConfigError("epoch count must be positive");
  if (base_lr <= 0 || lr_decay_rate <= 0) throw ConfigError("learning rates must be positive");
  if (weight_decay < 0) throw ConfigError("weight decay must be nonnegative");
  if (decay_epoch < 1) throw ConfigError("decay epoch interval must be positive");
  double wsum = 0;
  for (double w : supervision_weights) {
    if (w < 0) throw ConfigError("supervision weights must be nonnegative");
    wsum += w;
  }
  if (wsum <= 0) throw ConfigError("at least one supervision weight must be positive");
}

namespace {
uint64_t mix_seed(uint64_t seed, uint64_t epoch) {
  uint64_t x = seed + 0x9e3779b97f4a7c15ull * (epoch + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

AdamWConfig adamw_config(const TrainConfig& c) {
  AdamWConfig a;
  a.lr = c.base_lr;
  a.beta1 = c.beta1;
  a.beta2 = c.beta2;
  a.eps = c.adam_eps;
  a.weight_decay = c.weight_decay;
  return a;
}
}  // namespace

Trainer::Trainer(PolypSesModel<float>& model, const Dataset& dataset, const TrainConfig& config)
    : model_(model), dataset_(dataset), config_(config), optimizer_(model.trainable_params(), adamw_config(config)) {
  config_.validate();
  if (dataset_.samples.empty()) throw ConfigError("training dataset is empty");
  if (config_.image_h != model_.config().encoder.input_h || config_.image_w != model_.config().encoder.input_w) {
    throw ConfigError("training image size must match the encoder input size");
  }
  images_.reserve(dataset_.samples.size());
  masks_.reserve(dataset_.samples.size());
  for (const SegSample& s : dataset_.samples) {
    images_.push_back(bilinear_resize(s.image, config_.image_h, config_.image_w));
    masks_.push_back(binarize(bilinear_resize(s.mask, config_.image_h, config_.image_w), 0.5));
  }
}

double Trainer::lr_for_epoch(int64_t epoch) const {
  const int64_t decays = (epoch - 1) / config_.decay_epoch;
  return config_.base_lr * std::pow(config_.lr_decay_rate, static_cast<double>(decays));
}

std::vector<int64_t> Trainer::epoch_order(int64_t epoch) const {
  std::vector<int64_t> order(dataset_.samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(config_.seed, static_cast<uint64_t>(epoch)));
  for (size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  return order;
}

float Trainer::train_step(const std::vector<int64_t>& order, size_t begin, size_t end) {
  std::vector<Tensor<float>> imgs, gts;
  for (size_t i = begin; i < end; ++i) {
    imgs.push_back(images_[static_cast<size_t>(order[i])]);
    gts.push_back(masks_[static_cast<size_t>(order[i])]);
  }
  Tensor<float> batch = imgs.size() == 1 ? imgs[0] : concat(std::span<const Tensor<float>>(imgs.data(), imgs.size()), 0);
  Tensor<float> gt = gts.size() == 1 ? gts[0] : concat(std::span<const Tensor<float>>(gts.data(), gts.size()), 0);

  Tape<float> tape;
  Tensor<float> total;
  {
    TapeScope<float> scope(tape);
    ModelOutputs<float> out = model_.forward(batch, true);
    std::vector<Tensor<float>> maps = out.supervised();
    for (size_t k = 0; k < maps.size(); ++k) {
      double w = maps.size() == 1
                     ? (config_.supervision_weights[0] > 0 ? config_.supervision_weights[0] : 1.0)
                     : config_.supervision_weights[k];
      if (w == 0) continue;
      Tensor<float> up = bilinear_resize(maps[k], config_.image_h, config_.image_w);
      Tensor<float> term = scale(
          weighted_bce_dice(up, gt, config_.loss_window, config_.loss_boundary_factor), static_cast<float>(w));
      total = total.defined() ? add(total, term) : term;
    }
  }
  const float loss = total.item();
  if (std::isnan(loss) || std::isinf(loss)) {
    throw EngineError("training aborted: loss is not finite at step " +
                      std::to_string(step_losses_.size() + 1));
  }
  optimizer_.zero_grad();
  backward(tape, total);
  optimizer_.step();
  return loss;
}

EpochStats Trainer::run_epoch() {
  ++epoch_;
  optimizer_.set_lr(lr_for_epoch(epoch_));
  const std::vector<int64_t> order = epoch_order(epoch_);

  double loss_sum = 0;
  int64_t steps = 0;
  for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(config_.batch_size)) {
    const size_t end = std::min(order.size(), begin + static_cast<size_t>(config_.batch_size));
    const float loss = train_step(order, begin, end);
    step_losses_.push_back(loss);
    loss_sum += loss;
    ++steps;
  }

  EvalReport report = evaluate_samples(model_, dataset_.samples, config_.threshold, "train", "");
  EpochStats stats;
  stats.epoch = epoch_;
  stats.loss = loss_sum / static_cast<double>(steps);
  stats.mdice = report.mdice;
  stats.miou = report.miou;
  stats.mae = report.mae;
  stats.lr = optimizer_.lr();
  history_.push_back(stats);
  return stats;
}

void Trainer::fit() {
  while (epoch_ < config_.epochs) run_epoch();
}

void Trainer::save(const std::string& path) const {
  ParamList<float> state = model_.named_state();
  AdamW& opt = const_cast<AdamW&>(optimizer_);
  size_t k = 0;
  ParamList<float> extra;
  for (const NamedTensor<float>& nt : state) {
    if (!nt.trainable) continue;
    extra.push_back({"optim.m." + nt.name, opt.first_moments()[k], false});
    extra.push_back({"optim.v." + nt.name, opt.second_moments()[k], false});
    ++k;
  }
  state.insert(state.end(), extra.begin(), extra.end());
  state.push_back({"trainer.epoch", Tensor<float>::scalar(static_cast<float>(epoch_)), false});
  state.push_back({"trainer.adam_t", Tensor<float>::scalar(static_cast<float>(optimizer_.step_count())), false});
  save_checkpoint(path, state);
}

void Trainer::load(const std::string& path) {
  ParamList<float> state = model_.named_state();
  size_t k = 0;
  ParamList<float> extra;
  for (const NamedTensor<float>& nt : state) {
    if (!nt.trainable) continue;
    extra.push_back({"optim.m." + nt.name, optimizer_.first_moments()[k], false});
    extra.push_back({"optim.v." + nt.name, optimizer_.second_moments()[k], false});
    ++k;
  }
  state.insert(state.end(), extra.begin(), extra.end());
  Tensor<float> epoch_t = Tensor<float>::scalar(0);
  Tensor<float> adam_t = Tensor<float>::scalar(0);
  state.push_back({"trainer.epoch", epoch_t, false});
  state.push_back({"trainer.adam_t", adam_t, false});
  load_into(path, state);
  epoch_ = static_cast<int64_t>(epoch_t.item());
  optimizer_.set_step_count(static_cast<int64_t>(adam_t.item()));
}

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IngestionError("cannot write metrics csv: " + path);
  os << "epoch,loss,mdice,miou,mae,lr\n";
  char buf[256];
  for (const EpochStats& e : history) {
    std::snprintf(buf, sizeof(buf), "%lld,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                  static_cast<long long>(e.epoch), e.loss, e.mdice, e.miou, e.mae, e.lr);
    os << buf;
  }
}

}  // namespace pses
