#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "pses/tensor.hpp"

namespace pses {

/// Ordered record of executed primitive operations. Ops record a backward
/// closure when a tape is active (see TapeScope) and at least one input
/// tracks gradients. Replaying the tape backward visits closures in exact
/// reverse execution order.
template <typename S>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const Tensor<S>& out, std::function<void()> backward_fn) {
    output_set_.insert(out.impl().get());
    outputs_.push_back(out.impl());
    nodes_.push_back(std::move(backward_fn));
  }

  bool produced(const Tensor<S>& t) const {
    return output_set_.count(t.impl().get()) > 0;
  }

  size_t size() const { return nodes_.size(); }

  void clear() {
    nodes_.clear();
    outputs_.clear();
    output_set_.clear();
  }

  /// Clears intermediate gradients so each replay computes a fresh chain-rule
  /// pass; leaf gradients accumulate across replays.
  void zero_intermediate_grads() {
    for (auto& out : outputs_) std::fill(out->grad.begin(), out->grad.end(), S(0));
  }

  void replay_backward() {
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  static Tape* current() { return current_; }

 private:
  std::vector<std::function<void()>> nodes_;
  std::vector<std::shared_ptr<TensorData<S>>> outputs_;
  std::unordered_set<const TensorData<S>*> output_set_;
  static thread_local Tape* current_;

  template <typename>
  friend class TapeScope;
};

template <typename S>
thread_local Tape<S>* Tape<S>::current_ = nullptr;

/// RAII activation of a tape on the current thread.
template <typename S>
class TapeScope {
 public:
  explicit TapeScope(Tape<S>& tape) : prev_(Tape<S>::current_) { Tape<S>::current_ = &tape; }
  ~TapeScope() { Tape<S>::current_ = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<S>* prev_;
};

/// Accumulates d(loss)/d(t) into the grad buffer of every tracked tensor
/// reachable from `loss`. Repeated calls without zeroing grads accumulate.
template <typename S>
void backward(Tape<S>& tape, const Tensor<S>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss");
  }
  if (!tape.produced(loss)) {
    throw ContractError("backward requires a loss produced under this tape");
  }
  tape.zero_intermediate_grads();
  Tensor<S> l = loss;
  l.ensure_grad();
  l.grad()[0] = S(1);
  tape.replay_backward();
}

}  // namespace pses
