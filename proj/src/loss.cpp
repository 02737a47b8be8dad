#include "pses/loss.hpp"

#include <cmath>

namespace pses {

template <typename S>
Tensor<S> weighted_bce_dice(const Tensor<S>& pred, const Tensor<S>& gt, int64_t window,
                            double boundary_factor) {
  if (!same_shape(pred.shape(), gt.shape())) {
    throw ShapeError("weighted_bce_dice shape mismatch: " + shape_str(pred.shape()) + " vs " +
                     shape_str(gt.shape()));
  }
  if (pred.rank() != 4 || pred.extent(1) != 1) {
    throw ShapeError("weighted_bce_dice expects single-channel NCHW maps");
  }
  if (window < 1 || window % 2 == 0) throw ConfigError("loss pooling window must be odd and positive");
  for (int64_t i = 0; i < gt.numel(); ++i) {
    const S g = gt.data()[i];
    if (g != S(0) && g != S(1)) throw ContractError("ground truth must be {0,1}-valued");
  }

  // Pixel weights depend on gt only; nothing here enters the tape.
  Tensor<S> pooled = avg_pool2d(gt, window, 1, window / 2);
  Tensor<S> weights = Tensor<S>::zeros_like(gt);
  for (int64_t i = 0; i < gt.numel(); ++i) {
    weights.data()[i] =
        S(1) + static_cast<S>(boundary_factor) * std::abs(pooled.data()[i] - gt.data()[i]);
  }

  const S eps = static_cast<S>(1e-7);
  Tensor<S> p = clamp(pred, eps, S(1) - eps);
  Tensor<S> one_minus_p = add_scalar(scale(p, S(-1)), S(1));
  Tensor<S> one_minus_g = add_scalar(scale(gt, S(-1)), S(1));

  Tensor<S> bce = scale(add(mul(gt, log(p)), mul(one_minus_g, log(one_minus_p))), S(-1));
  Tensor<S> wbce = div(sum(mul(weights, bce)), sum(weights));

  Tensor<S> intersection = sum(mul(weights, mul(p, gt)));
  Tensor<S> total = sum(mul(weights, add(p, gt)));
  Tensor<S> dice_ratio = div(add_scalar(scale(intersection, S(2)), S(1)), add_scalar(total, S(1)));
  Tensor<S> wdice = add_scalar(scale(dice_ratio, S(-1)), S(1));

  return add(wbce, wdice);
}

template Tensor<float> weighted_bce_dice<float>(const Tensor<float>&, const Tensor<float>&, int64_t, double);
template Tensor<double> weighted_bce_dice<double>(const Tensor<double>&, const Tensor<double>&, int64_t,
                                                  double);

}  // namespace pses
