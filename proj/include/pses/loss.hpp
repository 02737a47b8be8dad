#pragma once

#include "pses/ops.hpp"

namespace pses {

/// Weighted BCE + weighted Dice with boundary-emphasizing pixel weights
/// w = 1 + factor * |avgpool_{window,stride 1}(gt) - gt|. pred is clamped to
/// [1e-7, 1-1e-7] before the log terms; gt must be {0,1}-valued and carries
/// no gradient.
template <typename S>
Tensor<S> weighted_bce_dice(const Tensor<S>& pred, const Tensor<S>& gt, int64_t window = 31,
                            double boundary_factor = 5.0);

}  // namespace pses
