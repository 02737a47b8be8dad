#pragma once

#include <span>
#include <vector>

#include "pses/tape.hpp"
#include "pses/tensor.hpp"

namespace pses {

// ---------------------------------------------------------------------------
// Convolution and resampling
// ---------------------------------------------------------------------------

/// Dilated cross-correlation. input NCHW, weight OIKK, bias O (optional,
/// pass a default-constructed Tensor to omit). Output spatial extents follow
/// H' = floor((H + 2*padding - dilation*(K-1) - 1) / stride) + 1.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias,
                 int64_t stride, int64_t padding, int64_t dilation);

/// Per-channel convolution. weight [C,1,KH,KW], bias [C] optional.
template <typename S>
Tensor<S> depthwise_conv2d(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias,
                           int64_t stride, int64_t padding);

/// Box average with constant divisor kernel*kernel (zero padding included).
template <typename S>
Tensor<S> avg_pool2d(const Tensor<S>& input, int64_t kernel, int64_t stride, int64_t padding);

/// Bilinear resampling to (out_h, out_w) with half-pixel centers and border
/// clamping: src = (dst + 0.5) * in/out - 0.5. Identity when sizes match.
template <typename S>
Tensor<S> bilinear_resize(const Tensor<S>& input, int64_t out_h, int64_t out_w);

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Batch normalization over N,H,W per channel. Training mode uses batch
/// statistics (throws ContractError when only one value per channel is
/// available) and updates running stats in place with the given momentum;
/// eval mode normalizes with the running stats.
template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     Tensor<S>& running_mean, Tensor<S>& running_var, bool training,
                     double momentum = 0.1, double eps = 1e-5);

/// Layer normalization across the channel axis of an NCHW tensor, affine
/// per channel.
template <typename S>
Tensor<S> layer_norm_chw(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                         double eps = 1e-5);

// ---------------------------------------------------------------------------
// Linear algebra and layout
// ---------------------------------------------------------------------------

/// Matrix product for rank-2 ([M,K]@[K,N]) or rank-3 batched ([B,M,K]@[B,K,N]).
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b);

/// x [..., IN] (rank 2 or 3) times w [IN, OUT] plus optional bias [OUT].
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias);

template <typename S>
Tensor<S> transpose_last2(const Tensor<S>& t);

template <typename S>
Tensor<S> reshape(const Tensor<S>& t, Shape shape);

template <typename S>
Tensor<S> concat(std::span<const Tensor<S>> ts, int64_t axis);

template <typename S>
Tensor<S> concat(std::initializer_list<Tensor<S>> ts, int64_t axis);

template <typename S>
Tensor<S> slice(const Tensor<S>& t, int64_t axis, int64_t start, int64_t len);

/// Select rows of a rank-2 tensor. Row indices must be in range and the
/// selection nonempty.
template <typename S>
Tensor<S> gather_rows(const Tensor<S>& t, const std::vector<int64_t>& rows);

// ---------------------------------------------------------------------------
// Pointwise and reductions
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> relu(const Tensor<S>& t);
template <typename S>
Tensor<S> sigmoid(const Tensor<S>& t);
/// Natural log; every element must be positive.
template <typename S>
Tensor<S> log(const Tensor<S>& t);
template <typename S>
Tensor<S> clamp(const Tensor<S>& t, S lo, S hi);

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);
template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b);
/// Hadamard product.
template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);
template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b);

template <typename S>
Tensor<S> scale(const Tensor<S>& t, S s);
template <typename S>
Tensor<S> add_scalar(const Tensor<S>& t, S s);

/// x [N,C,H,W] scaled elementwise by a single-channel map [N,1,H,W].
template <typename S>
Tensor<S> scale_map(const Tensor<S>& x, const Tensor<S>& gate);

/// Normalizes every slice along `axis` to sum to 1 (max-subtracted).
template <typename S>
Tensor<S> softmax(const Tensor<S>& t, int64_t axis);

/// Channel-wise max / mean of an NCHW tensor -> [N,1,H,W].
template <typename S>
Tensor<S> channel_max(const Tensor<S>& x);
template <typename S>
Tensor<S> channel_mean(const Tensor<S>& x);

/// Full reductions to a scalar tensor.
template <typename S>
Tensor<S> sum(const Tensor<S>& t);
template <typename S>
Tensor<S> mean(const Tensor<S>& t);

}  // namespace pses
