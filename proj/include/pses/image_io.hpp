#pragma once

#include <string>

#include "pses/tensor.hpp"

namespace pses {

/// Reads a PNG/JPEG image as [1,3,H,W] RGB in [0,1].
Tensor<float> load_image_rgb(const std::string& path);

/// Reads an 8-bit grayscale mask as [1,1,H,W], binarized at 128/255.
Tensor<float> load_mask_binary(const std::string& path);

/// Reads an 8-bit grayscale image as [1,1,H,W] in [0,1] without binarization.
Tensor<float> load_gray(const std::string& path);

/// Writes a [1,1,H,W] map in [0,1] as an 8-bit grayscale PNG (rounded).
void save_gray_png(const std::string& path, const Tensor<float>& map);

/// Min-max normalizes a single-channel map to [0,1]; constant maps become 0.
Tensor<float> min_max_normalize(const Tensor<float>& map);

/// Channel-wise L2 magnitude of an NCHW feature map -> [N,1,H,W].
Tensor<float> feature_magnitude(const Tensor<float>& features);

}  // namespace pses
