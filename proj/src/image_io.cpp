#include "pses/image_io.hpp"

#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace pses {

Tensor<float> load_image_rgb(const std::string& path) {
  cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);  // BGR
  if (img.empty()) throw IngestionError("cannot read image: " + path);
  const int64_t h = img.rows, w = img.cols;
  Tensor<float> t = Tensor<float>::zeros({1, 3, h, w});
  float* r = t.data();
  float* g = t.data() + h * w;
  float* b = t.data() + 2 * h * w;
  for (int64_t y = 0; y < h; ++y) {
    const cv::Vec3b* row = img.ptr<cv::Vec3b>(static_cast<int>(y));
    for (int64_t x = 0; x < w; ++x) {
      b[y * w + x] = static_cast<float>(row[x][0]) / 255.0f;
      g[y * w + x] = static_cast<float>(row[x][1]) / 255.0f;
      r[y * w + x] = static_cast<float>(row[x][2]) / 255.0f;
    }
  }
  return t;
}

Tensor<float> load_gray(const std::string& path) {
  cv::Mat img = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (img.empty()) throw IngestionError("cannot read image: " + path);
  const int64_t h = img.rows, w = img.cols;
  Tensor<float> t = Tensor<float>::zeros({1, 1, h, w});
  for (int64_t y = 0; y < h; ++y) {
    const uint8_t* row = img.ptr<uint8_t>(static_cast<int>(y));
    for (int64_t x = 0; x < w; ++x) t.data()[y * w + x] = static_cast<float>(row[x]) / 255.0f;
  }
  return t;
}

Tensor<float> load_mask_binary(const std::string& path) {
  cv::Mat img = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (img.empty()) throw IngestionError("cannot read mask: " + path);
  const int64_t h = img.rows, w = img.cols;
  Tensor<float> t = Tensor<float>::zeros({1, 1, h, w});
  for (int64_t y = 0; y < h; ++y) {
    const uint8_t* row = img.ptr<uint8_t>(static_cast<int>(y));
    for (int64_t x = 0; x < w; ++x) t.data()[y * w + x] = row[x] >= 128 ? 1.0f : 0.0f;
  }
  return t;
}

void save_gray_png(const std::string& path, const Tensor<float>& map) {
  if (map.rank() != 4 || map.extent(0) != 1 || map.extent(1) != 1) {
    throw ShapeError("save_gray_png expects a [1,1,H,W] map, got " + shape_str(map.shape()));
  }
  const int64_t h = map.extent(2), w = map.extent(3);
  cv::Mat img(static_cast<int>(h), static_cast<int>(w), CV_8UC1);
  for (int64_t y = 0; y < h; ++y) {
    uint8_t* row = img.ptr<uint8_t>(static_cast<int>(y));
    for (int64_t x = 0; x < w; ++x) {
      float v = map.data()[y * w + x];
      v = std::min(1.0f, std::max(0.0f, v));
      row[x] = static_cast<uint8_t>(std::lround(v * 255.0f));
    }
  }
  if (!cv::imwrite(path, img)) throw IngestionError("cannot write image: " + path);
}

Tensor<float> min_max_normalize(const Tensor<float>& map) {
  Tensor<float> out = map.clone_values();
  float lo = out.data()[0], hi = out.data()[0];
  for (int64_t i = 0; i < out.numel(); ++i) {
    lo = std::min(lo, out.data()[i]);
    hi = std::max(hi, out.data()[i]);
  }
  const float range = hi - lo;
  for (int64_t i = 0; i < out.numel(); ++i) {
    out.data()[i] = range > 0 ? (out.data()[i] - lo) / range : 0.0f;
  }
  return out;
}

Tensor<float> feature_magnitude(const Tensor<float>& features) {
  if (features.rank() != 4) throw ShapeError("feature_magnitude expects NCHW");
  const int64_t n = features.extent(0), c = features.extent(1);
  const int64_t h = features.extent(2), w = features.extent(3);
  Tensor<float> out = Tensor<float>::zeros({n, 1, h, w});
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const float* plane = features.data() + (b * c + ch) * h * w;
      float* o = out.data() + b * h * w;
      for (int64_t i = 0; i < h * w; ++i) o[i] += plane[i] * plane[i];
    }
    float* o = out.data() + b * h * w;
    for (int64_t i = 0; i < h * w; ++i) o[i] = std::sqrt(o[i]);
  }
  return out;
}

}  // namespace pses
