#pragma once

#include <string>
#include <vector>

#include "pses/tensor.hpp"

namespace pses {

struct SegSample {
  std::string id;
  Tensor<float> image;  // [1,3,H,W] in [0,1]
  Tensor<float> mask;   // [1,1,H,W] in {0,1}
};

struct Dataset {
  std::vector<SegSample> samples;  // ordered by id
  size_t size() const { return samples.size(); }
};

/// Loads <dir>/images/<name>.(png|jpg|jpeg) paired with <dir>/masks/<name>.png
/// by stem. Unmatched files raise IngestionError naming the offender; an
/// empty dataset raises ConfigError.
Dataset load_dataset(const std::string& dir);

}  // namespace pses
