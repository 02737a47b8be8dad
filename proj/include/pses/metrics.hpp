#pragma once

#include <string>
#include <vector>

#include "pses/dataset.hpp"
#include "pses/model.hpp"

namespace pses {

/// Dice coefficient 2|P∩G| / (|P|+|G|) over binary maps; 1.0 when both are
/// empty.
double dice(const Tensor<float>& pred, const Tensor<float>& gt);

/// Intersection over union |P∩G| / |P∪G|; 1.0 when both are empty.
double iou(const Tensor<float>& pred, const Tensor<float>& gt);

/// Mean absolute error between a continuous map in [0,1] and a binary mask.
double mae(const Tensor<float>& pred, const Tensor<float>& gt);

Tensor<float> binarize(const Tensor<float>& map, double threshold);

struct SampleScore {
  std::string id;
  double dice = 0, iou = 0, mae = 0;
};

struct EvalReport {
  std::string dataset;
  std::string tag;
  std::vector<SampleScore> per_sample;  // ordered by id
  double mdice = 0, miou = 0, mae = 0;
};

/// Scores a model over loaded samples: inputs resized to the model size,
/// predictions upsampled back to the original mask resolution, dice/iou on
/// maps binarized at `threshold`, mae on the continuous map.
EvalReport evaluate_samples(const PolypSesModel<float>& model, const std::vector<SegSample>& samples,
                            double threshold, const std::string& dataset_name, const std::string& tag);

EvalReport evaluate_dataset(const PolypSesModel<float>& model, const std::string& dataset_dir,
                            double threshold = 0.5, const std::string& tag = "");

/// CSV rows "id,dice,iou,mae".
void write_report_csv(const EvalReport& report, const std::string& path);

/// Text table in the mDice / mIoU / MAE column layout.
std::string report_table(const EvalReport& report);

}  // namespace pses
