#include "pses/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "pses/ops.hpp"

namespace pses {

namespace {
void check_binary_pair(const Tensor<float>& pred, const Tensor<float>& gt, const char* op) {
  if (!same_shape(pred.shape(), gt.shape())) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(pred.shape()) + " vs " +
                     shape_str(gt.shape()));
  }
  for (const Tensor<float>* t : {&pred, &gt}) {
    for (int64_t i = 0; i < t->numel(); ++i) {
      const float v = t->data()[i];
      if (v != 0.0f && v != 1.0f) throw ContractError(std::string(op) + ": maps must be {0,1}-valued");
    }
  }
}
}  // namespace

double dice(const Tensor<float>& pred, const Tensor<float>& gt) {
  check_binary_pair(pred, gt, "dice");
  int64_t inter = 0, p = 0, g = 0;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    const bool pv = pred.data()[i] != 0.0f;
    const bool gv = gt.data()[i] != 0.0f;
    inter += pv && gv;
    p += pv;
    g += gv;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(p + g);
}

double iou(const Tensor<float>& pred, const Tensor<float>& gt) {
  check_binary_pair(pred, gt, "iou");
  int64_t inter = 0, uni = 0;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    const bool pv = pred.data()[i] != 0.0f;
    const bool gv = gt.data()[i] != 0.0f;
    inter += pv && gv;
    uni += pv || gv;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double mae(const Tensor<float>& pred, const Tensor<float>& gt) {
  if (!same_shape(pred.shape(), gt.shape())) {
    throw ShapeError("mae: shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(gt.shape()));
  }
  double acc = 0.0;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    acc += std::abs(static_cast<double>(pred.data()[i]) - static_cast<double>(gt.data()[i]));
  }
  return acc / static_cast<double>(pred.numel());
}

Tensor<float> binarize(const Tensor<float>& map, double threshold) {
  Tensor<float> out = Tensor<float>::zeros_like(map);
  for (int64_t i = 0; i < map.numel(); ++i) {
    out.data()[i] = map.data()[i] >= static_cast<float>(threshold) ? 1.0f : 0.0f;
  }
  return out;
}

EvalReport evaluate_samples(const PolypSesModel<float>& model, const std::vector<SegSample>& samples,
                            double threshold, const std::string& dataset_name, const std::string& tag) {
  const EncoderConfig& ec = model.config().encoder;
  EvalReport report;
  report.dataset = dataset_name;
  report.tag = tag;
  double sd = 0, si = 0, sm = 0;
  for (const SegSample& s : samples) {
    Tensor<float> input = bilinear_resize(s.image, ec.input_h, ec.input_w);
    Tensor<float> pred = model.predict(input, s.mask.extent(2), s.mask.extent(3));
    SampleScore score;
    score.id = s.id;
    score.dice = dice(binarize(pred, threshold), s.mask);
    score.iou = iou(binarize(pred, threshold), s.mask);
    score.mae = mae(pred, s.mask);
    sd += score.dice;
    si += score.iou;
    sm += score.mae;
    report.per_sample.push_back(score);
  }
  if (!report.per_sample.empty()) {
    const double n = static_cast<double>(report.per_sample.size());
    report.mdice = sd / n;
    report.miou = si / n;
    report.mae = sm / n;
  }
  return report;
}

EvalReport evaluate_dataset(const PolypSesModel<float>& model, const std::string& dataset_dir,
                            double threshold, const std::string& tag) {
  Dataset ds = load_dataset(dataset_dir);
  return evaluate_samples(model, ds.samples, threshold, dataset_dir, tag);
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IngestionError("cannot write report: " + path);
  os << "id,dice,iou,mae\n";
  char buf[160];
  for (const SampleScore& s : report.per_sample) {
    std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g,%.10g\n", s.id.c_str(), s.dice, s.iou, s.mae);
    os << buf;
  }
}

std::string report_table(const EvalReport& report) {
  char buf[256];
  std::string out = "Dataset";
  if (!report.tag.empty()) out += " [" + report.tag + "]";
  out += ": " + report.dataset + "\n";
  out += "          mDice↑   mIoU↑    MAE↓\n";
  std::snprintf(buf, sizeof(buf), "%-8s  %.3f    %.3f    %.3f\n", "result",
                report.mdice, report.miou, report.mae);
  out += buf;
  std::snprintf(buf, sizeof(buf), "samples: %zu\n", report.per_sample.size());
  out += buf;
  return out;
}

}  // namespace pses
