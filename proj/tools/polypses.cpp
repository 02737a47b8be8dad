// Command-line frontend: train, evaluate, infer, dump feature maps.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <unordered_map>

#include <CLI11.hpp>
#include <json.hpp>

#include "pses/checkpoint.hpp"
#include "pses/dataset.hpp"
#include "pses/image_io.hpp"
#include "pses/metrics.hpp"
#include "pses/model.hpp"
#include "pses/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;
constexpr int kExitCheckpoint = 3;

struct CliOptions {
  std::string config_path;
  std::string data_dir;
  std::string out_dir;
  std::string checkpoint_path;
  std::string image_path;
  uint64_t seed = 0;
  bool seed_set = false;
  bool no_ses = false;
  bool no_lgsf = false;
  std::string backbone = "caformer";
  double threshold = 0.5;
};

struct RunSettings {
  pses::ModelConfig model;
  pses::TrainConfig train;
  uint64_t config_hash = 0;
};

uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

RunSettings load_settings(const CliOptions& opt) {
  RunSettings s;
  std::string raw = "{}";
  if (!opt.config_path.empty()) {
    std::ifstream is(opt.config_path);
    if (!is) throw pses::IngestionError("cannot read config: " + opt.config_path);
    raw.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
  }
  s.config_hash = fnv1a64(raw);
  json j = json::parse(raw);

  if (j.contains("model")) {
    const json& m = j["model"];
    if (m.contains("input_size")) {
      s.model.encoder.input_h = m["input_size"][0];
      s.model.encoder.input_w = m["input_size"][1];
    }
    if (m.contains("stage_channels")) {
      for (int i = 0; i < 4; ++i) s.model.encoder.stage_channels[i] = m["stage_channels"][i];
    }
    if (m.contains("blocks_per_stage")) {
      for (int i = 0; i < 4; ++i) s.model.encoder.blocks_per_stage[i] = m["blocks_per_stage"][i];
    }
    if (m.contains("attention_heads")) s.model.encoder.attention_heads = m["attention_heads"];
    if (m.contains("patch_size")) s.model.partition.patch_size = m["patch_size"];
    if (m.contains("tau_lo")) s.model.partition.tau_lo = m["tau_lo"];
    if (m.contains("tau_hi")) s.model.partition.tau_hi = m["tau_hi"];
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    if (t.contains("batch_size")) s.train.batch_size = t["batch_size"];
    if (t.contains("epochs")) s.train.epochs = t["epochs"];
    if (t.contains("base_lr")) s.train.base_lr = t["base_lr"];
    if (t.contains("lr_decay_rate")) s.train.lr_decay_rate = t["lr_decay_rate"];
    if (t.contains("weight_decay")) s.train.weight_decay = t["weight_decay"];
    if (t.contains("beta1")) s.train.beta1 = t["beta1"];
    if (t.contains("beta2")) s.train.beta2 = t["beta2"];
    if (t.contains("adam_eps")) s.train.adam_eps = t["adam_eps"];
    if (t.contains("seed")) s.train.seed = t["seed"];
    if (t.contains("decay_epoch")) s.train.decay_epoch = t["decay_epoch"];
    if (t.contains("supervision_weights")) {
      for (int i = 0; i < 4; ++i) s.train.supervision_weights[i] = t["supervision_weights"][i];
    }
    if (t.contains("loss_window")) s.train.loss_window = t["loss_window"];
    if (t.contains("loss_boundary_factor")) s.train.loss_boundary_factor = t["loss_boundary_factor"];
    if (t.contains("checkpoint_every")) s.train.checkpoint_every = t["checkpoint_every"];
    if (t.contains("threshold")) s.train.threshold = t["threshold"];
  }

  s.model.use_ses = !opt.no_ses;
  s.model.use_lgsf = !opt.no_lgsf;
  s.model.backbone_tag = opt.backbone;
  if (opt.seed_set) s.train.seed = opt.seed;
  s.train.image_h = s.model.encoder.input_h;
  s.train.image_w = s.model.encoder.input_w;
  s.train.threshold = opt.threshold;
  return s;
}

void write_manifest(const fs::path& path, const CliOptions& opt, const RunSettings& s) {
  json m;
  m["seed"] = s.train.seed;
  m["flags"]["no_ses"] = opt.no_ses;
  m["flags"]["no_lgsf"] = opt.no_lgsf;
  m["flags"]["backbone"] = opt.backbone;
  m["flags"]["threshold"] = opt.threshold;
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(s.config_hash));
  m["config_hash"] = hash;
  std::ofstream os(path);
  os << m.dump(2) << "\n";
}

std::string ablation_tag(const CliOptions& opt) {
  std::string tag = opt.backbone;
  if (opt.no_ses && opt.no_lgsf) tag += " w/o SES, LGSF";
  else if (opt.no_ses) tag += " w/o SES";
  else if (opt.no_lgsf) tag += " w/o LGSF";
  return tag;
}

int cmd_train(const CliOptions& opt) {
  RunSettings s = load_settings(opt);
  pses::Dataset ds = pses::load_dataset(opt.data_dir);
  pses::PolypSesModel<float> model(s.model, s.train.seed);
  pses::Trainer trainer(model, ds, s.train);

  fs::create_directories(opt.out_dir);
  write_manifest(fs::path(opt.out_dir) / "manifest.json", opt, s);

  while (trainer.epoch() < s.train.epochs) {
    pses::EpochStats st = trainer.run_epoch();
    std::cout << "epoch " << st.epoch << " loss " << st.loss << " mdice " << st.mdice << " lr " << st.lr
              << "\n";
    if (st.epoch % s.train.checkpoint_every == 0 && st.epoch != s.train.epochs) {
      trainer.save((fs::path(opt.out_dir) / ("checkpoint_epoch" + std::to_string(st.epoch) + ".pses")).string());
    }
  }
  trainer.save((fs::path(opt.out_dir) / "checkpoint_final.pses").string());
  pses::write_history_csv(trainer.history(), (fs::path(opt.out_dir) / "metrics.csv").string());
  return kExitOk;
}

pses::PolypSesModel<float> load_model(const CliOptions& opt, const RunSettings& s) {
  pses::PolypSesModel<float> model(s.model, s.train.seed);
  // Training checkpoints carry optimizer state alongside the model tensors;
  // ignore everything that is not part of the model here.
  auto entries = pses::load_checkpoint(opt.checkpoint_path);
  std::unordered_map<std::string, pses::Tensor<float>> by_name;
  for (auto& [name, tensor] : entries) by_name.emplace(name, tensor);
  for (const pses::NamedTensor<float>& nt : model.named_state()) {
    auto it = by_name.find(nt.name);
    if (it == by_name.end()) throw pses::CheckpointError("checkpoint is missing tensor '" + nt.name + "'");
    if (!pses::same_shape(it->second.shape(), nt.tensor.shape())) {
      throw pses::CheckpointError("checkpoint tensor '" + nt.name + "' has shape " +
                                  pses::shape_str(it->second.shape()) + ", model expects " +
                                  pses::shape_str(nt.tensor.shape()));
    }
    pses::Tensor<float> dst = nt.tensor;
    std::copy(it->second.data(), it->second.data() + it->second.numel(), dst.data());
  }
  return model;
}

int cmd_eval(const CliOptions& opt) {
  RunSettings s = load_settings(opt);
  pses::PolypSesModel<float> model = load_model(opt, s);
  pses::EvalReport report = pses::evaluate_dataset(model, opt.data_dir, opt.threshold, ablation_tag(opt));
  fs::path out(opt.out_dir);
  fs::create_directories(out);
  pses::write_report_csv(report, (out / "report.csv").string());
  std::ofstream table(out / "report.txt");
  table << pses::report_table(report);
  std::cout << pses::report_table(report);
  return kExitOk;
}

int cmd_infer(const CliOptions& opt) {
  RunSettings s = load_settings(opt);
  pses::PolypSesModel<float> model = load_model(opt, s);
  pses::Tensor<float> image = pses::load_image_rgb(opt.image_path);
  const int64_t oh = image.extent(2), ow = image.extent(3);
  pses::Tensor<float> input = pses::bilinear_resize(image, s.model.encoder.input_h, s.model.encoder.input_w);
  pses::Tensor<float> pred = model.predict(input, oh, ow);

  fs::path out(opt.out_dir.empty() ? "mask.png" : opt.out_dir);
  fs::path out_bin = out.parent_path() / (out.stem().string() + "_bin" + out.extension().string());
  pses::save_gray_png(out.string(), pred);
  pses::save_gray_png(out_bin.string(), pses::binarize(pred, opt.threshold));
  return kExitOk;
}

int cmd_dump(const CliOptions& opt) {
  RunSettings s = load_settings(opt);
  pses::PolypSesModel<float> model = load_model(opt, s);
  pses::Tensor<float> image = pses::load_image_rgb(opt.image_path);
  pses::Tensor<float> input = pses::bilinear_resize(image, s.model.encoder.input_h, s.model.encoder.input_w);
  pses::ForwardTrace<float> trace = model.forward_traced(input, false);

  fs::path out(opt.out_dir);
  fs::create_directories(out);
  json manifest;
  auto dump_map = [&](const std::string& name, const pses::Tensor<float>& map) {
    const std::string file = name + ".png";
    pses::save_gray_png((out / file).string(), pses::min_max_normalize(map));
    manifest[name] = file;
  };
  dump_map("f2_pre", pses::feature_magnitude(trace.pyramid.f2));
  dump_map("f2_post", pses::feature_magnitude(trace.post2));
  dump_map("f3_pre", pses::feature_magnitude(trace.pyramid.f3));
  dump_map("f3_post", pses::feature_magnitude(trace.post3));
  dump_map("f4_pre", pses::feature_magnitude(trace.pyramid.f4));
  dump_map("f4_post", pses::feature_magnitude(trace.post4));
  dump_map("m_initial", trace.outputs.m_initial);
  if (trace.outputs.partition.has_value()) {
    dump_map("s1", trace.outputs.partition->s1_mask);
    dump_map("s2", trace.outputs.partition->s2_mask);
    dump_map("m1", trace.outputs.m1);
    dump_map("m2", trace.outputs.m2);
  }
  dump_map("m", trace.outputs.m);
  std::ofstream mf(out / "manifest.json");
  mf << manifest.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Polyp segmentation with self-enriched semantics"};
  app.require_subcommand(1);

  CliOptions opt;
  auto add_common = [&](CLI::App* cmd, bool with_data, bool with_image) {
    cmd->add_option("--config", opt.config_path, "JSON config file");
    if (with_data) cmd->add_option("--data", opt.data_dir, "dataset directory")->required();
    if (with_image) cmd->add_option("--image", opt.image_path, "input image")->required();
    cmd->add_option("--out", opt.out_dir, "output directory or file");
    cmd->add_option("--seed", opt.seed, "random seed")->each([&](const std::string&) { opt.seed_set = true; });
    cmd->add_flag("--no-ses", opt.no_ses, "disable the semantic-enrichment module");
    cmd->add_flag("--no-lgsf", opt.no_lgsf, "replace LGSF blocks with plain 3x3 convolutions");
    cmd->add_option("--backbone", opt.backbone, "backbone tag recorded in reports");
    cmd->add_option("--threshold", opt.threshold, "binarization threshold");
  };

  CLI::App* train = app.add_subcommand("train", "train a model");
  add_common(train, true, false);
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  add_common(eval, true, false);
  eval->add_option("--checkpoint", opt.checkpoint_path, "model checkpoint")->required();
  CLI::App* infer = app.add_subcommand("infer", "segment a single image");
  add_common(infer, false, true);
  infer->add_option("--checkpoint", opt.checkpoint_path, "model checkpoint")->required();
  CLI::App* dump = app.add_subcommand("dump", "export intermediate feature maps");
  add_common(dump, false, true);
  dump->add_option("--checkpoint", opt.checkpoint_path, "model checkpoint")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(opt);
    if (eval->parsed()) return cmd_eval(opt);
    if (infer->parsed()) return cmd_infer(opt);
    if (dump->parsed()) return cmd_dump(opt);
  } catch (const pses::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const pses::IngestionError& e) {
    std::cerr << "ingestion error: " << e.what() << "\n";
    return kExitInput;
  } catch (const pses::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
