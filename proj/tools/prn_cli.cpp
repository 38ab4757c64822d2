#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "prn/config.hpp"
#include "prn/dataset.hpp"
#include "prn/image_io.hpp"
#include "prn/pipeline.hpp"

namespace fs = std::filesystem;
using namespace prn;

namespace {

// Flag overrides applied on top of defaults and any --config file.
struct Overrides {
  CLI::Option* opt = nullptr;
  std::function<void(PipelineConfig&)> apply;
};

class ConfigFlags {
 public:
  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path_, "JSON config file (flags override its values)");
    add(cmd->add_option("--seed", seed_, "master RNG seed"),
        [this](PipelineConfig& c) { c.train.seed = seed_; });
    add(cmd->add_option("--steps", steps_, "optimizer steps"),
        [this](PipelineConfig& c) { c.train.steps = steps_; });
    add(cmd->add_option("--batch", batch_, "samples per step"),
        [this](PipelineConfig& c) { c.train.batch = batch_; });
    add(cmd->add_option("--lr", lr_, "learning rate"),
        [this](PipelineConfig& c) { c.train.adam.lr = lr_; });
    add(cmd->add_option("--weight-decay", wd_, "L2 weight decay"),
        [this](PipelineConfig& c) { c.train.adam.weight_decay = wd_; });
    add(cmd->add_option("--n-seen", n_seen_, "anomalous test images moved into training"),
        [this](PipelineConfig& c) { c.n_seen = n_seen_; });
    add(cmd->add_option("--input-size", input_size_, "working resolution (multiple of 32)"),
        [this](PipelineConfig& c) { c.model.encoder.input_size = input_size_; });
    add(cmd->add_option("--channels", channels_, "encoder channels per scale")->expected(3),
        [this](PipelineConfig& c) {
          c.model.encoder.channels = {channels_[0], channels_[1], channels_[2]};
        });
    add(cmd->add_option("--proto-ratio", proto_ratio_, "prototypes per training normal"),
        [this](PipelineConfig& c) { c.model.proto_ratio = proto_ratio_; });
    add(cmd->add_option("--top-k", top_k_, "pixels averaged into the image score (0 = auto)"),
        [this](PipelineConfig& c) { c.model.top_k = top_k_; });
    add(cmd->add_option("--dataset-kind", dataset_kind_, "object|texture")
            ->check(CLI::IsMember({"object", "texture"})),
        [this](PipelineConfig& c) { c.synth.dataset_kind = parse_dataset_kind(dataset_kind_); });
    add(cmd->add_flag("--mp,!--no-mp", mp_, "prototype residual branch"),
        [this](PipelineConfig& c) { c.model.toggles.mp = mp_; });
    add(cmd->add_flag("--msa,!--no-msa", msa_, "self-attention stacks"),
        [this](PipelineConfig& c) { c.model.toggles.msa = msa_; });
    add(cmd->add_flag("--mf,!--no-mf", mf_, "cross-scale fusion"),
        [this](PipelineConfig& c) { c.model.toggles.mf = mf_; });
    add(cmd->add_flag("--extended,!--no-extended", ea_, "defects transplanted from seen anomalies"),
        [this](PipelineConfig& c) { c.use_extended = ea_; });
    add(cmd->add_flag("--texture,!--no-texture", hea_, "defects sourced from the texture pool"),
        [this](PipelineConfig& c) { c.use_texture = hea_; });
    add(cmd->add_flag("--shuffle,!--no-shuffle", hoa_, "defects from grid-shuffled normals"),
        [this](PipelineConfig& c) { c.use_shuffle = hoa_; });
    add(cmd->add_flag("--target-area,!--no-target-area", ta_, "confine defects to a sampled region"),
        [this](PipelineConfig& c) { c.synth.use_target_area = ta_; });
  }

  // defaults (or `base`) < config file < flags.
  PipelineConfig resolve(PipelineConfig base = {}) const {
    PipelineConfig cfg =
        config_path_.empty() ? std::move(base) : load_config_file(config_path_, std::move(base));
    for (const auto& o : overrides_)
      if (o.opt->count() > 0) o.apply(cfg);
    cfg.validate();
    return cfg;
  }

 private:
  void add(CLI::Option* opt, std::function<void(PipelineConfig&)> apply) {
    overrides_.push_back({opt, std::move(apply)});
  }

  std::string config_path_;
  std::vector<Overrides> overrides_;
  std::uint64_t seed_ = 0;
  int steps_ = 0, batch_ = 0, n_seen_ = 0, input_size_ = 0, top_k_ = 0;
  double lr_ = 0, wd_ = 0, proto_ratio_ = 0;
  std::vector<int> channels_;
  std::string dataset_kind_;
  bool mp_ = true, msa_ = true, mf_ = true, ea_ = true, hea_ = true, hoa_ = true, ta_ = true;
};

std::string report_json(const EvalReport& r) {
  nlohmann::json j;
  j["image_auroc"] = r.image_auroc;
  j["pixel_auroc"] = r.pixel_auroc;
  j["pixel_ap"] = r.pixel_ap;
  j["pro"] = r.pro;
  j["n_images"] = r.n_images;
  j["n_anomalous"] = r.n_anomalous;
  j["anomalous_pixel_rate"] = r.anomalous_pixel_rate;
  return j.dump(2);
}

void write_scores_csv(const std::string& path, const std::vector<ImageResult>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "path,defect,label,score\n";
  for (const auto& r : rows) out << r.path << "," << r.defect << "," << r.label << "," << r.score << "\n";
}

int run_synth_samples(const std::string& data_root, const std::string& category, int samples,
                      const std::string& out_dir, const PipelineConfig& cfg) {
  const DatasetIndex index = index_dataset(data_root, category, cfg.n_seen, cfg.train.seed);
  const LoadedDataset data = load_dataset(index, cfg.model.encoder.input_size);
  if (data.train_normals.empty()) throw DatasetError("no training normals to build samples from");
  fs::create_directories(out_dir);

  Rng master = Rng(cfg.train.seed).split("synth_samples");
  std::vector<AnomalyKind> kinds;
  if (cfg.use_extended && !data.seen.empty()) kinds.push_back(AnomalyKind::kExtended);
  if (cfg.use_texture && !data.textures.empty()) kinds.push_back(AnomalyKind::kTexture);
  if (cfg.use_shuffle) kinds.push_back(AnomalyKind::kShuffle);
  if (kinds.empty()) throw DatasetError("no anomaly kind is enabled or available");

  for (int i = 0; i < samples; ++i) {
    const std::uint64_t sample_seed = static_cast<std::uint64_t>(i);
    Rng rng = master.split(sample_seed);
    const AnomalyKind kind = kinds[static_cast<std::size_t>(i) % kinds.size()];
    const auto base_idx = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(data.train_normals.size()) - 1));
    const Tensor3f& normal = data.train_normals[base_idx];
    const float beta = static_cast<float>(rng.uniform(cfg.synth.beta_min, cfg.synth.beta_max));

    AnomalySample sample;
    if (kind == AnomalyKind::kExtended) {
      const auto& [seen_img, seen_mask] = data.seen[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(data.seen.size()) - 1))];
      sample = extended_anomaly(normal, seen_img, seen_mask, cfg.synth, beta, rng);
    } else {
      sample = simulated_anomaly(normal, kind, data.textures, cfg.synth, beta, rng);
    }
    sample.seed = sample_seed;

    char stem[32];
    std::snprintf(stem, sizeof(stem), "sample_%03d", i);
    const std::string image_path = (fs::path(out_dir) / (std::string(stem) + ".png")).generic_string();
    const std::string mask_path =
        (fs::path(out_dir) / (std::string(stem) + "_mask.png")).generic_string();
    save_image(image_path, sample.image);
    save_gray(mask_path, sample.mask);

    nlohmann::json line;
    line["index"] = i;
    line["kind"] = to_string(sample.kind);
    line["beta"] = sample.beta;
    line["seed"] = sample.seed;
    line["image"] = image_path;
    line["mask"] = mask_path;
    std::cout << line.dump() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Residual-learning anomaly detector: dataset synthesis, training, evaluation, scoring"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate a procedural dataset or anomaly samples");
  std::string synth_out = "data";
  int n_normal = 40, n_test_normal = 20, n_test_anomalous = 20, resolution = 32, samples = 0;
  std::string synth_data_root, synth_category = "synthetic";
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--n-normal", n_normal, "training normals to generate");
  synth->add_option("--n-test-normal", n_test_normal, "normal test images");
  synth->add_option("--n-test-anomalous", n_test_anomalous, "anomalous test images");
  synth->add_option("--resolution", resolution, "image side in pixels");
  synth->add_option("--samples", samples,
                    "instead of a dataset, write this many synthetic anomaly samples");
  synth->add_option("--data", synth_data_root, "dataset root (samples mode)");
  synth->add_option("--category", synth_category, "dataset category (samples mode)");
  ConfigFlags synth_flags;
  synth_flags.attach(synth);

  // ---- train ----
  auto* train = app.add_subcommand("train", "fit prototypes and train the scoring network");
  std::string train_data, train_category = "synthetic", train_ckpt = "model.ckpt";
  train->add_option("--data", train_data, "dataset root")->required();
  train->add_option("--category", train_category, "dataset category");
  train->add_option("--checkpoint", train_ckpt, "checkpoint file to write");
  ConfigFlags train_flags;
  train_flags.attach(train);

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "score an evaluation split and report metrics");
  std::string eval_data, eval_category = "synthetic", eval_ckpt, eval_csv, eval_report;
  eval->add_option("--data", eval_data, "dataset root")->required();
  eval->add_option("--category", eval_category, "dataset category");
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file to load")->required();
  eval->add_option("--csv", eval_csv, "write per-image scores to this CSV file");
  eval->add_option("--report", eval_report, "also write the JSON report to this file");
  ConfigFlags eval_flags;
  eval_flags.attach(eval);

  // ---- score ----
  auto* score = app.add_subcommand("score", "score one image and write its heatmap");
  std::string score_ckpt, score_image, score_out;
  score->add_option("--checkpoint", score_ckpt, "checkpoint file to load")->required();
  score->add_option("--image", score_image, "input PNG")->required();
  score->add_option("--out", score_out, "heatmap PNG to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      if (samples > 0) {
        const std::string root = synth_data_root.empty() ? synth_out : synth_data_root;
        return run_synth_samples(root, synth_category, samples, synth_out,
                                 synth_flags.resolve());
      }
      const PipelineConfig cfg = synth_flags.resolve();
      const std::string root = generate_synthetic_dataset(synth_out, n_normal, n_test_normal,
                                                          n_test_anomalous, resolution,
                                                          cfg.train.seed);
      std::cout << root << "\n";
      return 0;
    }

    if (train->parsed()) {
      const PipelineConfig cfg = train_flags.resolve();
      const DatasetIndex index = index_dataset(train_data, train_category, cfg.n_seen, cfg.train.seed);
      const LoadedDataset data = load_dataset(index, cfg.model.encoder.input_size);
      PrnModel<float> model = build_model(cfg, data);
      train_model(model, data, cfg, &std::cout);
      save_model(train_ckpt, model, cfg);
      std::cout << "{\"checkpoint\":\"" << train_ckpt << "\"}\n";
      return 0;
    }

    if (eval->parsed()) {
      PipelineConfig stored;
      PrnModel<float> model = load_model(eval_ckpt, &stored);
      const PipelineConfig cfg = eval_flags.resolve(stored);
      model.cfg.top_k = cfg.model.top_k;  // scoring knob may be overridden at eval time
      const DatasetIndex index = index_dataset(eval_data, eval_category, cfg.n_seen, cfg.train.seed);
      const LoadedDataset data = load_dataset(index, cfg.model.encoder.input_size);
      const EvalOutput out = evaluate_model(model, data);
      const std::string text = report_json(out.report);
      std::cout << text << "\n";
      if (!eval_csv.empty()) write_scores_csv(eval_csv, out.per_image);
      if (!eval_report.empty()) {
        std::ofstream f(eval_report);
        if (!f) throw std::runtime_error("cannot open " + eval_report + " for writing");
        f << text << "\n";
      }
      return 0;
    }

    if (score->parsed()) {
      PipelineConfig stored;
      PrnModel<float> model = load_model(score_ckpt, &stored);
      const Tensor3f image = load_image(score_image, stored.model.encoder.input_size);
      const ScoreMap<float> result = model.forward(image, nullptr, /*train=*/false);
      if (!score_out.empty()) save_gray(score_out, result.map);
      std::printf("%.6f\n", static_cast<double>(result.score));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
