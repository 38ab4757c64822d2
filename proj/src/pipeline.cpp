#include "prn/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <sstream>

#include "prn/adam.hpp"
#include "prn/checkpoint.hpp"
#include "prn/loss.hpp"

namespace prn {

BatchPlan plan_batch(int batch, bool extended_on, bool texture_on, bool shuffle_on) {
  if (batch < 1) throw std::invalid_argument("plan_batch: batch must be positive");
  BatchPlan plan;
  const bool any_anomaly = extended_on || texture_on || shuffle_on;
  const int slots = any_anomaly ? batch / 2 : 0;
  plan.normals = batch - slots;

  int noise_slots = 0;
  if (extended_on && (texture_on || shuffle_on)) {
    plan.extended = (slots + 1) / 2;
    noise_slots = slots - plan.extended;
  } else if (extended_on) {
    plan.extended = slots;
  } else {
    noise_slots = slots;
  }
  if (texture_on && shuffle_on) {
    plan.texture = (noise_slots + 1) / 2;
    plan.shuffle = noise_slots - plan.texture;
  } else if (texture_on) {
    plan.texture = noise_slots;
  } else if (shuffle_on) {
    plan.shuffle = noise_slots;
  }
  return plan;
}

namespace {

TrainSample make_normal(const LoadedDataset& data, Rng& rng) {
  TrainSample s;
  s.base_index = static_cast<int>(
      rng.uniform_int(0, static_cast<std::int64_t>(data.train_normals.size()) - 1));
  s.image = data.train_normals[static_cast<std::size_t>(s.base_index)];
  s.target = MatXf::Zero(s.image.h, s.image.w);
  return s;
}

TrainSample make_extended(const LoadedDataset& data, const PipelineConfig& cfg, Rng& rng) {
  constexpr int kSeenResamples = 8;
  TrainSample s;
  s.anomalous = true;
  s.kind = AnomalyKind::kExtended;
  s.base_index = static_cast<int>(
      rng.uniform_int(0, static_cast<std::int64_t>(data.train_normals.size()) - 1));
  const Tensor3f& normal = data.train_normals[static_cast<std::size_t>(s.base_index)];
  for (int attempt = 0; attempt < kSeenResamples; ++attempt) {
    const auto& [seen_img, seen_mask] = data.seen[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(data.seen.size()) - 1))];
    const float beta = static_cast<float>(rng.uniform(cfg.synth.beta_min, cfg.synth.beta_max));
    try {
      AnomalySample a = extended_anomaly(normal, seen_img, seen_mask, cfg.synth, beta, rng);
      s.image = std::move(a.image);
      s.target = std::move(a.mask);
      s.beta = beta;
      return s;
    } catch (const GenerationError&) {
      if (attempt + 1 == kSeenResamples) throw;
    }
  }
  throw GenerationError("make_extended: unreachable");
}

TrainSample make_simulated(const LoadedDataset& data, const PipelineConfig& cfg, AnomalyKind kind,
                           Rng& rng) {
  TrainSample s;
  s.anomalous = true;
  s.kind = kind;
  s.base_index = static_cast<int>(
      rng.uniform_int(0, static_cast<std::int64_t>(data.train_normals.size()) - 1));
  const Tensor3f& normal = data.train_normals[static_cast<std::size_t>(s.base_index)];
  const float beta = static_cast<float>(rng.uniform(cfg.synth.beta_min, cfg.synth.beta_max));
  AnomalySample a = simulated_anomaly(normal, kind, data.textures, cfg.synth, beta, rng);
  s.image = std::move(a.image);
  s.target = std::move(a.mask);
  s.beta = beta;
  return s;
}

std::string batch_manifest(const std::vector<TrainSample>& batch) {
  std::ostringstream out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i];
    out << (i ? " " : "") << "[" << i << ":"
        << (s.anomalous ? to_string(s.kind) : "normal") << " base=" << s.base_index;
    if (s.anomalous) out << " beta=" << s.beta;
    out << "]";
  }
  return out.str();
}

}  // namespace

std::vector<TrainSample> assemble_batch(const LoadedDataset& data, const PipelineConfig& cfg,
                                        Rng& rng) {
  if (data.train_normals.empty())
    throw TrainingError("assemble_batch: no training normals loaded");
  const bool extended_on = cfg.use_extended && !data.seen.empty();
  const bool texture_on = cfg.use_texture && !data.textures.empty();
  const bool shuffle_on = cfg.use_shuffle;
  const BatchPlan plan = plan_batch(cfg.train.batch, extended_on, texture_on, shuffle_on);

  std::vector<TrainSample> batch;
  batch.reserve(static_cast<std::size_t>(cfg.train.batch));
  for (int i = 0; i < plan.normals; ++i) batch.push_back(make_normal(data, rng));
  for (int i = 0; i < plan.extended; ++i) batch.push_back(make_extended(data, cfg, rng));
  for (int i = 0; i < plan.texture; ++i)
    batch.push_back(make_simulated(data, cfg, AnomalyKind::kTexture, rng));
  for (int i = 0; i < plan.shuffle; ++i)
    batch.push_back(make_simulated(data, cfg, AnomalyKind::kShuffle, rng));
  return batch;
}

PrnModel<float> build_model(const PipelineConfig& cfg, const LoadedDataset& data) {
  cfg.validate();
  PrnModel<float> model;
  model.init(cfg.model, cfg.train.seed);
  if (cfg.model.toggles.mp) {
    if (data.train_normals.empty())
      throw TrainingError("build_model: prototype fitting needs training normals");
    std::vector<FeaturePyramid<float>> feats;
    feats.reserve(data.train_normals.size());
    for (const auto& img : data.train_normals) feats.push_back(model.encoder.extract(img));
    const std::uint64_t proto_seed = Rng(cfg.train.seed).split("prototypes").next_u64();
    model.set_bank(fit_prototypes(feats, cfg.model.proto_ratio, cfg.model.kmeans_max_iter,
                                  proto_seed, cfg.model.residual_kind));
  }
  return model;
}

TrainResult train_model(PrnModel<float>& model, const LoadedDataset& data,
                        const PipelineConfig& cfg, std::ostream* log) {
  using clock = std::chrono::steady_clock;
  Adam<float> opt(model.trainable_params(), cfg.train.adam);
  Rng train_rng = Rng(cfg.train.seed).split("train");

  TrainResult result;
  result.steps.reserve(static_cast<std::size_t>(cfg.train.steps));
  const auto alpha = static_cast<float>(cfg.train.focal_alpha);
  const auto gamma = static_cast<float>(cfg.train.focal_gamma);
  const auto lambda = static_cast<float>(cfg.train.loss_lambda);

  for (int step = 1; step <= cfg.train.steps; ++step) {
    const auto t0 = clock::now();
    Rng step_rng = train_rng.split(static_cast<std::uint64_t>(step));
    const std::vector<TrainSample> batch = assemble_batch(data, cfg, step_rng);

    opt.zero_grad();
    double sum_total = 0.0, sum_sl1 = 0.0, sum_focal = 0.0;
    const float inv_batch = 1.0f / static_cast<float>(batch.size());
    for (const TrainSample& sample : batch) {
      PrnForwardCtx<float> ctx;
      const ScoreMap<float> out = model.forward(sample.image, &ctx, /*train=*/true);
      MatXf gmap;
      const LossTerms<float> terms =
          total_loss(out.map, sample.target, alpha, gamma, lambda, &gmap);
      sum_total += terms.total;
      sum_sl1 += terms.smooth_l1;
      sum_focal += terms.focal;
      gmap *= inv_batch;
      model.backward(ctx, gmap);
    }
    const double denom = static_cast<double>(batch.size());
    StepLog entry;
    entry.step = step;
    entry.total = sum_total / denom;
    entry.smooth_l1 = sum_sl1 / denom;
    entry.focal = sum_focal / denom;

    if (!std::isfinite(entry.total))
      throw TrainingError("train_model: non-finite loss at step " + std::to_string(step) +
                          "; batch " + batch_manifest(batch));
    opt.step();

    entry.wall_ms =
        std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(clock::now() - t0)
            .count();
    result.steps.push_back(entry);
    if (log)
      *log << "{\"step\":" << entry.step << ",\"loss\":" << entry.total
           << ",\"smooth_l1\":" << entry.smooth_l1 << ",\"focal\":" << entry.focal
           << ",\"wall_ms\":" << entry.wall_ms << "}\n";
  }
  return result;
}

EvalOutput evaluate_model(PrnModel<float>& model, const LoadedDataset& data) {
  if (data.eval.empty()) throw TrainingError("evaluate_model: empty evaluation split");
  EvalOutput out;
  std::vector<double> image_scores;
  std::vector<int> image_labels;
  std::vector<double> pixel_scores;
  std::vector<int> pixel_labels;
  std::vector<MatXf> maps, masks;
  long anomalous_pixels = 0, total_pixels = 0;

  for (const EvalCase& c : data.eval) {
    const ScoreMap<float> s = model.forward(c.image, nullptr, /*train=*/false);
    ImageResult r;
    r.path = c.path;
    r.defect = c.defect;
    r.label = c.label;
    r.score = s.score;
    out.per_image.push_back(std::move(r));
    image_scores.push_back(s.score);
    image_labels.push_back(c.label);
    for (Eigen::Index i = 0; i < s.map.size(); ++i) {
      pixel_scores.push_back(s.map.data()[i]);
      pixel_labels.push_back(c.mask.data()[i] > 0.5f ? 1 : 0);
    }
    anomalous_pixels += (c.mask.array() > 0.5f).count();
    total_pixels += c.mask.size();
    maps.push_back(s.map);
    masks.push_back(c.mask);
    if (c.label) out.report.n_anomalous++;
  }
  out.report.n_images = static_cast<int>(data.eval.size());
  out.report.anomalous_pixel_rate =
      static_cast<double>(anomalous_pixels) / static_cast<double>(total_pixels);
  out.report.image_auroc = roc_auc(image_scores, image_labels);
  out.report.pixel_auroc = roc_auc(pixel_scores, pixel_labels);
  out.report.pixel_ap = average_precision(pixel_scores, pixel_labels);
  out.report.pro = pro_score(maps, masks);
  return out;
}

void save_model(const std::string& path, PrnModel<float>& model, const PipelineConfig& cfg) {
  save_checkpoint(path, model.all_arrays(), config_to_json(cfg));
}

PrnModel<float> load_model(const std::string& path, PipelineConfig* cfg_out) {
  const CheckpointData data = load_checkpoint(path);
  const PipelineConfig cfg = config_from_json(data.config_json);
  cfg.validate();

  PrnModel<float> model;
  model.init(cfg.model, cfg.train.seed);
  if (cfg.model.toggles.mp) {
    // Size the bank from the stored records so restore can fill it.
    PrototypeBank<float> bank;
    bank.residual_kind = cfg.model.residual_kind;
    for (int j = 0; j < 3; ++j) {
      const std::string name = "prototypes.scale" + std::to_string(j + 1);
      const auto it = std::find_if(data.arrays.begin(), data.arrays.end(),
                                   [&](const ArrayRecord& a) { return a.name == name; });
      if (it == data.arrays.end())
        throw CheckpointError("load_model: checkpoint lacks prototype array '" + name + "'");
      if (it->shape.size() != 4)
        throw CheckpointError("load_model: prototype array '" + name + "' is not 4-dimensional");
      auto& sc = bank.scales[static_cast<std::size_t>(j)];
      sc.protos.resize(it->shape[0], it->shape[1] * it->shape[2] * it->shape[3]);
      sc.c = static_cast<int>(it->shape[1]);
      sc.h = static_cast<int>(it->shape[2]);
      sc.w = static_cast<int>(it->shape[3]);
    }
    model.set_bank(std::move(bank));
  }
  restore_arrays(data, model.all_arrays());
  if (cfg_out) *cfg_out = cfg;
  return model;
}

}  // namespace prn
