#include "prn/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace prn {

void PipelineConfig::validate() const {
  model.encoder.validate();
  if (!(model.proto_ratio > 0.0) || model.proto_ratio > 1.0)
    throw ConfigError("proto_ratio must be in (0, 1]");
  if (model.kmeans_max_iter < 1) throw ConfigError("kmeans_max_iter must be positive");
  if (model.msa_depth < 0) throw ConfigError("msa_depth must be non-negative");
  if (model.embed_cap < 1) throw ConfigError("embed_cap must be positive");
  if (model.top_k < 0) throw ConfigError("top_k must be non-negative (0 = auto)");
  if (model.head_gain <= 0.0) throw ConfigError("head_gain must be positive");
  if (!(synth.beta_min >= 0.0 && synth.beta_min < synth.beta_max && synth.beta_max <= 1.0))
    throw ConfigError("need 0 <= beta_min < beta_max <= 1");
  if (!(synth.target_area.min_frac > 0.0 && synth.target_area.min_frac < synth.target_area.max_frac &&
        synth.target_area.max_frac <= 1.0))
    throw ConfigError("need 0 < ta_min_frac < ta_max_frac <= 1");
  if (synth.target_area.attempts < 1) throw ConfigError("ta_attempts must be positive");
  if (synth.perlin.octaves < 1) throw ConfigError("perlin_octaves must be positive");
  if (synth.perlin.period < 1) throw ConfigError("perlin_period must be positive");
  if (synth.perlin.retries < 1) throw ConfigError("perlin_retries must be positive");
  if (synth.warp_attempts < 1) throw ConfigError("warp_attempts must be positive");
  if (synth.grid < 1 || model.encoder.input_size % synth.grid != 0)
    throw ConfigError("shuffle_grid must divide the input size");
  if (train.steps < 0) throw ConfigError("steps must be non-negative");
  if (train.batch < 1) throw ConfigError("batch must be positive");
  if (!(train.adam.lr > 0.0)) throw ConfigError("lr must be positive");
  if (train.adam.weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (!(train.focal_alpha > 0.0 && train.focal_alpha < 1.0))
    throw ConfigError("focal_alpha must be in (0, 1)");
  if (train.focal_gamma < 0.0) throw ConfigError("focal_gamma must be non-negative");
  if (train.loss_lambda < 0.0) throw ConfigError("loss_lambda must be non-negative");
  if (n_seen < 0) throw ConfigError("n_seen must be non-negative");
}

namespace {

ResidualKind parse_residual(const std::string& s) {
  if (s == "abs") return ResidualKind::kAbs;
  if (s == "squared") return ResidualKind::kSquared;
  throw ConfigError("residual must be abs|squared, got '" + s + "'");
}

void apply_key(PipelineConfig& cfg, const std::string& key, const nlohmann::json& v) {
  try {
    if (key == "input_size") cfg.model.encoder.input_size = v.get<int>();
    else if (key == "channels") {
      const auto c = v.get<std::vector<int>>();
      if (c.size() != 3) throw ConfigError("channels must have exactly 3 entries");
      cfg.model.encoder.channels = {c[0], c[1], c[2]};
    } else if (key == "proto_ratio") cfg.model.proto_ratio = v.get<double>();
    else if (key == "kmeans_max_iter") cfg.model.kmeans_max_iter = v.get<int>();
    else if (key == "residual") cfg.model.residual_kind = parse_residual(v.get<std::string>());
    else if (key == "msa_depth") cfg.model.msa_depth = v.get<int>();
    else if (key == "embed_cap") cfg.model.embed_cap = v.get<int>();
    else if (key == "head_bias") cfg.model.head_bias = v.get<double>();
    else if (key == "head_gain") cfg.model.head_gain = v.get<double>();
    else if (key == "top_k") cfg.model.top_k = v.get<int>();
    else if (key == "use_mp") cfg.model.toggles.mp = v.get<bool>();
    else if (key == "use_msa") cfg.model.toggles.msa = v.get<bool>();
    else if (key == "use_mf") cfg.model.toggles.mf = v.get<bool>();
    else if (key == "dataset_kind") {
      try {
        cfg.synth.dataset_kind = parse_dataset_kind(v.get<std::string>());
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
    else if (key == "beta_min") cfg.synth.beta_min = v.get<double>();
    else if (key == "beta_max") cfg.synth.beta_max = v.get<double>();
    else if (key == "use_target_area") cfg.synth.use_target_area = v.get<bool>();
    else if (key == "ta_min_frac") cfg.synth.target_area.min_frac = v.get<double>();
    else if (key == "ta_max_frac") cfg.synth.target_area.max_frac = v.get<double>();
    else if (key == "ta_attempts") cfg.synth.target_area.attempts = v.get<int>();
    else if (key == "perlin_octaves") cfg.synth.perlin.octaves = v.get<int>();
    else if (key == "perlin_persistence") cfg.synth.perlin.persistence = v.get<double>();
    else if (key == "perlin_period") cfg.synth.perlin.period = v.get<int>();
    else if (key == "perlin_threshold") cfg.synth.perlin.threshold = v.get<double>();
    else if (key == "perlin_retries") cfg.synth.perlin.retries = v.get<int>();
    else if (key == "warp_attempts") cfg.synth.warp_attempts = v.get<int>();
    else if (key == "shuffle_grid") cfg.synth.grid = v.get<int>();
    else if (key == "steps") cfg.train.steps = v.get<int>();
    else if (key == "batch") cfg.train.batch = v.get<int>();
    else if (key == "lr") cfg.train.adam.lr = v.get<double>();
    else if (key == "weight_decay") cfg.train.adam.weight_decay = v.get<double>();
    else if (key == "adam_beta1") cfg.train.adam.beta1 = v.get<double>();
    else if (key == "adam_beta2") cfg.train.adam.beta2 = v.get<double>();
    else if (key == "adam_eps") cfg.train.adam.eps = v.get<double>();
    else if (key == "focal_alpha") cfg.train.focal_alpha = v.get<double>();
    else if (key == "focal_gamma") cfg.train.focal_gamma = v.get<double>();
    else if (key == "loss_lambda") cfg.train.loss_lambda = v.get<double>();
    else if (key == "seed") cfg.train.seed = v.get<std::uint64_t>();
    else if (key == "use_extended") cfg.use_extended = v.get<bool>();
    else if (key == "use_texture") cfg.use_texture = v.get<bool>();
    else if (key == "use_shuffle") cfg.use_shuffle = v.get<bool>();
    else if (key == "n_seen") cfg.n_seen = v.get<int>();
    else throw ConfigError("unknown config key '" + key + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

}  // namespace

PipelineConfig config_from_json(const std::string& text, PipelineConfig base) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  for (const auto& [key, value] : j.items()) apply_key(base, key, value);
  return base;
}

std::string config_to_json(const PipelineConfig& cfg) {
  nlohmann::json j;
  j["input_size"] = cfg.model.encoder.input_size;
  j["channels"] = cfg.model.encoder.channels;
  j["proto_ratio"] = cfg.model.proto_ratio;
  j["kmeans_max_iter"] = cfg.model.kmeans_max_iter;
  j["residual"] = cfg.model.residual_kind == ResidualKind::kAbs ? "abs" : "squared";
  j["msa_depth"] = cfg.model.msa_depth;
  j["embed_cap"] = cfg.model.embed_cap;
  j["head_bias"] = cfg.model.head_bias;
  j["head_gain"] = cfg.model.head_gain;
  j["top_k"] = cfg.model.top_k;
  j["use_mp"] = cfg.model.toggles.mp;
  j["use_msa"] = cfg.model.toggles.msa;
  j["use_mf"] = cfg.model.toggles.mf;
  j["dataset_kind"] = to_string(cfg.synth.dataset_kind);
  j["beta_min"] = cfg.synth.beta_min;
  j["beta_max"] = cfg.synth.beta_max;
  j["use_target_area"] = cfg.synth.use_target_area;
  j["ta_min_frac"] = cfg.synth.target_area.min_frac;
  j["ta_max_frac"] = cfg.synth.target_area.max_frac;
  j["ta_attempts"] = cfg.synth.target_area.attempts;
  j["perlin_octaves"] = cfg.synth.perlin.octaves;
  j["perlin_persistence"] = cfg.synth.perlin.persistence;
  j["perlin_period"] = cfg.synth.perlin.period;
  j["perlin_threshold"] = cfg.synth.perlin.threshold;
  j["perlin_retries"] = cfg.synth.perlin.retries;
  j["warp_attempts"] = cfg.synth.warp_attempts;
  j["shuffle_grid"] = cfg.synth.grid;
  j["steps"] = cfg.train.steps;
  j["batch"] = cfg.train.batch;
  j["lr"] = cfg.train.adam.lr;
  j["weight_decay"] = cfg.train.adam.weight_decay;
  j["adam_beta1"] = cfg.train.adam.beta1;
  j["adam_beta2"] = cfg.train.adam.beta2;
  j["adam_eps"] = cfg.train.adam.eps;
  j["focal_alpha"] = cfg.train.focal_alpha;
  j["focal_gamma"] = cfg.train.focal_gamma;
  j["loss_lambda"] = cfg.train.loss_lambda;
  j["seed"] = cfg.train.seed;
  j["use_extended"] = cfg.use_extended;
  j["use_texture"] = cfg.use_texture;
  j["use_shuffle"] = cfg.use_shuffle;
  j["n_seen"] = cfg.n_seen;
  return j.dump(2);
}

PipelineConfig load_config_file(const std::string& path, PipelineConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str(), std::move(base));
}

}  // namespace prn
