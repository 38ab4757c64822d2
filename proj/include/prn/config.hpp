#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "prn/adam.hpp"
#include "prn/model.hpp"
#include "prn/synth.hpp"

namespace prn {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int steps = 200;
  int batch = 16;
  AdamHyper adam;
  double focal_alpha = 0.5;
  double focal_gamma = 4.0;
  double loss_lambda = 5.0;  // weight of the focal term next to smooth-L1
  std::uint64_t seed = 0;
};

// Everything the train/eval/score commands need, JSON round-trippable.
// Precedence is defaults < config file < command-line flags.
struct PipelineConfig {
  ModelConfig model;
  SynthConfig synth;
  TrainConfig train;
  bool use_extended = true;  // defects transplanted from seen anomalies
  bool use_texture = true;   // defects sourced from the texture pool
  bool use_shuffle = true;   // defects sourced from grid-shuffled normals
  int n_seen = 10;           // anomalous test images moved into training

  void validate() const;
};

// Apply a flat JSON object of overrides onto `base`; unknown keys are errors.
PipelineConfig config_from_json(const std::string& text, PipelineConfig base = {});

// Full canonical snapshot (sorted keys; parseable by config_from_json).
std::string config_to_json(const PipelineConfig& cfg);

PipelineConfig load_config_file(const std::string& path, PipelineConfig base = {});

}  // namespace prn
