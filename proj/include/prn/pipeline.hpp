#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "prn/config.hpp"
#include "prn/dataset.hpp"
#include "prn/metrics.hpp"
#include "prn/model.hpp"

namespace prn {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainSample {
  Tensor3f image;
  MatXf target;  // binary mask; all zeros for normals
  bool anomalous = false;
  AnomalyKind kind = AnomalyKind::kExtended;  // meaningful when anomalous
  float beta = 0.0f;
  int base_index = -1;  // which training normal the sample was built from
};

// Per-batch quota of each sample kind: half the batch is normal, the rest is
// split evenly between transplanted defects and noise-masked defects (the
// latter again evenly between texture and shuffle sources). Disabled or
// unavailable kinds hand their slots to the remaining ones; with no anomaly
// source enabled the whole batch is normal.
struct BatchPlan {
  int normals = 0;
  int extended = 0;
  int texture = 0;
  int shuffle = 0;
};

BatchPlan plan_batch(int batch, bool extended_on, bool texture_on, bool shuffle_on);

std::vector<TrainSample> assemble_batch(const LoadedDataset& data, const PipelineConfig& cfg,
                                        Rng& rng);

struct StepLog {
  int step = 0;
  double total = 0.0;
  double smooth_l1 = 0.0;
  double focal = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  std::vector<StepLog> steps;
};

// Initialize the network and fit the prototype bank on the training normals.
PrnModel<float> build_model(const PipelineConfig& cfg, const LoadedDataset& data);

// Optimize the trainable stages. Emits one structured log line per step to
// `log` when given; throws TrainingError (with the step and batch manifest)
// if the loss turns non-finite.
TrainResult train_model(PrnModel<float>& model, const LoadedDataset& data,
                        const PipelineConfig& cfg, std::ostream* log);

struct ImageResult {
  std::string path;
  std::string defect;
  int label = 0;
  double score = 0.0;
};

struct EvalOutput {
  EvalReport report;
  std::vector<ImageResult> per_image;
};

EvalOutput evaluate_model(PrnModel<float>& model, const LoadedDataset& data);

// Persist the model together with its config snapshot; load rebuilds the
// model (including prototype-bank shapes) from the container alone.
void save_model(const std::string& path, PrnModel<float>& model, const PipelineConfig& cfg);
PrnModel<float> load_model(const std::string& path, PipelineConfig* cfg_out = nullptr);

}  // namespace prn
