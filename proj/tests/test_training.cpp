#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "prn/config.hpp"
#include "prn/loss.hpp"
#include "prn/pipeline.hpp"
#include "prn/rng.hpp"

using namespace prn;

namespace {

Tensor3f make_image(int size, std::uint64_t seed) {
  Rng rng(seed);
  const double theta = rng.uniform(0.0, 3.14159);
  const double freq = rng.uniform(2.0, 4.0);
  const double phase = rng.uniform(0.0, 6.28318);
  Tensor3f img(3, size, size);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double t = (std::cos(theta) * x + std::sin(theta) * y) / size;
        const double v = 0.5 + 0.35 * std::sin(2.0 * 3.14159 * freq * t + phase + 0.3 * c);
        img.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  return img;
}

// In-memory dataset: banded normals, two seen anomalies (bright square with a
// matching mask), two foreign textures.
LoadedDataset make_dataset(int size) {
  LoadedDataset data;
  for (int i = 0; i < 8; ++i) data.train_normals.push_back(make_image(size, 100 + i));
  for (int i = 0; i < 2; ++i) {
    Tensor3f img = make_image(size, 100 + i);
    MatXf mask = MatXf::Zero(size, size);
    const int lo = size / 4, hi = size / 2;
    for (int y = lo; y < hi; ++y)
      for (int x = lo; x < hi; ++x) {
        mask(y, x) = 1.0f;
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = std::min(1.0f, img.at(c, y, x) + 0.4f);
      }
    data.seen.emplace_back(std::move(img), std::move(mask));
  }
  data.textures.push_back(make_image(size, 900));
  data.textures.push_back(make_image(size, 901));
  return data;
}

PipelineConfig tiny_config() {
  PipelineConfig cfg;
  cfg.model.encoder.input_size = 32;
  cfg.model.encoder.channels = {4, 8, 16};
  cfg.model.proto_ratio = 0.25;
  cfg.model.msa_depth = 1;
  cfg.train.batch = 4;
  cfg.train.steps = 40;
  cfg.train.seed = 9;
  return cfg;
}

int count_kind(const std::vector<TrainSample>& batch, AnomalyKind kind) {
  int n = 0;
  for (const auto& s : batch)
    if (s.anomalous && s.kind == kind) ++n;
  return n;
}

}  // namespace

TEST_CASE("batch plans split half the batch 2:1:1 across anomaly kinds") {
  BatchPlan p16 = plan_batch(16, true, true, true);
  CHECK(p16.normals == 8);
  CHECK(p16.extended == 4);
  CHECK(p16.texture == 2);
  CHECK(p16.shuffle == 2);

  BatchPlan p64 = plan_batch(64, true, true, true);
  CHECK(p64.normals == 32);
  CHECK(p64.extended == 16);
  CHECK(p64.texture == 8);
  CHECK(p64.shuffle == 8);

  // Every plan covers the batch exactly.
  for (int batch : {1, 2, 3, 4, 5, 7, 16, 33, 64})
    for (int bits = 0; bits < 8; ++bits) {
      BatchPlan p = plan_batch(batch, bits & 1, bits & 2, bits & 4);
      CHECK(p.normals + p.extended + p.texture + p.shuffle == batch);
      CHECK(p.normals >= (batch + 1) / 2);  // anomalies never exceed half
    }
}

TEST_CASE("disabled anomaly kinds hand their slots to the remaining kinds") {
  BatchPlan none = plan_batch(16, false, false, false);
  CHECK(none.normals == 16);
  CHECK(none.extended + none.texture + none.shuffle == 0);

  BatchPlan only_ext = plan_batch(16, true, false, false);
  CHECK(only_ext.normals == 8);
  CHECK(only_ext.extended == 8);

  BatchPlan no_ext = plan_batch(16, false, true, true);
  CHECK(no_ext.normals == 8);
  CHECK(no_ext.extended == 0);
  CHECK(no_ext.texture == 4);
  CHECK(no_ext.shuffle == 4);

  BatchPlan no_tex = plan_batch(16, true, false, true);
  CHECK(no_tex.extended == 4);
  CHECK(no_tex.texture == 0);
  CHECK(no_tex.shuffle == 4);

  CHECK_THROWS_AS(plan_batch(0, true, true, true), std::invalid_argument);
}

TEST_CASE("assembled batches honor the plan and carry valid targets") {
  LoadedDataset data = make_dataset(32);
  PipelineConfig cfg = tiny_config();
  cfg.train.batch = 16;
  Rng rng(21);
  std::vector<TrainSample> batch = assemble_batch(data, cfg, rng);
  REQUIRE(batch.size() == 16);

  int normals = 0;
  for (const auto& s : batch) {
    CHECK(s.image.channels() == 3);
    CHECK(s.image.h == 32);
    CHECK(s.target.rows() == 32);
    CHECK(((s.target.array() == 0.0f) || (s.target.array() == 1.0f)).all());
    if (!s.anomalous) {
      ++normals;
      CHECK(s.target.sum() == 0.0f);
    } else {
      CHECK(s.target.sum() > 0.0f);
      CHECK(s.beta >= cfg.synth.beta_min);
      CHECK(s.beta <= cfg.synth.beta_max);
    }
    CHECK(s.base_index >= 0);
    CHECK(s.base_index < static_cast<int>(data.train_normals.size()));
  }
  CHECK(normals == 8);
  CHECK(count_kind(batch, AnomalyKind::kExtended) == 4);
  CHECK(count_kind(batch, AnomalyKind::kTexture) == 2);
  CHECK(count_kind(batch, AnomalyKind::kShuffle) == 2);
}

TEST_CASE("missing sources quietly fold their kinds back into the mix") {
  PipelineConfig cfg = tiny_config();
  cfg.train.batch = 16;

  // No seen anomalies: the transplant slots go to the simulated kinds.
  LoadedDataset no_seen = make_dataset(32);
  no_seen.seen.clear();
  Rng r1(3);
  std::vector<TrainSample> batch = assemble_batch(no_seen, cfg, r1);
  CHECK(count_kind(batch, AnomalyKind::kExtended) == 0);
  CHECK(count_kind(batch, AnomalyKind::kTexture) == 4);
  CHECK(count_kind(batch, AnomalyKind::kShuffle) == 4);

  // No texture pool: its slots fall to the other kinds.
  LoadedDataset no_tex = make_dataset(32);
  no_tex.textures.clear();
  Rng r2(3);
  batch = assemble_batch(no_tex, cfg, r2);
  CHECK(count_kind(batch, AnomalyKind::kTexture) == 0);
  CHECK(count_kind(batch, AnomalyKind::kExtended) == 4);
  CHECK(count_kind(batch, AnomalyKind::kShuffle) == 4);

  // No normals at all is an error.
  LoadedDataset empty;
  Rng r3(3);
  CHECK_THROWS_AS(assemble_batch(empty, cfg, r3), TrainingError);
}

TEST_CASE("batch assembly is deterministic in the generator state") {
  LoadedDataset data = make_dataset(32);
  PipelineConfig cfg = tiny_config();
  Rng r1(77), r2(77), r3(78);
  std::vector<TrainSample> a = assemble_batch(data, cfg, r1);
  std::vector<TrainSample> b = assemble_batch(data, cfg, r2);
  std::vector<TrainSample> c = assemble_batch(data, cfg, r3);
  REQUIRE(a.size() == b.size());
  bool same = true, other_same = true;
  for (size_t i = 0; i < a.size(); ++i) {
    if (!(a[i].image.data.array() == b[i].image.data.array()).all()) same = false;
    if (!(a[i].target.array() == b[i].target.array()).all()) same = false;
    if (!(a[i].image.data.array() == c[i].image.data.array()).all()) other_same = false;
  }
  CHECK(same);
  CHECK_FALSE(other_same);
}

TEST_CASE("a short run drives the training loss down") {
  LoadedDataset data = make_dataset(32);
  PipelineConfig cfg = tiny_config();
  PrnModel<float> model = build_model(cfg, data);

  std::ostringstream log;
  TrainResult result = train_model(model, data, cfg, &log);
  REQUIRE(result.steps.size() == static_cast<size_t>(cfg.train.steps));

  // Window-averaged: mean of the first ten steps against the last ten.
  auto window_mean = [&](size_t begin, size_t end) {
    double sum = 0.0;
    for (size_t i = begin; i < end; ++i) sum += result.steps[i].total;
    return sum / static_cast<double>(end - begin);
  };
  const double head = window_mean(0, 10);
  const double tail = window_mean(result.steps.size() - 10, result.steps.size());
  CAPTURE(head);
  CAPTURE(tail);
  CHECK(tail < head);

  for (size_t i = 0; i < result.steps.size(); ++i) {
    CHECK(result.steps[i].step == static_cast<int>(i) + 1);
    CHECK(std::isfinite(result.steps[i].total));
    CHECK(result.steps[i].total >= 0.0);
    CHECK(result.steps[i].wall_ms >= 0.0);
  }

  // One log line per step, each carrying the step's loss.
  std::istringstream lines(log.str());
  std::string line;
  int n_lines = 0;
  while (std::getline(lines, line)) {
    CHECK(line.find("\"step\":") != std::string::npos);
    CHECK(line.find("\"loss\":") != std::string::npos);
    ++n_lines;
  }
  CHECK(n_lines == cfg.train.steps);
}

TEST_CASE("one optimizer step leaves a gradient in every trainable stage") {
  LoadedDataset data = make_dataset(32);
  PipelineConfig cfg = tiny_config();
  PrnModel<float> model = build_model(cfg, data);

  auto params = model.trainable_params();
  for (auto& p : params)
    for (Eigen::Index i = 0; i < p.size; ++i) p.grad[i] = 0.0f;

  Rng rng(4);
  std::vector<TrainSample> batch = assemble_batch(data, cfg, rng);
  for (const TrainSample& sample : batch) {
    PrnForwardCtx<float> ctx;
    ScoreMap<float> out = model.forward(sample.image, &ctx, true);
    MatXf gmap;
    total_loss(out.map, sample.target, 0.5f, 4.0f, 5.0f, &gmap);
    model.backward(ctx, gmap);
  }

  bool fusion = false, attention = false, decoder = false;
  for (const auto& p : params) {
    float asum = 0.0f;
    for (Eigen::Index i = 0; i < p.size; ++i) asum += std::abs(p.grad[i]);
    if (asum == 0.0f) continue;
    if (p.name.rfind("fuse_", 0) == 0) fusion = true;
    if (p.name.rfind("msa", 0) == 0) attention = true;
    if (p.name.rfind("decoder", 0) == 0) decoder = true;
  }
  CHECK(fusion);
  CHECK(attention);
  CHECK(decoder);
}

TEST_CASE("zero steps is a no-op run") {
  LoadedDataset data = make_dataset(32);
  PipelineConfig cfg = tiny_config();
  cfg.train.steps = 0;
  PrnModel<float> model = build_model(cfg, data);
  TrainResult result = train_model(model, data, cfg, nullptr);
  CHECK(result.steps.empty());
}
