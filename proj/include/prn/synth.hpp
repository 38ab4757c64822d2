#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prn/augment.hpp"
#include "prn/perlin.hpp"
#include "prn/rng.hpp"
#include "prn/tensor.hpp"

namespace prn {

enum class DatasetKind { kObject, kTexture };

const char* to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(const std::string& name);

enum class TargetShape { kCircle, kRectangle, kPolygon };

// How a synthetic defect's content was produced:
//  - kExtended: an augmented copy of a real defect transplanted onto a normal image;
//  - kTexture:  a foreign texture image pasted under a noise-shaped mask;
//  - kShuffle:  a grid-scrambled copy of the normal image pasted under a noise-shaped mask.
enum class AnomalyKind { kExtended, kTexture, kShuffle };

const char* to_string(AnomalyKind kind);

// Region of the image where synthetic defects may be placed. For object
// datasets it is confined to the estimated foreground; for texture datasets
// anywhere in the frame is allowed.
struct TargetArea {
  MatXf mask;  // binary {0,1}, h x w
  TargetShape shape = TargetShape::kCircle;
  DatasetKind dataset = DatasetKind::kObject;
  // Set when the area had to fall back to the whole allowed region: either
  // foreground estimation found nothing, or no sampled shape met the area
  // bounds within the attempt budget.
  bool fallback = false;
};

struct TargetAreaConfig {
  double min_frac = 0.02;  // accepted area as a fraction of the full frame
  double max_frac = 0.40;
  int attempts = 20;
};

struct SynthConfig {
  DatasetKind dataset_kind = DatasetKind::kTexture;
  double beta_min = 0.2;  // per-sample blend opacity range
  double beta_max = 0.9;
  bool use_target_area = true;  // off: defects may be placed anywhere in the frame
  TargetAreaConfig target_area;
  PerlinConfig perlin;
  int warp_attempts = 20;  // spatial-warp retries for extended anomalies
  int grid = 8;            // cell grid for the self-shuffle source
};

struct AnomalySample {
  Tensor3f image;  // (3, H, W) in [0,1]
  MatXf mask;      // binary {0,1}, H x W, nonempty
  AnomalyKind kind = AnomalyKind::kExtended;
  float beta = 0.0f;
  std::uint64_t seed = 0;  // stream seed recorded by the caller
};

// Binary foreground estimate for object images: Otsu split on the gray mean
// (the side that dominates the image border is treated as background),
// largest 8-connected component, then a 5x5 morphological closing. Returns an
// all-zero mask when no stable split exists (e.g. constant images).
MatXf estimate_foreground(const Tensor3f& image);

TargetArea full_frame_target(int h, int w, DatasetKind kind);

// Sample a placement region: one random shape (circle, axis-aligned
// rectangle, or star polygon) intersected with the allowed region, accepted
// when its area fraction lies within [min_frac, max_frac]. Exhausting the
// attempt budget, or an empty foreground estimate, falls back to the whole
// allowed region with `fallback` set.
TargetArea sample_target_area(const Tensor3f& normal, DatasetKind kind, const TargetAreaConfig& cfg,
                              Rng& rng);

// Blend a defect source into a normal image: outside the mask the output is
// the normal image bit-for-bit; inside it is (1-beta)*source + beta*normal.
Tensor3f composite_anomaly(const Tensor3f& normal, const Tensor3f& source, const MatXf& mask, float beta);

// Transplant a real defect: photometrically augment the seen defect image,
// spatially warp it jointly with its mask, and composite the part of the
// warped mask that lands inside a sampled target area. The warp is retried
// until that overlap is nonempty; a GenerationError is thrown when the
// attempt budget runs out. `ta_override` (optional) replaces the sampled
// target area, for tests and callers that reuse one.
AnomalySample extended_anomaly(const Tensor3f& normal, const Tensor3f& seen_image, const MatXf& seen_mask,
                               const SynthConfig& cfg, float beta, Rng& rng,
                               const TargetArea* ta_override = nullptr);

// Paint a defect under a fractal-noise mask confined to a target area. The
// source is either a photometrically augmented texture image (kTexture;
// requires a nonempty pool) or a grid-shuffled augmented copy of the normal
// image itself (kShuffle).
AnomalySample simulated_anomaly(const Tensor3f& normal, AnomalyKind kind,
                                const std::vector<Tensor3f>& texture_pool, const SynthConfig& cfg,
                                float beta, Rng& rng, const TargetArea* ta_override = nullptr);

}  // namespace prn
