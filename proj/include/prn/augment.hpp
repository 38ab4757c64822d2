#pragma once

#include <utility>
#include <vector>

#include "prn/rng.hpp"
#include "prn/tensor.hpp"

namespace prn {

enum class PhotometricOp {
  kEqualize,
  kSolarize,
  kPosterize,
  kSharpness,
  kAutoContrast,
  kInvert,
  kGamma,
};

inline constexpr int kNumPhotometricOps = 7;

// Apply one photometric op; any parameters it needs are drawn from `rng`
// (solarize threshold U[64,192]/255, posterize 3-6 bits, sharpness factor
// U[0.5,2], gamma U[0.7,1.5]). Input and output are 3-channel floats in [0,1].
Tensor3f apply_photometric(const Tensor3f& img, PhotometricOp op, Rng& rng);

// Two distinct photometric ops, sampled without replacement, applied in the
// sampled order.
Tensor3f photometric_pair(const Tensor3f& img, Rng& rng);

// Spatial transform about the image center: rotation U[-45deg,45deg], shear
// U[-0.2,0.2] on both axes, translation U[-0.25,0.25] of each dimension.
struct Affine2d {
  double m00 = 1, m01 = 0, m10 = 0, m11 = 1;  // linear part (output <- source)
  double tx = 0, ty = 0;                      // translation in pixels
};

Affine2d sample_spatial_affine(int h, int w, Rng& rng);

// Nearest-neighbor warp of an image and its mask through the same affine.
// Pixels mapping outside the source are 0 in both outputs.
std::pair<Tensor3f, MatXf> warp_nearest(const Tensor3f& img, const MatXf& mask, const Affine2d& fwd);

// Partition into grid x grid cells and permute them.
Tensor3f grid_shuffle_perm(const Tensor3f& img, int grid, const std::vector<int>& perm);
Tensor3f grid_shuffle(const Tensor3f& img, int grid, Rng& rng);

}  // namespace prn
