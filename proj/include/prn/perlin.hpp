#pragma once

#include <stdexcept>

#include "prn/rng.hpp"
#include "prn/tensor.hpp"

namespace prn {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PerlinConfig {
  int octaves = 4;
  double persistence = 0.5;
  int period = 8;         // base lattice spacing in pixels; halves per octave
  double threshold = 0.5; // applied after min-max normalization
  int retries = 20;       // fresh-noise attempts before giving up
};

// One octave of gradient lattice noise, roughly in [-1, 1].
MatXf perlin_noise(int h, int w, int period, Rng& rng);

// Octave sum with geometric amplitudes, min-max normalized to [0, 1]
// (all-zero when the field is constant).
MatXf fractal_noise(int h, int w, const PerlinConfig& cfg, Rng& rng);

// Binary mask: normalized fractal noise thresholded, intersected with
// `allowed`. Retries with fresh noise while the intersection is empty and
// throws GenerationError when the budget runs out.
MatXf perlin_mask(int h, int w, const MatXf& allowed, const PerlinConfig& cfg, Rng& rng);

}  // namespace prn
