#include "prn/perlin.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace prn {

namespace {

inline double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

}  // namespace

MatXf perlin_noise(int h, int w, int period, Rng& rng) {
  if (h < 1 || w < 1 || period < 1) throw std::invalid_argument("perlin_noise: bad dimensions");
  const int gy = h / period + 2;
  const int gx = w / period + 2;
  // Unit gradients at lattice nodes, drawn row-major.
  std::vector<double> grad_x(static_cast<std::size_t>(gy) * gx), grad_y(grad_x.size());
  for (std::size_t i = 0; i < grad_x.size(); ++i) {
    const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
    grad_x[i] = std::cos(ang);
    grad_y[i] = std::sin(ang);
  }
  auto gxat = [&](int iy, int ix) { return grad_x[static_cast<std::size_t>(iy) * gx + ix]; };
  auto gyat = [&](int iy, int ix) { return grad_y[static_cast<std::size_t>(iy) * gx + ix]; };

  MatXf out(h, w);
  for (int y = 0; y < h; ++y) {
    const double v = (y + 0.5) / period;
    const int iy = static_cast<int>(v);
    const double fy = v - iy;
    const double uy = fade(fy);
    for (int x = 0; x < w; ++x) {
      const double u = (x + 0.5) / period;
      const int ix = static_cast<int>(u);
      const double fx = u - ix;
      const double ux = fade(fx);
      const double d00 = gxat(iy, ix) * fx + gyat(iy, ix) * fy;
      const double d01 = gxat(iy, ix + 1) * (fx - 1.0) + gyat(iy, ix + 1) * fy;
      const double d10 = gxat(iy + 1, ix) * fx + gyat(iy + 1, ix) * (fy - 1.0);
      const double d11 = gxat(iy + 1, ix + 1) * (fx - 1.0) + gyat(iy + 1, ix + 1) * (fy - 1.0);
      const double top = d00 + ux * (d01 - d00);
      const double bot = d10 + ux * (d11 - d10);
      out(y, x) = static_cast<float>(top + uy * (bot - top));
    }
  }
  return out;
}

MatXf fractal_noise(int h, int w, const PerlinConfig& cfg, Rng& rng) {
  if (cfg.octaves < 1) throw std::invalid_argument("fractal_noise: octaves must be >= 1");
  MatXf sum = MatXf::Zero(h, w);
  double amp = 1.0;
  int period = cfg.period;
  for (int o = 0; o < cfg.octaves; ++o) {
    sum += static_cast<float>(amp) * perlin_noise(h, w, std::max(1, period), rng);
    amp *= cfg.persistence;
    period /= 2;
  }
  const float lo = sum.minCoeff();
  const float hi = sum.maxCoeff();
  if (hi - lo < 1e-12f) return MatXf::Zero(h, w);
  return (sum.array() - lo) / (hi - lo);
}

MatXf perlin_mask(int h, int w, const MatXf& allowed, const PerlinConfig& cfg, Rng& rng) {
  if (allowed.rows() != h || allowed.cols() != w)
    throw std::invalid_argument("perlin_mask: allowed-region shape mismatch");
  for (int attempt = 0; attempt < cfg.retries; ++attempt) {
    MatXf noise = fractal_noise(h, w, cfg, rng);
    MatXf mask = ((noise.array() >= static_cast<float>(cfg.threshold)) &&
                  (allowed.array() > 0.5f))
                     .cast<float>();
    if (mask.sum() > 0.0f) return mask;
  }
  throw GenerationError("perlin_mask: no non-empty mask within " + std::to_string(cfg.retries) +
                        " attempts");
}

}  // namespace prn
