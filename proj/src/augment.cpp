#include "prn/augment.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace prn {

namespace {

inline float clamp01(float v) { return std::min(std::max(v, 0.0f), 1.0f); }

inline int to_byte(float v) {
  return std::min(std::max(static_cast<int>(std::lround(clamp01(v) * 255.0f)), 0), 255);
}

Tensor3f equalize(const Tensor3f& img) {
  Tensor3f out = img;
  const Eigen::Index n = img.data.cols();
  for (int c = 0; c < 3; ++c) {
    std::array<long, 256> hist{};
    for (Eigen::Index i = 0; i < n; ++i) hist[static_cast<std::size_t>(to_byte(img.data(c, i)))]++;
    std::array<long, 256> cdf{};
    long run = 0;
    long cdf_min = -1;
    for (int b = 0; b < 256; ++b) {
      run += hist[static_cast<std::size_t>(b)];
      cdf[static_cast<std::size_t>(b)] = run;
      if (cdf_min < 0 && hist[static_cast<std::size_t>(b)] > 0) cdf_min = run;
    }
    if (cdf_min < 0 || cdf_min == n) continue;  // empty or constant channel: untouched
    const double denom = static_cast<double>(n - cdf_min);
    for (Eigen::Index i = 0; i < n; ++i) {
      const long cv = cdf[static_cast<std::size_t>(to_byte(img.data(c, i)))];
      out.data(c, i) = static_cast<float>((cv - cdf_min) / denom);
    }
  }
  return out;
}

Tensor3f solarize(const Tensor3f& img, float threshold) {
  Tensor3f out = img;
  out.data = (img.data.array() > threshold).select(1.0f - img.data.array(), img.data.array());
  return out;
}

Tensor3f posterize(const Tensor3f& img, int bits) {
  Tensor3f out = img;
  const int keep_mask = 0xFF & ~((1 << (8 - bits)) - 1);
  for (Eigen::Index i = 0; i < img.data.size(); ++i) {
    const int b = to_byte(img.data.data()[i]) & keep_mask;
    out.data.data()[i] = static_cast<float>(b) / 255.0f;
  }
  return out;
}

Tensor3f sharpness(const Tensor3f& img, float factor) {
  // Edge-clamped 3x3 box blur, then blend: out = blur + factor * (img - blur).
  Tensor3f blur(3, img.h, img.w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) {
        float acc = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = std::min(std::max(y + dy, 0), img.h - 1);
            const int xx = std::min(std::max(x + dx, 0), img.w - 1);
            acc += img.at(c, yy, xx);
          }
        blur.at(c, y, x) = acc / 9.0f;
      }
  Tensor3f out = img;
  out.data = blur.data + factor * (img.data - blur.data);
  out.data = out.data.cwiseMax(0.0f).cwiseMin(1.0f);
  return out;
}

Tensor3f auto_contrast(const Tensor3f& img) {
  Tensor3f out = img;
  for (int c = 0; c < 3; ++c) {
    const float lo = img.data.row(c).minCoeff();
    const float hi = img.data.row(c).maxCoeff();
    if (hi - lo < 1e-6f) continue;
    out.data.row(c) = (img.data.row(c).array() - lo) / (hi - lo);
  }
  return out;
}

Tensor3f invert(const Tensor3f& img) {
  Tensor3f out = img;
  out.data = 1.0f - img.data.array();
  return out;
}

Tensor3f gamma_contrast(const Tensor3f& img, float g) {
  Tensor3f out = img;
  out.data = img.data.array().max(0.0f).pow(g);
  return out;
}

}  // namespace

Tensor3f apply_photometric(const Tensor3f& img, PhotometricOp op, Rng& rng) {
  if (img.channels() != 3) throw std::invalid_argument("apply_photometric: expected 3 channels");
  switch (op) {
    case PhotometricOp::kEqualize:
      return equalize(img);
    case PhotometricOp::kSolarize:
      return solarize(img, static_cast<float>(rng.uniform(64.0, 192.0) / 255.0));
    case PhotometricOp::kPosterize:
      return posterize(img, static_cast<int>(rng.uniform_int(3, 6)));
    case PhotometricOp::kSharpness:
      return sharpness(img, static_cast<float>(rng.uniform(0.5, 2.0)));
    case PhotometricOp::kAutoContrast:
      return auto_contrast(img);
    case PhotometricOp::kInvert:
      return invert(img);
    case PhotometricOp::kGamma:
      return gamma_contrast(img, static_cast<float>(rng.uniform(0.7, 1.5)));
  }
  throw std::invalid_argument("apply_photometric: unknown op");
}

Tensor3f photometric_pair(const Tensor3f& img, Rng& rng) {
  std::vector<int> ops = rng.sample_without_replacement(kNumPhotometricOps, 2);
  Tensor3f out = apply_photometric(img, static_cast<PhotometricOp>(ops[0]), rng);
  return apply_photometric(out, static_cast<PhotometricOp>(ops[1]), rng);
}

Affine2d sample_spatial_affine(int h, int w, Rng& rng) {
  const double theta = rng.uniform(-45.0, 45.0) * std::numbers::pi / 180.0;
  const double shx = rng.uniform(-0.2, 0.2);
  const double shy = rng.uniform(-0.2, 0.2);
  const double tx = rng.uniform(-0.25, 0.25) * w;
  const double ty = rng.uniform(-0.25, 0.25) * h;
  Affine2d a;
  // linear part = rotation * shear
  const double c = std::cos(theta), s = std::sin(theta);
  a.m00 = c + (-s) * shy;
  a.m01 = c * shx + (-s);
  a.m10 = s + c * shy;
  a.m11 = s * shx + c;
  a.tx = tx;
  a.ty = ty;
  return a;
}

std::pair<Tensor3f, MatXf> warp_nearest(const Tensor3f& img, const MatXf& mask, const Affine2d& fwd) {
  if (mask.rows() != img.h || mask.cols() != img.w)
    throw std::invalid_argument("warp_nearest: mask shape mismatch");
  const double cx = (img.w - 1) / 2.0;
  const double cy = (img.h - 1) / 2.0;
  const double det = fwd.m00 * fwd.m11 - fwd.m01 * fwd.m10;
  if (std::abs(det) < 1e-9) throw std::invalid_argument("warp_nearest: singular affine");
  const double i00 = fwd.m11 / det, i01 = -fwd.m01 / det;
  const double i10 = -fwd.m10 / det, i11 = fwd.m00 / det;

  Tensor3f out(3, img.h, img.w);
  MatXf mout = MatXf::Zero(img.h, img.w);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      const double rx = (x - cx) - fwd.tx;
      const double ry = (y - cy) - fwd.ty;
      const int sx = static_cast<int>(std::lround(i00 * rx + i01 * ry + cx));
      const int sy = static_cast<int>(std::lround(i10 * rx + i11 * ry + cy));
      if (sx < 0 || sx >= img.w || sy < 0 || sy >= img.h) continue;
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = img.at(c, sy, sx);
      mout(y, x) = mask(sy, sx) > 0.5f ? 1.0f : 0.0f;
    }
  return {std::move(out), std::move(mout)};
}

Tensor3f grid_shuffle_perm(const Tensor3f& img, int grid, const std::vector<int>& perm) {
  if (grid < 1 || img.h % grid != 0 || img.w % grid != 0)
    throw std::invalid_argument("grid_shuffle: grid must divide both spatial dims");
  if (perm.size() != static_cast<std::size_t>(grid) * grid)
    throw std::invalid_argument("grid_shuffle: permutation size mismatch");
  const int ch = img.h / grid, cw = img.w / grid;
  Tensor3f out(3, img.h, img.w);
  for (int k = 0; k < grid * grid; ++k) {
    const int src = perm[static_cast<std::size_t>(k)];
    const int dy = (k / grid) * ch, dx = (k % grid) * cw;
    const int sy = (src / grid) * ch, sx = (src % grid) * cw;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x) out.at(c, dy + y, dx + x) = img.at(c, sy + y, sx + x);
  }
  return out;
}

Tensor3f grid_shuffle(const Tensor3f& img, int grid, Rng& rng) {
  return grid_shuffle_perm(img, grid, rng.permutation(grid * grid));
}

}  // namespace prn
