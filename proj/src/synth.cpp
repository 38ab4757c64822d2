#include "prn/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "prn/metrics.hpp"

namespace prn {

const char* to_string(DatasetKind kind) {
  return kind == DatasetKind::kObject ? "object" : "texture";
}

DatasetKind parse_dataset_kind(const std::string& name) {
  if (name == "object") return DatasetKind::kObject;
  if (name == "texture") return DatasetKind::kTexture;
  throw std::invalid_argument("unknown dataset kind '" + name + "' (expected object|texture)");
}

const char* to_string(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::kExtended: return "extended";
    case AnomalyKind::kTexture: return "texture";
    case AnomalyKind::kShuffle: return "shuffle";
  }
  return "?";
}

namespace {

inline int to_byte(float v) {
  const float c = std::min(std::max(v, 0.0f), 1.0f);
  return std::min(std::max(static_cast<int>(std::lround(c * 255.0f)), 0), 255);
}

// Otsu's threshold over a 256-bin histogram; returns -1 when no split exists.
int otsu_threshold(const std::array<long, 256>& hist, long total) {
  double sum_all = 0;
  for (int b = 0; b < 256; ++b) sum_all += static_cast<double>(b) * hist[static_cast<std::size_t>(b)];
  double sum_low = 0;
  long n_low = 0;
  double best_var = -1;
  int best_t = -1;
  for (int t = 0; t < 255; ++t) {
    n_low += hist[static_cast<std::size_t>(t)];
    if (n_low == 0) continue;
    const long n_high = total - n_low;
    if (n_high == 0) break;
    sum_low += static_cast<double>(t) * hist[static_cast<std::size_t>(t)];
    const double mu_low = sum_low / n_low;
    const double mu_high = (sum_all - sum_low) / n_high;
    const double var = static_cast<double>(n_low) * n_high * (mu_low - mu_high) * (mu_low - mu_high);
    if (var > best_var) {
      best_var = var;
      best_t = t;
    }
  }
  return best_t;
}

MatXf morph_square(const MatXf& m, int half, bool dilate) {
  const int h = static_cast<int>(m.rows()), w = static_cast<int>(m.cols());
  MatXf out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool hit = dilate ? false : true;
      for (int dy = -half; dy <= half && (dilate ? !hit : hit); ++dy)
        for (int dx = -half; dx <= half; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;  // window clipped to frame
          const bool on = m(yy, xx) > 0.5f;
          if (dilate && on) {
            hit = true;
            break;
          }
          if (!dilate && !on) {
            hit = false;
            break;
          }
        }
      out(y, x) = hit ? 1.0f : 0.0f;
    }
  return out;
}

std::vector<std::pair<int, int>> allowed_pixels(const MatXf& allowed) {
  std::vector<std::pair<int, int>> px;
  for (int y = 0; y < allowed.rows(); ++y)
    for (int x = 0; x < allowed.cols(); ++x)
      if (allowed(y, x) > 0.5f) px.emplace_back(y, x);
  return px;
}

MatXf rasterize_circle(int h, int w, double cy, double cx, double r) {
  MatXf m = MatXf::Zero(h, w);
  const double r2 = r * r;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r2) m(y, x) = 1.0f;
  return m;
}

MatXf rasterize_rect(int h, int w, double cy, double cx, double hy, double hx) {
  MatXf m = MatXf::Zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (std::abs(y - cy) <= hy && std::abs(x - cx) <= hx) m(y, x) = 1.0f;
  return m;
}

MatXf rasterize_polygon(int h, int w, const std::vector<std::pair<double, double>>& verts) {
  MatXf m = MatXf::Zero(h, w);
  const int n = static_cast<int>(verts.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool inside = false;  // even-odd rule over pixel centers
      for (int i = 0, j = n - 1; i < n; j = i++) {
        const auto [yi, xi] = verts[static_cast<std::size_t>(i)];
        const auto [yj, xj] = verts[static_cast<std::size_t>(j)];
        if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) inside = !inside;
      }
      if (inside) m(y, x) = 1.0f;
    }
  return m;
}

}  // namespace

MatXf estimate_foreground(const Tensor3f& image) {
  const int h = image.h, w = image.w;
  MatXf gray(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0;
      for (int c = 0; c < image.channels(); ++c) acc += image.at(c, y, x);
      gray(y, x) = acc / static_cast<float>(image.channels());
    }

  std::array<long, 256> hist{};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) hist[static_cast<std::size_t>(to_byte(gray(y, x)))]++;
  const int t = otsu_threshold(hist, static_cast<long>(h) * w);
  if (t < 0) return MatXf::Zero(h, w);

  MatXf high(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) high(y, x) = to_byte(gray(y, x)) > t ? 1.0f : 0.0f;

  // Whichever side dominates the border is background.
  long border_total = 0, border_high = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (y != 0 && y != h - 1 && x != 0 && x != w - 1) continue;
      ++border_total;
      if (high(y, x) > 0.5f) ++border_high;
    }
  MatXf fg = (2 * border_high > border_total) ? (1.0f - high.array()).matrix() : high;

  auto comps = connected_components8(fg);
  if (comps.empty()) return MatXf::Zero(h, w);
  const auto& largest =
      *std::max_element(comps.begin(), comps.end(),
                        [](const auto& a, const auto& b) { return a.size() < b.size(); });
  MatXf kept = MatXf::Zero(h, w);
  for (auto [y, x] : largest) kept(y, x) = 1.0f;

  return morph_square(morph_square(kept, 2, /*dilate=*/true), 2, /*dilate=*/false);
}

TargetArea full_frame_target(int h, int w, DatasetKind kind) {
  TargetArea ta;
  ta.mask = MatXf::Ones(h, w);
  ta.shape = TargetShape::kRectangle;
  ta.dataset = kind;
  ta.fallback = false;
  return ta;
}

TargetArea sample_target_area(const Tensor3f& normal, DatasetKind kind, const TargetAreaConfig& cfg,
                              Rng& rng) {
  if (cfg.min_frac <= 0 || cfg.max_frac <= cfg.min_frac || cfg.max_frac > 1.0)
    throw std::invalid_argument("sample_target_area: need 0 < min_frac < max_frac <= 1");
  const int h = normal.h, w = normal.w;

  TargetArea ta;
  ta.dataset = kind;
  MatXf allowed =
      kind == DatasetKind::kObject ? estimate_foreground(normal) : MatXf::Ones(h, w);
  if (allowed.sum() < 0.5f) {
    allowed = MatXf::Ones(h, w);
    ta.fallback = true;
  }
  const auto px = allowed_pixels(allowed);
  const double max_r = 0.6 * std::min(h, w);

  for (int attempt = 0; attempt < cfg.attempts; ++attempt) {
    const auto [cy, cx] = px[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(px.size()) - 1))];
    const int which = static_cast<int>(rng.uniform_int(0, 2));
    MatXf shape;
    if (which == 0) {
      shape = rasterize_circle(h, w, cy, cx, rng.uniform(1.5, max_r));
      ta.shape = TargetShape::kCircle;
    } else if (which == 1) {
      shape = rasterize_rect(h, w, cy, cx, rng.uniform(1.0, 0.5 * h), rng.uniform(1.0, 0.5 * w));
      ta.shape = TargetShape::kRectangle;
    } else {
      const int k = static_cast<int>(rng.uniform_int(3, 8));
      std::vector<double> angles(static_cast<std::size_t>(k));
      for (auto& a : angles) a = rng.uniform(0.0, 2.0 * std::numbers::pi);
      std::sort(angles.begin(), angles.end());
      std::vector<std::pair<double, double>> verts;
      verts.reserve(static_cast<std::size_t>(k));
      for (double a : angles) {
        const double r = rng.uniform(2.0, max_r);
        verts.emplace_back(cy + r * std::sin(a), cx + r * std::cos(a));
      }
      shape = rasterize_polygon(h, w, verts);
      ta.shape = TargetShape::kPolygon;
    }
    MatXf candidate = shape.cwiseProduct(allowed);
    const double frac = static_cast<double>(candidate.sum()) / (static_cast<double>(h) * w);
    if (frac >= cfg.min_frac && frac <= cfg.max_frac) {
      ta.mask = std::move(candidate);
      return ta;
    }
  }
  // No shape met the area bounds: use the whole allowed region.
  ta.mask = std::move(allowed);
  ta.fallback = true;
  return ta;
}

Tensor3f composite_anomaly(const Tensor3f& normal, const Tensor3f& source, const MatXf& mask,
                           float beta) {
  if (!normal.same_shape(source))
    throw std::invalid_argument("composite_anomaly: source shape " + source.shape_str() +
                                " != normal shape " + normal.shape_str());
  if (mask.rows() != normal.h || mask.cols() != normal.w)
    throw std::invalid_argument("composite_anomaly: mask shape mismatch");
  Tensor3f out = normal;
  for (int y = 0; y < normal.h; ++y)
    for (int x = 0; x < normal.w; ++x) {
      if (mask(y, x) <= 0.5f) continue;
      for (int c = 0; c < normal.channels(); ++c)
        out.at(c, y, x) = (1.0f - beta) * source.at(c, y, x) + beta * normal.at(c, y, x);
    }
  return out;
}

AnomalySample extended_anomaly(const Tensor3f& normal, const Tensor3f& seen_image,
                               const MatXf& seen_mask, const SynthConfig& cfg, float beta, Rng& rng,
                               const TargetArea* ta_override) {
  if (!normal.same_shape(seen_image))
    throw std::invalid_argument("extended_anomaly: seen image shape " + seen_image.shape_str() +
                                " != normal shape " + normal.shape_str());
  if (seen_mask.rows() != normal.h || seen_mask.cols() != normal.w)
    throw std::invalid_argument("extended_anomaly: seen mask shape mismatch");
  if (seen_mask.sum() < 0.5f) throw std::invalid_argument("extended_anomaly: seen mask is empty");

  const Tensor3f aug = photometric_pair(seen_image, rng);
  const TargetArea ta =
      ta_override ? *ta_override
      : cfg.use_target_area
          ? sample_target_area(normal, cfg.dataset_kind, cfg.target_area, rng)
          : full_frame_target(normal.h, normal.w, cfg.dataset_kind);

  for (int attempt = 0; attempt < cfg.warp_attempts; ++attempt) {
    const Affine2d affine = sample_spatial_affine(normal.h, normal.w, rng);
    auto [warped, warped_mask] = warp_nearest(aug, seen_mask, affine);
    MatXf m = warped_mask.cwiseProduct(ta.mask);
    if (m.sum() > 0.5f) {
      AnomalySample s;
      s.image = composite_anomaly(normal, warped, m, beta);
      s.mask = std::move(m);
      s.kind = AnomalyKind::kExtended;
      s.beta = beta;
      return s;
    }
  }
  throw GenerationError("extended_anomaly: warped defect never overlapped the target area in " +
                        std::to_string(cfg.warp_attempts) + " attempts");
}

AnomalySample simulated_anomaly(const Tensor3f& normal, AnomalyKind kind,
                                const std::vector<Tensor3f>& texture_pool, const SynthConfig& cfg,
                                float beta, Rng& rng, const TargetArea* ta_override) {
  if (kind == AnomalyKind::kExtended)
    throw std::invalid_argument("simulated_anomaly: kind must be texture or shuffle");

  const TargetArea ta =
      ta_override ? *ta_override
      : cfg.use_target_area
          ? sample_target_area(normal, cfg.dataset_kind, cfg.target_area, rng)
          : full_frame_target(normal.h, normal.w, cfg.dataset_kind);

  Tensor3f source;
  if (kind == AnomalyKind::kTexture) {
    if (texture_pool.empty())
      throw std::invalid_argument("simulated_anomaly: texture source requested but the pool is empty");
    const auto& tex =
        texture_pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(texture_pool.size()) - 1))];
    if (!tex.same_shape(normal))
      throw std::invalid_argument("simulated_anomaly: texture shape " + tex.shape_str() +
                                  " != normal shape " + normal.shape_str());
    source = photometric_pair(tex, rng);
  } else {
    source = grid_shuffle(photometric_pair(normal, rng), cfg.grid, rng);
  }

  AnomalySample s;
  s.mask = perlin_mask(normal.h, normal.w, ta.mask, cfg.perlin, rng);
  s.image = composite_anomaly(normal, source, s.mask, beta);
  s.kind = kind;
  s.beta = beta;
  return s;
}

}  // namespace prn
