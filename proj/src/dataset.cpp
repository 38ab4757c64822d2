#include "prn/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numbers>
#include <sstream>

#include "prn/image_io.hpp"
#include "prn/perlin.hpp"

namespace fs = std::filesystem;

namespace prn {

namespace {

std::vector<std::string> list_pngs(const fs::path& dir) {
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      out.push_back(entry.path().generic_string());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> list_subdirs(const fs::path& dir) {
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory()) out.push_back(entry.path().filename().generic_string());
  std::sort(out.begin(), out.end());
  return out;
}

std::string mask_path_for(const fs::path& category_root, const std::string& defect,
                          const fs::path& image_path) {
  return (category_root / "ground_truth" / defect / (image_path.stem().string() + "_mask.png"))
      .generic_string();
}

std::string padded(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", i);
  return buf;
}

}  // namespace

DatasetIndex index_dataset(const std::string& root, const std::string& category, int n_seen,
                           std::uint64_t seed) {
  if (n_seen < 0) throw DatasetError("index_dataset: n_seen must be non-negative");
  const fs::path category_root = fs::path(root) / category;
  if (!fs::is_directory(category_root))
    throw DatasetError("index_dataset: no such category directory: " + category_root.generic_string());

  DatasetIndex index;
  index.root = fs::path(root).generic_string();
  index.category = category;
  index.seed = seed;
  index.n_seen_requested = n_seen;

  index.train_normals = list_pngs(category_root / "train" / "good");
  if (index.train_normals.empty())
    throw DatasetError("index_dataset: no training normals under " +
                       (category_root / "train" / "good").generic_string());

  // Collect test images per defect class, verifying masks for anomalous ones.
  std::map<std::string, std::vector<TestImageEntry>> by_class;
  long total_anomalous = 0;
  for (const std::string& defect : list_subdirs(category_root / "test")) {
    for (const std::string& path : list_pngs(category_root / "test" / defect)) {
      TestImageEntry entry;
      entry.path = path;
      entry.defect = defect;
      entry.anomalous = defect != "good";
      if (entry.anomalous) {
        entry.mask_path = mask_path_for(category_root, defect, path);
        if (!fs::is_regular_file(entry.mask_path))
          throw DatasetError("index_dataset: anomalous test image " + path +
                             " has no ground-truth mask at " + entry.mask_path);
        ++total_anomalous;
      }
      by_class[defect].push_back(std::move(entry));
    }
  }
  if (by_class.empty())
    throw DatasetError("index_dataset: no test images under " +
                       (category_root / "test").generic_string());

  if (n_seen > 0 && n_seen >= total_anomalous)
    throw DatasetError("index_dataset: n_seen=" + std::to_string(n_seen) +
                       " would leave no anomalous test images (found " +
                       std::to_string(total_anomalous) + ")");

  // Balanced draw: cycle the sorted defect classes, removing one uniformly
  // random remaining image per visit.
  std::vector<std::string> anomaly_classes;
  for (const auto& [defect, entries] : by_class)
    if (defect != "good" && !entries.empty()) anomaly_classes.push_back(defect);

  std::map<std::string, std::vector<TestImageEntry>> remaining = by_class;
  Rng rng(seed);
  int picked = 0;
  std::size_t cls = 0;
  while (picked < n_seen) {
    auto& pool = remaining[anomaly_classes[cls % anomaly_classes.size()]];
    if (!pool.empty()) {
      const auto idx =
          static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1));
      SeenAnomalyEntry seen;
      seen.path = pool[idx].path;
      seen.mask_path = pool[idx].mask_path;
      seen.defect = pool[idx].defect;
      index.seen.push_back(std::move(seen));
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(idx));
      ++picked;
    }
    ++cls;
  }
  std::sort(index.seen.begin(), index.seen.end(),
            [](const SeenAnomalyEntry& a, const SeenAnomalyEntry& b) { return a.path < b.path; });

  for (const auto& [defect, entries] : remaining)
    for (const auto& entry : entries) index.test_images.push_back(entry);
  std::sort(index.test_images.begin(), index.test_images.end(),
            [](const TestImageEntry& a, const TestImageEntry& b) { return a.path < b.path; });

  index.textures = list_pngs(fs::path(root) / "textures");
  return index;
}

std::string index_manifest(const DatasetIndex& index) {
  std::ostringstream out;
  out << "root " << index.root << "\n";
  out << "category " << index.category << "\n";
  out << "seed " << index.seed << "\n";
  out << "n_seen " << index.n_seen_requested << "\n";
  for (const auto& p : index.train_normals) out << "train " << p << "\n";
  for (const auto& s : index.seen) out << "seen " << s.defect << " " << s.path << " " << s.mask_path << "\n";
  for (const auto& t : index.test_images)
    out << "test " << t.defect << " " << (t.anomalous ? 1 : 0) << " " << t.path
        << (t.anomalous ? " " + t.mask_path : "") << "\n";
  for (const auto& p : index.textures) out << "texture " << p << "\n";
  return out.str();
}

namespace {

// Shared banded-texture family: every normal sample is the same two gratings
// (orientation, frequency, and phase fixed per category, like an aligned
// production line) perturbed only by a low-amplitude smooth noise field and a
// small global brightness jitter.
struct TextureFamily {
  double k1x, k1y, k2x, k2y;
  double phi1, phi2;
  std::array<float, 3> gain;
};

TextureFamily sample_family(int resolution, Rng& rng) {
  TextureFamily fam;
  const double theta1 = rng.uniform(0.0, std::numbers::pi);
  const double f1 = rng.uniform(2.0, 4.0);
  const double theta2 = theta1 + std::numbers::pi / 2.0 + rng.uniform(-0.3, 0.3);
  const double f2 = rng.uniform(4.0, 7.0);
  const double two_pi_over = 2.0 * std::numbers::pi / resolution;
  fam.k1x = two_pi_over * f1 * std::cos(theta1);
  fam.k1y = two_pi_over * f1 * std::sin(theta1);
  fam.k2x = two_pi_over * f2 * std::cos(theta2);
  fam.k2y = two_pi_over * f2 * std::sin(theta2);
  fam.phi1 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  fam.phi2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  fam.gain = {static_cast<float>(rng.uniform(0.9, 1.0)), 1.0f,
              static_cast<float>(rng.uniform(0.9, 1.0))};
  return fam;
}

Tensor3f normal_sample(const TextureFamily& fam, int res, Rng& rng) {
  PerlinConfig noise_cfg;
  noise_cfg.octaves = 2;
  noise_cfg.period = std::max(2, res / 4);
  const MatXf noise = fractal_noise(res, res, noise_cfg, rng);
  const double lift = rng.uniform(-0.02, 0.02);

  Tensor3f img(3, res, res);
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      const double v = 0.5 + lift + 0.17 * std::sin(fam.k1x * x + fam.k1y * y + fam.phi1) +
                       0.11 * std::sin(fam.k2x * x + fam.k2y * y + fam.phi2) +
                       0.05 * (noise(y, x) - 0.5);
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) = std::min(std::max(static_cast<float>(v) * fam.gain[static_cast<std::size_t>(c)], 0.0f), 1.0f);
    }
  return img;
}

MatXf defect_mask(const std::string& defect, int res, Rng& rng) {
  MatXf mask = MatXf::Zero(res, res);
  if (defect == "blot") {
    const int side = static_cast<int>(rng.uniform_int(std::max(4, res / 6), std::max(5, res / 3)));
    const int y0 = static_cast<int>(rng.uniform_int(0, res - side));
    const int x0 = static_cast<int>(rng.uniform_int(0, res - side));
    mask.block(y0, x0, side, side).setOnes();
  } else if (defect == "ring") {
    const double ay = rng.uniform(res / 8.0, res / 4.0);
    const double ax = rng.uniform(res / 8.0, res / 4.0);
    const double cy = rng.uniform(ay, res - 1 - ay);
    const double cx = rng.uniform(ax, res - 1 - ax);
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x) {
        const double dy = (y - cy) / ay, dx = (x - cx) / ax;
        if (dy * dy + dx * dx <= 1.0) mask(y, x) = 1.0f;
      }
  } else {  // scratch: a thin random polyline
    double y = rng.uniform(res * 0.2, res * 0.8);
    double x = rng.uniform(res * 0.2, res * 0.8);
    double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const int segments = static_cast<int>(rng.uniform_int(4, 7));
    for (int s = 0; s < segments; ++s) {
      const double len = rng.uniform(res / 8.0, res / 5.0);
      const double ny = y + len * std::sin(angle);
      const double nx = x + len * std::cos(angle);
      const int steps = static_cast<int>(std::ceil(len * 2));
      for (int i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(i) / steps;
        const int py = static_cast<int>(std::lround(y + t * (ny - y)));
        const int px = static_cast<int>(std::lround(x + t * (nx - x)));
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = py + dy, xx = px + dx;
            if (yy >= 0 && yy < res && xx >= 0 && xx < res) mask(yy, xx) = 1.0f;
          }
      }
      y = std::min(std::max(ny, 0.0), res - 1.0);
      x = std::min(std::max(nx, 0.0), res - 1.0);
      angle += rng.uniform(-0.9, 0.9);
    }
  }
  if (mask.sum() < 0.5f) mask(res / 2, res / 2) = 1.0f;
  return mask;
}

Tensor3f apply_defect(const Tensor3f& base, const MatXf& mask, Rng& rng) {
  const float delta = static_cast<float>(rng.uniform(0.35, 0.6)) * (rng.bernoulli(0.5) ? 1.0f : -1.0f);
  Tensor3f out = base;
  for (int y = 0; y < base.h; ++y)
    for (int x = 0; x < base.w; ++x) {
      if (mask(y, x) <= 0.5f) continue;
      for (int c = 0; c < 3; ++c)
        out.at(c, y, x) = std::min(std::max(base.at(c, y, x) + delta, 0.0f), 1.0f);
    }
  return out;
}

Tensor3f texture_sample(int kind, int res, Rng& rng) {
  Tensor3f img(3, res, res);
  if (kind % 3 == 0) {  // checkerboard
    const int cell = static_cast<int>(rng.uniform_int(2, std::max(3, res / 6)));
    const float lo = static_cast<float>(rng.uniform(0.05, 0.3));
    const float hi = static_cast<float>(rng.uniform(0.7, 0.95));
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x) {
        const float v = (((y / cell) + (x / cell)) % 2 == 0) ? lo : hi;
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = v;
      }
  } else if (kind % 3 == 1) {  // high-frequency diagonal grating
    const double f = rng.uniform(8.0, 14.0);
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double kx = 2.0 * std::numbers::pi * f * std::cos(theta) / res;
    const double ky = 2.0 * std::numbers::pi * f * std::sin(theta) / res;
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x) {
        const float v = static_cast<float>(0.5 + 0.45 * std::sin(kx * x + ky * y + phi));
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = std::min(std::max(v, 0.0f), 1.0f);
      }
  } else {  // two-level blob field
    PerlinConfig cfg;
    cfg.octaves = 3;
    cfg.period = std::max(2, res / 8);
    const MatXf noise = fractal_noise(res, res, cfg, rng);
    const float lo = static_cast<float>(rng.uniform(0.1, 0.35));
    const float hi = static_cast<float>(rng.uniform(0.65, 0.9));
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x) {
        const float v = noise(y, x) > 0.5f ? hi : lo;
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = v;
      }
  }
  return img;
}

}  // namespace

std::string generate_synthetic_dataset(const std::string& out_dir, int n_normal, int n_test_normal,
                                       int n_test_anomalous, int resolution, std::uint64_t seed) {
  if (n_normal < 1 || n_test_normal < 0 || n_test_anomalous < 0)
    throw DatasetError("generate_synthetic_dataset: counts must be positive");
  if (resolution < 8) throw DatasetError("generate_synthetic_dataset: resolution too small");

  const fs::path root(out_dir);
  const fs::path category_root = root / "synthetic";
  const std::array<std::string, 3> defects = {"blot", "ring", "scratch"};
  fs::create_directories(category_root / "train" / "good");
  fs::create_directories(category_root / "test" / "good");
  for (const auto& d : defects) {
    fs::create_directories(category_root / "test" / d);
    fs::create_directories(category_root / "ground_truth" / d);
  }
  fs::create_directories(root / "textures");

  Rng master(seed);
  const TextureFamily family = sample_family(resolution, master);

  for (int i = 0; i < n_normal; ++i) {
    Rng child = master.split("train/good/" + padded(i));
    save_image((category_root / "train" / "good" / (padded(i) + ".png")).generic_string(),
               normal_sample(family, resolution, child));
  }
  for (int i = 0; i < n_test_normal; ++i) {
    Rng child = master.split("test/good/" + padded(i));
    save_image((category_root / "test" / "good" / (padded(i) + ".png")).generic_string(),
               normal_sample(family, resolution, child));
  }
  std::array<int, 3> class_counter{};
  for (int i = 0; i < n_test_anomalous; ++i) {
    const std::string& defect = defects[static_cast<std::size_t>(i % 3)];
    const int j = class_counter[static_cast<std::size_t>(i % 3)]++;
    Rng child = master.split("test/" + defect + "/" + padded(j));
    const Tensor3f base = normal_sample(family, resolution, child);
    const MatXf mask = defect_mask(defect, resolution, child);
    const Tensor3f bad = apply_defect(base, mask, child);
    save_image((category_root / "test" / defect / (padded(j) + ".png")).generic_string(), bad);
    save_gray((category_root / "ground_truth" / defect / (padded(j) + "_mask.png")).generic_string(),
              mask);
  }
  const int n_textures = 8;
  for (int i = 0; i < n_textures; ++i) {
    Rng child = master.split("textures/" + padded(i));
    save_image((root / "textures" / (padded(i) + ".png")).generic_string(),
               texture_sample(i, resolution, child));
  }
  return root.generic_string();
}

LoadedDataset load_dataset(const DatasetIndex& index, int size) {
  LoadedDataset data;
  data.train_normals.reserve(index.train_normals.size());
  for (const auto& p : index.train_normals) data.train_normals.push_back(load_image(p, size));
  data.seen.reserve(index.seen.size());
  for (const auto& s : index.seen)
    data.seen.emplace_back(load_image(s.path, size), load_mask(s.mask_path, size));
  data.textures.reserve(index.textures.size());
  for (const auto& t : index.textures) data.textures.push_back(load_image(t, size));
  data.eval.reserve(index.test_images.size());
  for (const auto& t : index.test_images) {
    EvalCase e;
    e.image = load_image(t.path, size);
    e.mask = t.anomalous ? load_mask(t.mask_path, size) : MatXf::Zero(size, size);
    e.label = t.anomalous ? 1 : 0;
    e.path = t.path;
    e.defect = t.defect;
    data.eval.push_back(std::move(e));
  }
  return data;
}

}  // namespace prn
