#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "prn/rng.hpp"
#include "prn/tensor.hpp"

namespace prn {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TestImageEntry {
  std::string path;
  std::string defect;     // "good" for normal test images
  std::string mask_path;  // empty for normal test images
  bool anomalous = false;
};

struct SeenAnomalyEntry {
  std::string path;
  std::string mask_path;
  std::string defect;
};

// Directory layout under `root`:
//   <category>/train/good/*.png
//   <category>/test/good/*.png            (normal test images)
//   <category>/test/<defect>/*.png        (anomalous test images)
//   <category>/ground_truth/<defect>/<stem>_mask.png
//   textures/*.png                        (optional sibling pool)
struct DatasetIndex {
  std::string root;
  std::string category;
  std::vector<std::string> train_normals;  // sorted
  std::vector<TestImageEntry> test_images; // evaluation split; seen anomalies removed
  std::vector<SeenAnomalyEntry> seen;      // anomalies moved into the training side
  std::vector<std::string> textures;       // sorted; may be empty
  std::uint64_t seed = 0;
  int n_seen_requested = 0;
};

// Index the layout above. `n_seen` anomalous test images are drawn for
// training — balanced round-robin over the sorted defect classes, uniformly
// within each class — and removed from the evaluation split. Throws
// DatasetError when the layout is malformed, when an anomalous image lacks
// its mask (the message names the image), or when n_seen would leave the
// evaluation split without anomalies.
DatasetIndex index_dataset(const std::string& root, const std::string& category, int n_seen,
                           std::uint64_t seed);

// Canonical text rendering of an index; identical seeds yield identical text.
std::string index_manifest(const DatasetIndex& index);

// Write a procedural dataset in the layout above under root `out_dir`,
// category "synthetic": banded textures as normals, test anomalies that
// differ from a normal base only inside their emitted mask (square blots,
// filled ellipses, scratch polylines — one defect class per shape), plus a
// sibling textures/ pool for foreign-texture defect sources. Returns the
// category root (out_dir).
std::string generate_synthetic_dataset(const std::string& out_dir, int n_normal, int n_test_normal,
                                       int n_test_anomalous, int resolution, std::uint64_t seed);

struct EvalCase {
  Tensor3f image;
  MatXf mask;  // all zeros for normal images
  int label = 0;
  std::string path;
  std::string defect;
};

struct LoadedDataset {
  std::vector<Tensor3f> train_normals;
  std::vector<std::pair<Tensor3f, MatXf>> seen;  // image + binary mask
  std::vector<Tensor3f> textures;
  std::vector<EvalCase> eval;
};

// Decode every indexed file, resizing images bilinearly and masks with
// nearest-neighbor to `size` x `size`.
LoadedDataset load_dataset(const DatasetIndex& index, int size);

}  // namespace prn
