#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "prn/tensor.hpp"

namespace prn {

// Thrown when a metric is requested on inputs where it has no defined value
// (e.g. a single-class label set).
class UndefinedMetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Area under the ROC curve with trapezoidal integration; tied scores advance
// as one group, which matches the Mann-Whitney half-credit convention.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Average precision as step-interpolated precision-recall summation, ties
// grouped.
double average_precision(const std::vector<double>& scores, const std::vector<int>& labels);

// Per-region overlap curve: for each threshold the mean, over 8-connected
// ground-truth regions, of the fraction of the region's pixels scored at or
// above the threshold, plotted against the false positive rate over normal
// pixels. The curve is integrated from FPR 0 to fpr_limit (linear
// interpolation at the cut) and normalized by fpr_limit. Thresholds are the
// distinct observed scores; max_thresholds > 0 subsamples them evenly.
double pro_score(const std::vector<MatXf>& score_maps, const std::vector<MatXf>& masks,
                 double fpr_limit = 0.3, int max_thresholds = 0);

// Pixel coordinates (y, x) of each 8-connected region of mask > 0.5.
std::vector<std::vector<std::pair<int, int>>> connected_components8(const MatXf& mask);

struct EvalReport {
  double image_auroc = 0.0;
  double pixel_auroc = 0.0;
  double pixel_ap = 0.0;
  double pro = 0.0;
  int n_images = 0;
  int n_anomalous = 0;
  double anomalous_pixel_rate = 0.0;
};

}  // namespace prn
