#include "prn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace prn {

namespace {

struct RankedCounts {
  // (threshold, positives at threshold, negatives at threshold), descending score
  std::vector<double> score;
  std::vector<long> pos, neg;
  long n_pos = 0, n_neg = 0;
};

RankedCounts group_by_score(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("metrics: scores/labels size mismatch");
  if (scores.empty()) throw UndefinedMetricError("metrics: empty input");
  for (double s : scores)
    if (!std::isfinite(s)) throw std::invalid_argument("metrics: non-finite score");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  RankedCounts rc;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const double s = scores[order[k]];
    const bool is_pos = labels[order[k]] != 0;
    if (rc.score.empty() || rc.score.back() != s) {
      rc.score.push_back(s);
      rc.pos.push_back(0);
      rc.neg.push_back(0);
    }
    (is_pos ? rc.pos.back() : rc.neg.back())++;
    (is_pos ? rc.n_pos : rc.n_neg)++;
  }
  if (rc.n_pos == 0 || rc.n_neg == 0)
    throw UndefinedMetricError("metrics: need both classes, got " + std::to_string(rc.n_pos) +
                               " positive / " + std::to_string(rc.n_neg) + " negative");
  return rc;
}

}  // namespace

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  RankedCounts rc = group_by_score(scores, labels);
  double area = 0.0;
  double tpr = 0.0, fpr = 0.0;
  long tp = 0, fp = 0;
  for (std::size_t k = 0; k < rc.score.size(); ++k) {
    tp += rc.pos[k];
    fp += rc.neg[k];
    const double tpr2 = static_cast<double>(tp) / static_cast<double>(rc.n_pos);
    const double fpr2 = static_cast<double>(fp) / static_cast<double>(rc.n_neg);
    area += (fpr2 - fpr) * 0.5 * (tpr + tpr2);
    tpr = tpr2;
    fpr = fpr2;
  }
  return area;
}

double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
  RankedCounts rc = group_by_score(scores, labels);
  double ap = 0.0;
  double recall_prev = 0.0;
  long tp = 0, fp = 0;
  for (std::size_t k = 0; k < rc.score.size(); ++k) {
    tp += rc.pos[k];
    fp += rc.neg[k];
    const double recall = static_cast<double>(tp) / static_cast<double>(rc.n_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - recall_prev) * precision;
    recall_prev = recall;
  }
  return ap;
}

std::vector<std::vector<std::pair<int, int>>> connected_components8(const MatXf& mask) {
  const int h = static_cast<int>(mask.rows());
  const int w = static_cast<int>(mask.cols());
  std::vector<std::vector<std::pair<int, int>>> regions;
  std::vector<char> seen(static_cast<std::size_t>(h) * w, 0);
  auto idx = [w](int y, int x) { return static_cast<std::size_t>(y) * w + x; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (mask(y, x) <= 0.5f || seen[idx(y, x)]) continue;
      std::vector<std::pair<int, int>> region;
      std::deque<std::pair<int, int>> queue{{y, x}};
      seen[idx(y, x)] = 1;
      while (!queue.empty()) {
        auto [cy, cx] = queue.front();
        queue.pop_front();
        region.emplace_back(cy, cx);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dy == 0 && dx == 0) continue;
            const int ny = cy + dy, nx = cx + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            if (mask(ny, nx) <= 0.5f || seen[idx(ny, nx)]) continue;
            seen[idx(ny, nx)] = 1;
            queue.emplace_back(ny, nx);
          }
        }
      }
      regions.push_back(std::move(region));
    }
  }
  return regions;
}

double pro_score(const std::vector<MatXf>& score_maps, const std::vector<MatXf>& masks,
                 double fpr_limit, int max_thresholds) {
  if (score_maps.size() != masks.size() || score_maps.empty())
    throw std::invalid_argument("pro_score: need matching non-empty map/mask lists");
  if (!(fpr_limit > 0.0) || fpr_limit > 1.0)
    throw std::invalid_argument("pro_score: fpr_limit must be in (0, 1]");

  // Region pixel scores (descending) and normal pixel scores (descending).
  std::vector<std::vector<double>> region_scores;
  std::vector<double> normal_scores;
  std::vector<double> all_scores;
  for (std::size_t i = 0; i < score_maps.size(); ++i) {
    const MatXf& sm = score_maps[i];
    const MatXf& mk = masks[i];
    if (sm.rows() != mk.rows() || sm.cols() != mk.cols())
      throw std::invalid_argument("pro_score: map/mask shape mismatch at index " + std::to_string(i));
    for (const auto& region : connected_components8(mk)) {
      std::vector<double> rs;
      rs.reserve(region.size());
      for (auto [y, x] : region) rs.push_back(static_cast<double>(sm(y, x)));
      std::sort(rs.begin(), rs.end(), std::greater<double>());
      region_scores.push_back(std::move(rs));
    }
    for (Eigen::Index r = 0; r < sm.rows(); ++r)
      for (Eigen::Index c = 0; c < sm.cols(); ++c) {
        const double s = static_cast<double>(sm(r, c));
        if (!std::isfinite(s)) throw std::invalid_argument("pro_score: non-finite score");
        all_scores.push_back(s);
        if (mk(r, c) <= 0.5f) normal_scores.push_back(s);
      }
  }
  if (region_scores.empty()) throw UndefinedMetricError("pro_score: no anomalous regions in masks");
  if (normal_scores.empty()) throw UndefinedMetricError("pro_score: no normal pixels");
  std::sort(normal_scores.begin(), normal_scores.end(), std::greater<double>());
  std::sort(all_scores.begin(), all_scores.end(), std::greater<double>());
  all_scores.erase(std::unique(all_scores.begin(), all_scores.end()), all_scores.end());
  if (max_thresholds > 0 && static_cast<int>(all_scores.size()) > max_thresholds) {
    std::vector<double> picked;
    picked.reserve(static_cast<std::size_t>(max_thresholds));
    const double stride = static_cast<double>(all_scores.size() - 1) / (max_thresholds - 1);
    for (int k = 0; k < max_thresholds; ++k)
      picked.push_back(all_scores[static_cast<std::size_t>(std::llround(k * stride))]);
    picked.erase(std::unique(picked.begin(), picked.end()), picked.end());
    all_scores = std::move(picked);
  }

  const double n_normal = static_cast<double>(normal_scores.size());
  const double n_regions = static_cast<double>(region_scores.size());
  std::vector<std::size_t> region_ptr(region_scores.size(), 0);
  std::size_t normal_ptr = 0;
  double covered = 0.0;  // sum over regions of the fraction covered so far

  double area = 0.0;
  double prev_fpr = 0.0, prev_overlap = 0.0;
  for (double t : all_scores) {
    while (normal_ptr < normal_scores.size() && normal_scores[normal_ptr] >= t) ++normal_ptr;
    for (std::size_t r = 0; r < region_scores.size(); ++r) {
      const auto& rs = region_scores[r];
      std::size_t& p = region_ptr[r];
      const std::size_t before = p;
      while (p < rs.size() && rs[p] >= t) ++p;
      if (p != before)
        covered += static_cast<double>(p - before) / static_cast<double>(rs.size());
    }
    const double fpr = static_cast<double>(normal_ptr) / n_normal;
    const double overlap = covered / n_regions;
    if (fpr >= fpr_limit) {
      double cut_overlap = overlap;
      if (fpr > prev_fpr)
        cut_overlap = prev_overlap + (overlap - prev_overlap) * (fpr_limit - prev_fpr) / (fpr - prev_fpr);
      area += (fpr_limit - prev_fpr) * 0.5 * (prev_overlap + cut_overlap);
      return area / fpr_limit;
    }
    area += (fpr - prev_fpr) * 0.5 * (prev_overlap + overlap);
    prev_fpr = fpr;
    prev_overlap = overlap;
  }
  // The lowest threshold admits every pixel, so fpr reaches 1 >= fpr_limit above.
  throw std::logic_error("pro_score: curve never reached fpr_limit");
}

}  // namespace prn
