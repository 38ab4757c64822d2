#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "prn/encoder.hpp"
#include "prn/rng.hpp"
#include "prn/tensor.hpp"

namespace prn {

enum class ResidualKind { kAbs, kSquared };

inline int prototype_count(double ratio, int n) {
  if (!(ratio > 0.0) || ratio > 1.0) throw std::invalid_argument("prototype_count: ratio must be in (0, 1]");
  if (n < 1) throw std::invalid_argument("prototype_count: need at least one sample");
  return std::max(1, static_cast<int>(std::llround(ratio * n)));
}

namespace detail {

// Lloyd's algorithm in double precision. Seeded initialization samples k
// distinct rows; a cluster that empties is reseeded with the point farthest
// from its assigned center. The within-cluster objective is checked to be
// non-increasing across iterations on every fit.
struct KMeansResult {
  MatX<double> centers;
  std::vector<int> assignment;
  std::vector<double> objective_trace;
  int iterations = 0;
};

inline KMeansResult kmeans(const MatX<double>& x, int k, int max_iter, Rng rng) {
  const Eigen::Index n = x.rows();
  if (k < 1 || k > n) throw std::invalid_argument("kmeans: k out of range");
  if (max_iter < 1) throw std::invalid_argument("kmeans: max_iter must be >= 1");
  KMeansResult res;
  std::vector<int> pick = rng.sample_without_replacement(static_cast<int>(n), k);
  res.centers.resize(k, x.cols());
  for (int j = 0; j < k; ++j) res.centers.row(j) = x.row(pick[static_cast<std::size_t>(j)]);

  auto assign = [&](std::vector<int>& out, std::vector<double>& dist) {
    out.resize(static_cast<std::size_t>(n));
    dist.resize(static_cast<std::size_t>(n));
    double obj = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (x.row(i) - res.centers.row(0)).squaredNorm();
      for (int j = 1; j < k; ++j) {
        const double d = (x.row(i) - res.centers.row(j)).squaredNorm();
        if (d < best_d) {  // strict: ties keep the lowest index
          best_d = d;
          best = j;
        }
      }
      out[static_cast<std::size_t>(i)] = best;
      dist[static_cast<std::size_t>(i)] = best_d;
      obj += best_d;
    }
    return obj;
  };

  std::vector<int> asg;
  std::vector<double> dist;
  double obj = assign(asg, dist);
  res.objective_trace.push_back(obj);

  for (int it = 0; it < max_iter; ++it) {
    // Recompute means.
    MatX<double> sums = MatX<double>::Zero(k, x.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(asg[static_cast<std::size_t>(i)]) += x.row(i);
      counts[static_cast<std::size_t>(asg[static_cast<std::size_t>(i)])]++;
    }
    for (int j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) {
        res.centers.row(j) = sums.row(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);
      } else {
        // Reseed with the point currently worst served by its center.
        Eigen::Index far = 0;
        for (Eigen::Index i = 1; i < n; ++i)
          if (dist[static_cast<std::size_t>(i)] > dist[static_cast<std::size_t>(far)]) far = i;
        res.centers.row(j) = x.row(far);
      }
    }
    std::vector<int> next;
    double next_obj = assign(next, dist);
    res.iterations = it + 1;
    const double tol = 1e-9 * std::max(1.0, std::abs(obj));
    if (next_obj > obj + tol)
      throw std::logic_error("kmeans: objective increased between iterations");
    res.objective_trace.push_back(next_obj);
    const bool stable = next == asg;
    asg = std::move(next);
    obj = next_obj;
    if (stable) break;
  }
  res.assignment = std::move(asg);
  return res;
}

}  // namespace detail

// Per-scale set of k-means centers over flattened normal feature maps.
template <typename S>
struct PrototypeBank {
  struct Scale {
    MatX<S> protos;  // K x (c*h*w), rows are flattened (channel, y, x) maps
    int c = 0, h = 0, w = 0;
    int iterations = 0;
    double objective = 0.0;
  };
  std::array<Scale, 3> scales;
  ResidualKind residual_kind = ResidualKind::kAbs;

  int k(int scale) const { return static_cast<int>(scales[static_cast<std::size_t>(scale)].protos.rows()); }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    for (int j = 0; j < 3; ++j) {
      auto& sc = scales[static_cast<std::size_t>(j)];
      out.push_back({prefix + ".scale" + std::to_string(j + 1), sc.protos.data(), nullptr,
                     sc.protos.size(),
                     {sc.protos.rows(), static_cast<Eigen::Index>(sc.c), static_cast<Eigen::Index>(sc.h),
                      static_cast<Eigen::Index>(sc.w)},
                     false});
    }
  }
};

// Cluster the flattened per-scale feature maps of the normal training set.
// K = max(1, round(ratio * N)) at every scale; clustering runs in double
// precision and the centers are stored in the bank's scalar type.
template <typename S>
PrototypeBank<S> fit_prototypes(const std::vector<FeaturePyramid<S>>& feats, double ratio, int max_iter,
                                std::uint64_t seed, ResidualKind kind = ResidualKind::kAbs) {
  if (feats.empty()) throw std::invalid_argument("fit_prototypes: empty feature set");
  const int n = static_cast<int>(feats.size());
  const int k = prototype_count(ratio, n);
  PrototypeBank<S> bank;
  bank.residual_kind = kind;
  Rng root(seed);
  for (int j = 0; j < 3; ++j) {
    const Tensor3<S>& first = feats[0].scales[static_cast<std::size_t>(j)];
    const Eigen::Index dim = first.size();
    MatX<double> x(n, dim);
    for (int i = 0; i < n; ++i) {
      const Tensor3<S>& t = feats[static_cast<std::size_t>(i)].scales[static_cast<std::size_t>(j)];
      if (!t.same_shape(first))
        throw std::invalid_argument("fit_prototypes: inconsistent feature shapes at scale " +
                                    std::to_string(j + 1));
      x.row(i) = Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(t.data.data(), dim)
                     .template cast<double>();
    }
    detail::KMeansResult km = detail::kmeans(x, k, max_iter, root.split(static_cast<std::uint64_t>(j)));
    auto& sc = bank.scales[static_cast<std::size_t>(j)];
    sc.protos = km.centers.cast<S>();
    sc.c = first.channels();
    sc.h = first.h;
    sc.w = first.w;
    sc.iterations = km.iterations;
    sc.objective = km.objective_trace.back();
  }
  return bank;
}

// Index of the closest prototype in flattened L2; ties resolve to the lowest index.
template <typename S>
int nearest_prototype(const PrototypeBank<S>& bank, int scale, const Tensor3<S>& feature) {
  const auto& sc = bank.scales[static_cast<std::size_t>(scale)];
  if (feature.channels() != sc.c || feature.h != sc.h || feature.w != sc.w)
    throw std::invalid_argument("nearest_prototype: feature shape mismatch at scale " +
                                std::to_string(scale + 1));
  Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>> f(feature.data.data(), feature.size());
  int best = 0;
  S best_d = std::numeric_limits<S>::max();
  for (Eigen::Index r = 0; r < sc.protos.rows(); ++r) {
    const S d = (sc.protos.row(r) - f).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(r);
    }
  }
  return best;
}

// Elementwise deviation of each feature map from its nearest prototype.
template <typename S>
FeaturePyramid<S> residual(const PrototypeBank<S>& bank, const FeaturePyramid<S>& fp) {
  FeaturePyramid<S> out;
  for (int j = 0; j < 3; ++j) {
    const auto& sc = bank.scales[static_cast<std::size_t>(j)];
    const Tensor3<S>& f = fp.scales[static_cast<std::size_t>(j)];
    const int idx = nearest_prototype(bank, j, f);
    Eigen::Map<const MatX<S>> p(sc.protos.row(idx).data(), f.data.rows(), f.data.cols());
    Tensor3<S> d(f.channels(), f.h, f.w);
    if (bank.residual_kind == ResidualKind::kAbs) {
      d.data = (f.data - p).cwiseAbs();
    } else {
      d.data = (f.data - p).array().square();
    }
    out.scales[static_cast<std::size_t>(j)] = std::move(d);
  }
  return out;
}

}  // namespace prn
