#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "prn/params.hpp"

namespace prn {

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;  // L2 term added to the gradient, skipped for decay=false params
};

// Adam with bias correction. Moment state is kept in double regardless of the
// parameter scalar type.
template <typename S>
class Adam {
 public:
  Adam(std::vector<ParamRef<S>> params, const AdamHyper& hy) : params_(std::move(params)), hy_(hy) {
    for (const auto& p : params_) {
      if (!p.grad) throw std::invalid_argument("Adam: parameter '" + p.name + "' has no gradient");
      m_.emplace_back(static_cast<std::size_t>(p.size), 0.0);
      v_.emplace_back(static_cast<std::size_t>(p.size), 0.0);
    }
  }

  void zero_grad() {
    for (auto& p : params_)
      for (Eigen::Index i = 0; i < p.size; ++i) p.grad[i] = S(0);
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(hy_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(hy_.beta2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      auto& p = params_[pi];
      auto& m = m_[pi];
      auto& v = v_[pi];
      const double wd = p.decay ? hy_.weight_decay : 0.0;
      for (Eigen::Index i = 0; i < p.size; ++i) {
        const double val = static_cast<double>(p.value[i]);
        const double g = static_cast<double>(p.grad[i]) + wd * val;
        auto idx = static_cast<std::size_t>(i);
        m[idx] = hy_.beta1 * m[idx] + (1.0 - hy_.beta1) * g;
        v[idx] = hy_.beta2 * v[idx] + (1.0 - hy_.beta2) * g * g;
        const double mhat = m[idx] / bc1;
        const double vhat = v[idx] / bc2;
        p.value[i] = static_cast<S>(val - hy_.lr * mhat / (std::sqrt(vhat) + hy_.eps));
      }
    }
  }

  long steps() const { return t_; }
  const std::vector<ParamRef<S>>& params() const { return params_; }

 private:
  std::vector<ParamRef<S>> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamHyper hy_;
  long t_ = 0;
};

}  // namespace prn
