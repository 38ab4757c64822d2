#pragma once

#include <cmath>
#include <stdexcept>

#include "prn/tensor.hpp"

namespace prn {

template <typename S>
struct LossTerms {
  S total = S(0);
  S smooth_l1 = S(0);
  S focal = S(0);
};

// Pixel-averaged smooth-L1 plus lambda-weighted focal loss between a predicted
// score map and a binary mask. Probabilities entering the focal logs are
// clamped to [1e-6, 1 - 1e-6]; the clamp is a hard gate in the gradient.
template <typename S>
LossTerms<S> total_loss(const MatX<S>& pred, const MatX<S>& target, S alpha, S gamma, S lambda,
                        MatX<S>* grad = nullptr) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw std::invalid_argument("total_loss: shape mismatch");
  const Eigen::Index n = pred.size();
  if (n == 0) throw std::invalid_argument("total_loss: empty input");
  constexpr double kClamp = 1e-6;
  const double a = static_cast<double>(alpha);
  const double g = static_cast<double>(gamma);
  double sum_sl1 = 0.0, sum_focal = 0.0;
  if (grad) grad->resize(pred.rows(), pred.cols());
  const S* pp = pred.data();
  const S* tp = target.data();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = static_cast<double>(pp[i]);
    const double m = static_cast<double>(tp[i]);
    const double d = p - m;
    double g_sl1;
    if (std::abs(d) < 1.0) {
      sum_sl1 += 0.5 * d * d;
      g_sl1 = d;
    } else {
      sum_sl1 += std::abs(d) - 0.5;
      g_sl1 = d > 0 ? 1.0 : -1.0;
    }
    const bool clamped = p < kClamp || p > 1.0 - kClamp;
    const double pc = std::min(std::max(p, kClamp), 1.0 - kClamp);
    const double one_m_pc = 1.0 - pc;
    const double pow_neg = std::pow(one_m_pc, g);
    const double pow_pos = std::pow(pc, g);
    sum_focal += -a * m * pow_neg * std::log(pc) - (1.0 - a) * (1.0 - m) * pow_pos * std::log(one_m_pc);
    if (grad) {
      double g_focal = 0.0;
      if (!clamped) {
        g_focal += a * m * (g * std::pow(one_m_pc, g - 1.0) * std::log(pc) - pow_neg / pc);
        g_focal += (1.0 - a) * (1.0 - m) *
                   (-g * std::pow(pc, g - 1.0) * std::log(one_m_pc) + pow_pos / one_m_pc);
      }
      grad->data()[i] =
          static_cast<S>((g_sl1 + static_cast<double>(lambda) * g_focal) / static_cast<double>(n));
    }
  }
  LossTerms<S> out;
  out.smooth_l1 = static_cast<S>(sum_sl1 / static_cast<double>(n));
  out.focal = static_cast<S>(sum_focal / static_cast<double>(n));
  out.total = static_cast<S>(static_cast<double>(out.smooth_l1) +
                             static_cast<double>(lambda) * static_cast<double>(out.focal));
  return out;
}

}  // namespace prn
