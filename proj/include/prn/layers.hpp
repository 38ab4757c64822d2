#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "prn/params.hpp"
#include "prn/rng.hpp"
#include "prn/tensor.hpp"

namespace prn {

inline int conv_out_size(int in, int k, int stride, int pad) {
  int num = in + 2 * pad - k;
  if (num < 0) throw std::invalid_argument("conv_out_size: kernel larger than padded input");
  return num / stride + 1;
}

// Patch matrix: row (c*k + ky)*k + kx, column oy*ow + ox. Zero padding.
template <typename S>
MatX<S> im2col(const Tensor3<S>& x, int k, int stride, int pad, int oh, int ow) {
  const int ch = x.channels();
  MatX<S> col = MatX<S>::Zero(static_cast<Eigen::Index>(ch) * k * k,
                              static_cast<Eigen::Index>(oh) * ow);
  for (int c = 0; c < ch; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Eigen::Index row = (static_cast<Eigen::Index>(c) * k + ky) * k + kx;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= x.h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= x.w) continue;
            col(row, static_cast<Eigen::Index>(oy) * ow + ox) = x.at(c, iy, ix);
          }
        }
      }
    }
  }
  return col;
}

template <typename S>
void col2im_add(const MatX<S>& col, Tensor3<S>& gx, int k, int stride, int pad, int oh, int ow) {
  const int ch = gx.channels();
  for (int c = 0; c < ch; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Eigen::Index row = (static_cast<Eigen::Index>(c) * k + ky) * k + kx;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= gx.h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= gx.w) continue;
            gx.at(c, iy, ix) += col(row, static_cast<Eigen::Index>(oy) * ow + ox);
          }
        }
      }
    }
  }
}

template <typename S>
void he_normal_init(MatX<S>& m, Eigen::Index fan_in, Rng& rng, double std_override = -1.0) {
  const double std = std_override > 0 ? std_override : std::sqrt(2.0 / static_cast<double>(fan_in));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<S>(rng.normal(0.0, std));
}

template <typename S>
struct Conv2dCtx {
  MatX<S> col;
  int in_h = 0, in_w = 0, out_h = 0, out_w = 0;
};

template <typename S>
struct Conv2d {
  int in_ch = 0, out_ch = 0, k = 1, stride = 1, pad = 0;
  MatX<S> W;   // out_ch x in_ch*k*k
  VecX<S> b;   // out_ch
  MatX<S> gW;
  VecX<S> gb;

  void init(int in, int out, int kernel, int str, int padding, Rng& rng, double std_override = -1.0) {
    in_ch = in;
    out_ch = out;
    k = kernel;
    stride = str;
    pad = padding;
    W.resize(out, static_cast<Eigen::Index>(in) * kernel * kernel);
    he_normal_init(W, W.cols(), rng, std_override);
    b = VecX<S>::Zero(out);
    gW = MatX<S>::Zero(W.rows(), W.cols());
    gb = VecX<S>::Zero(out);
  }

  Tensor3<S> forward(const Tensor3<S>& x, Conv2dCtx<S>* ctx) const {
    if (x.channels() != in_ch) throw std::invalid_argument("Conv2d: channel mismatch, got " + x.shape_str());
    const int oh = conv_out_size(x.h, k, stride, pad);
    const int ow = conv_out_size(x.w, k, stride, pad);
    MatX<S> col = im2col(x, k, stride, pad, oh, ow);
    Tensor3<S> y(out_ch, oh, ow);
    y.data.noalias() = W * col;
    y.data.colwise() += b;
    if (ctx) {
      ctx->col = std::move(col);
      ctx->in_h = x.h;
      ctx->in_w = x.w;
      ctx->out_h = oh;
      ctx->out_w = ow;
    }
    return y;
  }

  Tensor3<S> backward(const Conv2dCtx<S>& ctx, const Tensor3<S>& gy) {
    gW.noalias() += gy.data * ctx.col.transpose();
    gb += gy.data.rowwise().sum();
    Tensor3<S> gx(in_ch, ctx.in_h, ctx.in_w);
    MatX<S> gcol = W.transpose() * gy.data;
    col2im_add(gcol, gx, k, stride, pad, ctx.out_h, ctx.out_w);
    return gx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    add_param(out, prefix + ".weight", W, gW);
    add_param(out, prefix + ".bias", b, gb, false);
  }
};

template <typename S>
struct DepthwiseConv2dCtx {
  std::vector<MatX<S>> cols;  // one k*k x oh*ow patch matrix per channel
  int in_h = 0, in_w = 0, out_h = 0, out_w = 0;
};

// One k x k filter per channel, no cross-channel mixing.
template <typename S>
struct DepthwiseConv2d {
  int ch = 0, k = 1, stride = 1, pad = 0;
  MatX<S> W;  // ch x k*k
  VecX<S> b;
  MatX<S> gW;
  VecX<S> gb;

  void init(int channels, int kernel, int str, int padding, Rng& rng) {
    ch = channels;
    k = kernel;
    stride = str;
    pad = padding;
    W.resize(ch, static_cast<Eigen::Index>(kernel) * kernel);
    he_normal_init(W, W.cols(), rng);
    b = VecX<S>::Zero(ch);
    gW = MatX<S>::Zero(W.rows(), W.cols());
    gb = VecX<S>::Zero(ch);
  }

  Tensor3<S> forward(const Tensor3<S>& x, DepthwiseConv2dCtx<S>* ctx) const {
    if (x.channels() != ch) throw std::invalid_argument("DepthwiseConv2d: channel mismatch");
    const int oh = conv_out_size(x.h, k, stride, pad);
    const int ow = conv_out_size(x.w, k, stride, pad);
    Tensor3<S> y(ch, oh, ow);
    if (ctx) {
      ctx->cols.assign(static_cast<std::size_t>(ch), MatX<S>());
      ctx->in_h = x.h;
      ctx->in_w = x.w;
      ctx->out_h = oh;
      ctx->out_w = ow;
    }
    Tensor3<S> one(1, x.h, x.w);
    for (int c = 0; c < ch; ++c) {
      one.data = x.data.row(c);
      MatX<S> col = im2col(one, k, stride, pad, oh, ow);
      y.data.row(c) = W.row(c) * col;
      y.data.row(c).array() += b(c);
      if (ctx) ctx->cols[static_cast<std::size_t>(c)] = std::move(col);
    }
    return y;
  }

  Tensor3<S> backward(const DepthwiseConv2dCtx<S>& ctx, const Tensor3<S>& gy) {
    Tensor3<S> gx(ch, ctx.in_h, ctx.in_w);
    Tensor3<S> gone(1, ctx.in_h, ctx.in_w);
    for (int c = 0; c < ch; ++c) {
      const MatX<S>& col = ctx.cols[static_cast<std::size_t>(c)];
      gW.row(c) += gy.data.row(c) * col.transpose();
      gb(c) += gy.data.row(c).sum();
      MatX<S> gcol = W.row(c).transpose() * gy.data.row(c);
      gone.data.setZero();
      col2im_add(gcol, gone, k, stride, pad, ctx.out_h, ctx.out_w);
      gx.data.row(c) = gone.data.row(0);
    }
    return gx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    add_param(out, prefix + ".weight", W, gW);
    add_param(out, prefix + ".bias", b, gb, false);
  }
};

template <typename S>
struct InstanceNormCtx {
  MatX<S> xhat;
  VecX<S> inv_std;
};

// Spatial normalization with two statistic scopes, always from the sample
// itself (a pure function of its input, identical in training and inference):
//  - per-channel (shared_stats=false): each channel is standardized with its
//    own spatial mean/variance. Scale- and shift-invariant per channel.
//  - whole-map (shared_stats=true): one mean/variance over all channels and
//    pixels jointly, so relative magnitudes between channels survive — the
//    right choice wherever the magnitude of one branch versus another carries
//    meaning (for example residual energy against feature energy).
// The per-channel affine (gamma, beta) applies in both modes.
template <typename S>
struct InstanceNorm {
  int ch = 0;
  bool affine = true;
  bool shared_stats = false;
  S eps = static_cast<S>(1e-5);
  VecX<S> gamma, beta;
  VecX<S> ggamma, gbeta;

  void init(int channels, bool affine_, bool shared) {
    ch = channels;
    affine = affine_;
    shared_stats = shared;
    gamma = VecX<S>::Ones(channels);
    beta = VecX<S>::Zero(channels);
    ggamma = VecX<S>::Zero(channels);
    gbeta = VecX<S>::Zero(channels);
  }

  Tensor3<S> forward(const Tensor3<S>& x, InstanceNormCtx<S>* ctx, bool /*train*/) {
    if (x.channels() != ch) throw std::invalid_argument("InstanceNorm: channel mismatch");
    Tensor3<S> y(ch, x.h, x.w);
    VecX<S> mean(ch), var(ch);
    if (shared_stats) {
      const S m = x.data.mean();
      const S v = (x.data.array() - m).square().mean();
      mean.setConstant(m);
      var.setConstant(v);
    } else {
      mean = x.data.rowwise().mean();
      var = (x.data.colwise() - mean).array().square().rowwise().mean();
    }
    VecX<S> inv_std = (var.array() + eps).sqrt().inverse();
    MatX<S> xhat = (x.data.colwise() - mean).array().colwise() * inv_std.array();
    if (affine) {
      y.data = (xhat.array().colwise() * gamma.array()).colwise() + beta.array();
    } else {
      y.data = xhat;
    }
    if (ctx) {
      ctx->xhat = std::move(xhat);
      ctx->inv_std = std::move(inv_std);
    }
    return y;
  }

  Tensor3<S> backward(const InstanceNormCtx<S>& ctx, const Tensor3<S>& gy) {
    Tensor3<S> gx(ch, gy.h, gy.w);
    MatX<S> gxhat = gy.data;
    if (affine) {
      ggamma += (gy.data.array() * ctx.xhat.array()).rowwise().sum().matrix();
      gbeta += gy.data.rowwise().sum();
      gxhat = gy.data.array().colwise() * gamma.array();
    }
    if (shared_stats) {
      const S mean_g = gxhat.mean();
      const S mean_gx = (gxhat.array() * ctx.xhat.array()).mean();
      gx.data = (gxhat.array() - mean_g - ctx.xhat.array() * mean_gx) * ctx.inv_std(0);
    } else {
      VecX<S> mean_g = gxhat.rowwise().mean();
      VecX<S> mean_gx = (gxhat.array() * ctx.xhat.array()).rowwise().mean();
      gx.data = ((gxhat.colwise() - mean_g).array() -
                 ctx.xhat.array().colwise() * mean_gx.array())
                    .colwise() *
                ctx.inv_std.array();
    }
    return gx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    if (affine) {
      add_param(out, prefix + ".gamma", gamma, ggamma, false);
      add_param(out, prefix + ".beta", beta, gbeta, false);
    }
  }
};

// Row-batched affine map: y = x * W + b for x of shape (n x in).
template <typename S>
struct Linear {
  int in = 0, out = 0;
  MatX<S> W;  // in x out
  MatX<S> b;  // 1 x out
  MatX<S> gW, gb;

  void init(int in_, int out_, Rng& rng, double std_override = -1.0) {
    in = in_;
    out = out_;
    W.resize(in, out);
    he_normal_init(W, in, rng, std_override);
    b = MatX<S>::Zero(1, out);
    gW = MatX<S>::Zero(in, out);
    gb = MatX<S>::Zero(1, out);
  }

  MatX<S> forward(const MatX<S>& x) const {
    MatX<S> y = x * W;
    y.rowwise() += b.row(0);
    return y;
  }

  MatX<S> backward(const MatX<S>& x, const MatX<S>& gy) {
    gW.noalias() += x.transpose() * gy;
    gb.row(0) += gy.colwise().sum();
    return gy * W.transpose();
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    add_param(out, prefix + ".weight", W, gW);
    add_param(out, prefix + ".bias", b, gb, false);
  }
};

template <typename S>
Tensor3<S> relu(const Tensor3<S>& x) {
  Tensor3<S> y = x;
  y.data = y.data.cwiseMax(S(0));
  return y;
}

template <typename S>
Tensor3<S> relu_backward(const Tensor3<S>& x, const Tensor3<S>& gy) {
  Tensor3<S> gx = gy;
  gx.data = (x.data.array() > S(0)).template cast<S>() * gy.data.array();
  return gx;
}

template <typename S>
MatX<S> sigmoid(const MatX<S>& x) {
  return ((-x.array()).exp() + S(1)).inverse();
}

template <typename S>
MatX<S> sigmoid_backward(const MatX<S>& y, const MatX<S>& gy) {
  return gy.array() * y.array() * (S(1) - y.array());
}

template <typename S>
MatX<S> softmax_rows(const MatX<S>& x) {
  MatX<S> y = x;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const S mx = y.row(r).maxCoeff();
    y.row(r) = (y.row(r).array() - mx).exp();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

template <typename S>
MatX<S> softmax_rows_backward(const MatX<S>& y, const MatX<S>& gy) {
  MatX<S> gx(y.rows(), y.cols());
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const S dot = y.row(r).dot(gy.row(r));
    gx.row(r) = y.row(r).array() * (gy.row(r).array() - dot);
  }
  return gx;
}

template <typename S>
struct ConvNormReluCtx {
  Conv2dCtx<S> conv;
  InstanceNormCtx<S> norm;
  Tensor3<S> pre_relu;
};

template <typename S>
struct ConvNormRelu {
  Conv2d<S> conv;
  InstanceNorm<S> norm;

  void init(int in, int out, int k, int stride, int pad, Rng& rng, bool affine = true,
            bool shared_stats = true) {
    conv.init(in, out, k, stride, pad, rng);
    norm.init(out, affine, shared_stats);
  }

  Tensor3<S> forward(const Tensor3<S>& x, ConvNormReluCtx<S>* ctx, bool train) {
    Tensor3<S> y = conv.forward(x, ctx ? &ctx->conv : nullptr);
    y = norm.forward(y, ctx ? &ctx->norm : nullptr, train);
    if (ctx) ctx->pre_relu = y;
    return relu(y);
  }

  Tensor3<S> backward(const ConvNormReluCtx<S>& ctx, const Tensor3<S>& gy) {
    Tensor3<S> g = relu_backward(ctx.pre_relu, gy);
    g = norm.backward(ctx.norm, g);
    return conv.backward(ctx.conv, g);
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    conv.collect(prefix + ".conv", out);
    norm.collect(prefix + ".norm", out);
  }
};

// Bilinear resize with half-pixel centers and edge clamping. When the output
// shape equals the input shape the result is an exact copy.
template <typename S>
Tensor3<S> bilinear_resize(const Tensor3<S>& x, int oh, int ow) {
  if (oh == x.h && ow == x.w) return x;
  Tensor3<S> y(x.channels(), oh, ow);
  const double sy_scale = static_cast<double>(x.h) / oh;
  const double sx_scale = static_cast<double>(x.w) / ow;
  for (int oy = 0; oy < oh; ++oy) {
    double sy = (oy + 0.5) * sy_scale - 0.5;
    int y0 = static_cast<int>(std::floor(sy));
    double fy = sy - y0;
    int y0c = std::min(std::max(y0, 0), x.h - 1);
    int y1c = std::min(std::max(y0 + 1, 0), x.h - 1);
    for (int ox = 0; ox < ow; ++ox) {
      double sx = (ox + 0.5) * sx_scale - 0.5;
      int x0 = static_cast<int>(std::floor(sx));
      double fx = sx - x0;
      int x0c = std::min(std::max(x0, 0), x.w - 1);
      int x1c = std::min(std::max(x0 + 1, 0), x.w - 1);
      const double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
      const double w10 = fy * (1 - fx), w11 = fy * fx;
      for (int c = 0; c < x.channels(); ++c) {
        double v = w00 * x.at(c, y0c, x0c) + w01 * x.at(c, y0c, x1c) +
                   w10 * x.at(c, y1c, x0c) + w11 * x.at(c, y1c, x1c);
        y.at(c, oy, ox) = static_cast<S>(v);
      }
    }
  }
  return y;
}

// Adjoint of bilinear_resize: scatters output gradients back through the same taps.
template <typename S>
Tensor3<S> bilinear_resize_backward(const Tensor3<S>& gy, int ih, int iw) {
  if (gy.h == ih && gy.w == iw) return gy;
  Tensor3<S> gx(gy.channels(), ih, iw);
  const double sy_scale = static_cast<double>(ih) / gy.h;
  const double sx_scale = static_cast<double>(iw) / gy.w;
  for (int oy = 0; oy < gy.h; ++oy) {
    double sy = (oy + 0.5) * sy_scale - 0.5;
    int y0 = static_cast<int>(std::floor(sy));
    double fy = sy - y0;
    int y0c = std::min(std::max(y0, 0), ih - 1);
    int y1c = std::min(std::max(y0 + 1, 0), ih - 1);
    for (int ox = 0; ox < gy.w; ++ox) {
      double sx = (ox + 0.5) * sx_scale - 0.5;
      int x0 = static_cast<int>(std::floor(sx));
      double fx = sx - x0;
      int x0c = std::min(std::max(x0, 0), iw - 1);
      int x1c = std::min(std::max(x0 + 1, 0), iw - 1);
      const double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
      const double w10 = fy * (1 - fx), w11 = fy * fx;
      for (int c = 0; c < gy.channels(); ++c) {
        const S g = gy.at(c, oy, ox);
        gx.at(c, y0c, x0c) += static_cast<S>(w00 * g);
        gx.at(c, y0c, x1c) += static_cast<S>(w01 * g);
        gx.at(c, y1c, x0c) += static_cast<S>(w10 * g);
        gx.at(c, y1c, x1c) += static_cast<S>(w11 * g);
      }
    }
  }
  return gx;
}

}  // namespace prn
