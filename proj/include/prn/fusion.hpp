#pragma once

#include <array>
#include <stdexcept>
#include <string>

#include "prn/layers.hpp"

namespace prn {

template <typename S>
struct FusionBlockCtx {
  std::array<std::array<DepthwiseConv2dCtx<S>, 3>, 3> dw;   // [src][dst], src < dst
  std::array<std::array<Conv2dCtx<S>, 3>, 3> pw;            // [src][dst], src != dst
  std::array<std::array<std::pair<int, int>, 3>, 3> up_in;  // source spatial dims, src > dst
};

// Cross-scale mixer: each output scale is the sum of its own input and a
// transform of every other scale. Finer-to-coarser paths use a strided
// depthwise convolution (stride 2^d, kernel 2^d + 1) followed by a 1x1
// convolution; coarser-to-finer paths use bilinear upsampling followed by a
// 1x1 convolution; the same-scale path is the identity.
template <typename S>
struct FusionBlock {
  std::array<int, 3> ch = {0, 0, 0};
  std::array<std::array<DepthwiseConv2d<S>, 3>, 3> dw;  // [src][dst], src < dst
  std::array<std::array<Conv2d<S>, 3>, 3> pw;           // [src][dst], src != dst
  std::array<std::array<int, 3>, 3> up_factor{};        // [src][dst], src > dst

  void init(const std::array<int, 3>& channels, Rng& rng) {
    ch = channels;
    for (int src = 0; src < 3; ++src) {
      for (int dst = 0; dst < 3; ++dst) {
        if (src == dst) continue;
        auto s = static_cast<std::size_t>(src);
        auto d = static_cast<std::size_t>(dst);
        if (src < dst) {
          const int stride = 1 << (dst - src);
          dw[s][d].init(ch[s], stride + 1, stride, stride / 2, rng);
          pw[s][d].init(ch[s], ch[d], 1, 1, 0, rng);
        } else {
          up_factor[s][d] = 1 << (src - dst);
          pw[s][d].init(ch[s], ch[d], 1, 1, 0, rng);
        }
      }
    }
  }

  std::array<Tensor3<S>, 3> forward(const std::array<Tensor3<S>, 3>& in, FusionBlockCtx<S>* ctx) const {
    for (int j = 0; j < 3; ++j) {
      if (in[static_cast<std::size_t>(j)].channels() != ch[static_cast<std::size_t>(j)])
        throw std::invalid_argument("FusionBlock: channel mismatch at scale " + std::to_string(j + 1));
      if (j > 0 && (in[static_cast<std::size_t>(j - 1)].h != 2 * in[static_cast<std::size_t>(j)].h ||
                    in[static_cast<std::size_t>(j - 1)].w != 2 * in[static_cast<std::size_t>(j)].w))
        throw std::invalid_argument("FusionBlock: scales must halve spatially");
    }
    std::array<Tensor3<S>, 3> out;
    for (int dst = 0; dst < 3; ++dst) {
      auto d = static_cast<std::size_t>(dst);
      out[d] = in[d];
      for (int src = 0; src < 3; ++src) {
        if (src == dst) continue;
        auto s = static_cast<std::size_t>(src);
        if (src < dst) {
          Tensor3<S> t = dw[s][d].forward(in[s], ctx ? &ctx->dw[s][d] : nullptr);
          t = pw[s][d].forward(t, ctx ? &ctx->pw[s][d] : nullptr);
          out[d].data += t.data;
        } else {
          if (ctx) ctx->up_in[s][d] = {in[s].h, in[s].w};
          Tensor3<S> t = bilinear_resize(in[s], in[s].h * up_factor[s][d], in[s].w * up_factor[s][d]);
          t = pw[s][d].forward(t, ctx ? &ctx->pw[s][d] : nullptr);
          out[d].data += t.data;
        }
      }
    }
    return out;
  }

  std::array<Tensor3<S>, 3> backward(const FusionBlockCtx<S>& ctx, const std::array<Tensor3<S>, 3>& gout) {
    std::array<Tensor3<S>, 3> gin;
    for (int j = 0; j < 3; ++j) gin[static_cast<std::size_t>(j)] = gout[static_cast<std::size_t>(j)];
    for (int dst = 0; dst < 3; ++dst) {
      auto d = static_cast<std::size_t>(dst);
      for (int src = 0; src < 3; ++src) {
        if (src == dst) continue;
        auto s = static_cast<std::size_t>(src);
        if (src < dst) {
          Tensor3<S> g = pw[s][d].backward(ctx.pw[s][d], gout[d]);
          g = dw[s][d].backward(ctx.dw[s][d], g);
          gin[s].data += g.data;
        } else {
          Tensor3<S> g = pw[s][d].backward(ctx.pw[s][d], gout[d]);
          g = bilinear_resize_backward(g, ctx.up_in[s][d].first, ctx.up_in[s][d].second);
          gin[s].data += g.data;
        }
      }
    }
    return gin;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    for (int src = 0; src < 3; ++src) {
      for (int dst = 0; dst < 3; ++dst) {
        if (src == dst) continue;
        auto s = static_cast<std::size_t>(src);
        auto d = static_cast<std::size_t>(dst);
        const std::string path = prefix + ".s" + std::to_string(src + 1) + "to" + std::to_string(dst + 1);
        if (src < dst) dw[s][d].collect(path + ".depthwise", out);
        pw[s][d].collect(path + ".pointwise", out);
      }
    }
  }
};

// Free-function form of the cross-scale mix.
template <typename S>
std::array<Tensor3<S>, 3> fuse(const FusionBlock<S>& block, const std::array<Tensor3<S>, 3>& in,
                               FusionBlockCtx<S>* ctx = nullptr) {
  return block.forward(in, ctx);
}

}  // namespace prn
