#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "prn/layers.hpp"

namespace prn {

// Rows are patches in row-major grid order; each row is a flattened
// (channel, y-in-patch, x-in-patch) block of size C*p*p.
template <typename S>
MatX<S> patchify(const Tensor3<S>& x, int p) {
  if (p < 1 || x.h % p != 0 || x.w % p != 0)
    throw std::invalid_argument("patchify: patch size must divide both spatial dims");
  const int gy = x.h / p, gx = x.w / p;
  const int ch = x.channels();
  MatX<S> out(static_cast<Eigen::Index>(gy) * gx, static_cast<Eigen::Index>(ch) * p * p);
  for (int py = 0; py < gy; ++py)
    for (int px = 0; px < gx; ++px) {
      const Eigen::Index row = static_cast<Eigen::Index>(py) * gx + px;
      for (int c = 0; c < ch; ++c)
        for (int iy = 0; iy < p; ++iy)
          for (int ix = 0; ix < p; ++ix)
            out(row, (static_cast<Eigen::Index>(c) * p + iy) * p + ix) =
                x.at(c, py * p + iy, px * p + ix);
    }
  return out;
}

template <typename S>
Tensor3<S> unpatchify(const MatX<S>& patches, int channels, int h, int w, int p) {
  if (p < 1 || h % p != 0 || w % p != 0)
    throw std::invalid_argument("unpatchify: patch size must divide both spatial dims");
  const int gy = h / p, gx = w / p;
  if (patches.rows() != static_cast<Eigen::Index>(gy) * gx ||
      patches.cols() != static_cast<Eigen::Index>(channels) * p * p)
    throw std::invalid_argument("unpatchify: patch matrix shape mismatch");
  Tensor3<S> x(channels, h, w);
  for (int py = 0; py < gy; ++py)
    for (int px = 0; px < gx; ++px) {
      const Eigen::Index row = static_cast<Eigen::Index>(py) * gx + px;
      for (int c = 0; c < channels; ++c)
        for (int iy = 0; iy < p; ++iy)
          for (int ix = 0; ix < p; ++ix)
            x.at(c, py * p + iy, px * p + ix) =
                patches(row, (static_cast<Eigen::Index>(c) * p + iy) * p + ix);
    }
  return x;
}

enum class AttentionDivisor { kTokenDim, kSqrtTokenDim };

template <typename S>
struct AttentionHeadCtx {
  MatX<S> tokens, q, k, v, attn, att_out;
};

// Single-head scaled dot-product attention over patch tokens. Scores are
// divided by the token dimension (or its square root, by configuration).
// Projections map to min(token_dim, embed_cap); when capped, an output
// projection restores the token dimension.
template <typename S>
struct AttentionHead {
  int token_dim = 0;
  int embed = 0;
  bool has_out = false;
  S divisor = S(1);
  Linear<S> wq, wk, wv, wo;

  void init(int token_dim_, int embed_cap, AttentionDivisor div, Rng& rng) {
    token_dim = token_dim_;
    embed = std::min(token_dim_, embed_cap);
    has_out = embed != token_dim_;
    divisor = div == AttentionDivisor::kTokenDim ? static_cast<S>(token_dim_)
                                                 : static_cast<S>(std::sqrt(static_cast<double>(token_dim_)));
    wq.init(token_dim, embed, rng);
    wk.init(token_dim, embed, rng);
    wv.init(token_dim, embed, rng);
    if (has_out) wo.init(embed, token_dim, rng);
  }

  MatX<S> forward(const MatX<S>& tokens, AttentionHeadCtx<S>* ctx) const {
    if (tokens.cols() != token_dim) throw std::invalid_argument("AttentionHead: token dim mismatch");
    MatX<S> q = wq.forward(tokens);
    MatX<S> k = wk.forward(tokens);
    MatX<S> v = wv.forward(tokens);
    MatX<S> attn = softmax_rows<S>((q * k.transpose()) / divisor);
    MatX<S> out = attn * v;
    MatX<S> y = has_out ? wo.forward(out) : out;
    if (ctx) {
      ctx->tokens = tokens;
      ctx->q = std::move(q);
      ctx->k = std::move(k);
      ctx->v = std::move(v);
      ctx->attn = std::move(attn);
      ctx->att_out = std::move(out);
    }
    return y;
  }

  MatX<S> backward(const AttentionHeadCtx<S>& ctx, const MatX<S>& gy) {
    MatX<S> go = has_out ? wo.backward(ctx.att_out, gy) : gy;
    MatX<S> gattn = go * ctx.v.transpose();
    MatX<S> gv = ctx.attn.transpose() * go;
    MatX<S> gscores = softmax_rows_backward(ctx.attn, gattn);
    MatX<S> gq = (gscores * ctx.k) / divisor;
    MatX<S> gk = (gscores.transpose() * ctx.q) / divisor;
    MatX<S> gt = wq.backward(ctx.tokens, gq);
    gt += wk.backward(ctx.tokens, gk);
    gt += wv.backward(ctx.tokens, gv);
    return gt;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    wq.collect(prefix + ".q", out);
    wk.collect(prefix + ".k", out);
    wv.collect(prefix + ".v", out);
    if (has_out) wo.collect(prefix + ".out", out);
  }
};

// Free-function form: returns (attended tokens, attention weights).
template <typename S>
std::pair<MatX<S>, MatX<S>> attend(const AttentionHead<S>& head, const MatX<S>& tokens) {
  AttentionHeadCtx<S> ctx;
  MatX<S> y = head.forward(tokens, &ctx);
  return {std::move(y), std::move(ctx.attn)};
}

template <typename S>
struct ResidualBlockCtx {
  Conv2dCtx<S> c1, c2, skip;
  InstanceNormCtx<S> n1, n2;
  Tensor3<S> pre1, pre_sum;
};

// conv-norm-relu-conv-norm plus a skip (1x1 conv when the channel count
// changes), joined by addition and a final relu.
template <typename S>
struct ResidualBlock {
  int in_ch = 0, out_ch = 0;
  bool has_skip_conv = false;
  Conv2d<S> c1, c2, skip;
  InstanceNorm<S> n1, n2;

  void init(int in, int out, Rng& rng) {
    in_ch = in;
    out_ch = out;
    has_skip_conv = in != out;
    c1.init(in, out, 3, 1, 1, rng);
    n1.init(out, /*affine=*/true, /*shared_stats=*/true);
    c2.init(out, out, 3, 1, 1, rng);
    n2.init(out, /*affine=*/true, /*shared_stats=*/true);
    if (has_skip_conv) skip.init(in, out, 1, 1, 0, rng);
  }

  Tensor3<S> forward(const Tensor3<S>& x, ResidualBlockCtx<S>* ctx, bool train) {
    Tensor3<S> a = c1.forward(x, ctx ? &ctx->c1 : nullptr);
    a = n1.forward(a, ctx ? &ctx->n1 : nullptr, train);
    if (ctx) ctx->pre1 = a;
    a = relu(a);
    a = c2.forward(a, ctx ? &ctx->c2 : nullptr);
    a = n2.forward(a, ctx ? &ctx->n2 : nullptr, train);
    Tensor3<S> s = has_skip_conv ? skip.forward(x, ctx ? &ctx->skip : nullptr) : x;
    a.data += s.data;
    if (ctx) ctx->pre_sum = a;
    return relu(a);
  }

  Tensor3<S> backward(const ResidualBlockCtx<S>& ctx, const Tensor3<S>& gy) {
    Tensor3<S> g = relu_backward(ctx.pre_sum, gy);
    Tensor3<S> gx_skip = has_skip_conv ? skip.backward(ctx.skip, g) : g;
    Tensor3<S> gm = n2.backward(ctx.n2, g);
    gm = c2.backward(ctx.c2, gm);
    gm = relu_backward(ctx.pre1, gm);
    gm = n1.backward(ctx.n1, gm);
    Tensor3<S> gx = c1.backward(ctx.c1, gm);
    gx.data += gx_skip.data;
    return gx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    c1.collect(prefix + ".conv1", out);
    n1.collect(prefix + ".norm1", out);
    c2.collect(prefix + ".conv2", out);
    n2.collect(prefix + ".norm2", out);
    if (has_skip_conv) skip.collect(prefix + ".skip", out);
  }
};

template <typename S>
struct MsaBlockCtx {
  std::vector<AttentionHeadCtx<S>> heads;
  ResidualBlockCtx<S> res;
};

// Multi-size self-attention: one attention head per patch size h/1, h/2,
// h/4, h/8 (keeping the sizes that tile the map), head outputs concatenated
// along channels and reduced back to the input width by a residual block.
template <typename S>
struct MsaBlock {
  int ch = 0, h = 0, w = 0;
  std::vector<int> patch_sizes;
  std::vector<AttentionHead<S>> heads;
  ResidualBlock<S> res;

  void init(int channels, int height, int width, int embed_cap, AttentionDivisor div, Rng& rng) {
    if (height != width) throw std::invalid_argument("MsaBlock: requires square maps");
    ch = channels;
    h = height;
    w = width;
    patch_sizes.clear();
    heads.clear();
    for (int d : {1, 2, 4, 8}) {
      if (height % d != 0) continue;
      const int p = height / d;
      if (p < 1) continue;
      patch_sizes.push_back(p);
      AttentionHead<S> head;
      head.init(channels * p * p, embed_cap, div, rng);
      heads.push_back(std::move(head));
    }
    if (heads.empty()) throw std::invalid_argument("MsaBlock: no usable patch size");
    res.init(ch * static_cast<int>(heads.size()), ch, rng);
  }

  Tensor3<S> forward(const Tensor3<S>& x, MsaBlockCtx<S>* ctx, bool train) {
    check_shape(x, ch, h, w, "MsaBlock::forward");
    if (ctx) ctx->heads.assign(heads.size(), AttentionHeadCtx<S>());
    std::vector<Tensor3<S>> outs(heads.size());
    for (std::size_t i = 0; i < heads.size(); ++i) {
      const int p = patch_sizes[i];
      MatX<S> tokens = patchify(x, p);
      MatX<S> att = heads[i].forward(tokens, ctx ? &ctx->heads[i] : nullptr);
      outs[i] = unpatchify(att, ch, h, w, p);
    }
    std::vector<const Tensor3<S>*> parts(outs.size());
    for (std::size_t i = 0; i < outs.size(); ++i) parts[i] = &outs[i];
    Tensor3<S> cat = concat_channels(parts);
    return res.forward(cat, ctx ? &ctx->res : nullptr, train);
  }

  Tensor3<S> backward(const MsaBlockCtx<S>& ctx, const Tensor3<S>& gy) {
    Tensor3<S> gcat = res.backward(ctx.res, gy);
    Tensor3<S> gx(ch, h, w);
    for (std::size_t i = 0; i < heads.size(); ++i) {
      const int p = patch_sizes[i];
      Tensor3<S> slice = slice_channels(gcat, static_cast<int>(i) * ch, ch);
      MatX<S> gatt = patchify(slice, p);  // adjoint of unpatchify
      MatX<S> gtokens = heads[i].backward(ctx.heads[i], gatt);
      Tensor3<S> gpart = unpatchify(gtokens, ch, h, w, p);  // adjoint of patchify
      gx.data += gpart.data;
    }
    return gx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    for (std::size_t i = 0; i < heads.size(); ++i)
      heads[i].collect(prefix + ".head_p" + std::to_string(patch_sizes[i]), out);
    res.collect(prefix + ".res", out);
  }
};

template <typename S>
struct MsaStackCtx {
  std::vector<MsaBlockCtx<S>> blocks;
};

// N stacked attention blocks with independent parameters.
template <typename S>
struct MsaStack {
  std::vector<MsaBlock<S>> blocks;

  void init(int channels, int height, int width, int depth, int embed_cap, AttentionDivisor div,
            Rng& rng) {
    if (depth < 1) throw std::invalid_argument("MsaStack: depth must be >= 1");
    blocks.assign(static_cast<std::size_t>(depth), MsaBlock<S>());
    for (auto& b : blocks) b.init(channels, height, width, embed_cap, div, rng);
  }

  Tensor3<S> forward(const Tensor3<S>& x, MsaStackCtx<S>* ctx, bool train) {
    if (ctx) ctx->blocks.assign(blocks.size(), MsaBlockCtx<S>());
    Tensor3<S> y = x;
    for (std::size_t i = 0; i < blocks.size(); ++i)
      y = blocks[i].forward(y, ctx ? &ctx->blocks[i] : nullptr, train);
    return y;
  }

  Tensor3<S> backward(const MsaStackCtx<S>& ctx, const Tensor3<S>& gy) {
    Tensor3<S> g = gy;
    for (std::size_t i = blocks.size(); i-- > 0;) g = blocks[i].backward(ctx.blocks[i], g);
    return g;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(prefix + ".block" + std::to_string(i + 1), out);
  }
};

}  // namespace prn
