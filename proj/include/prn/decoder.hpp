#pragma once

#include <array>
#include <stdexcept>

#include "prn/layers.hpp"

namespace prn {

template <typename S>
struct DecoderCtx {
  ConvNormReluCtx<S> a1, a2, b1, b2, c1;
  Conv2dCtx<S> head;
  MatX<S> sig;
};

// U-Net style decoder over the three fused maps: upsample the coarsest scale,
// concatenate the next finer scale, convolve, repeat, then upsample by 4 to
// the input resolution and reduce to a single sigmoid channel.
template <typename S>
struct Decoder {
  std::array<int, 3> in_ch = {0, 0, 0};  // channels of the three input maps, fine to coarse
  std::array<int, 3> hs = {0, 0, 0};     // spatial sides, fine to coarse
  int out_size = 0;
  int a_out = 0, b_out = 0, c_out = 0;
  S logit_gain = S(1);
  ConvNormRelu<S> a1, a2, b1, b2, c1;
  Conv2d<S> head;

  // head_gain scales the head's raw output into logits; the head's stored
  // bias is head_bias / head_gain so the initial map sits at
  // sigmoid(head_bias) while bias updates act on the same amplified scale
  // as the weights.
  void init(const std::array<int, 3>& channels, const std::array<int, 3>& sides, int out,
            double head_bias, double head_gain, Rng& rng) {
    in_ch = channels;
    hs = sides;
    out_size = out;
    logit_gain = static_cast<S>(head_gain);
    const int a_in = channels[2] + channels[1];
    const int b_in_partial = a_in / 2;
    a_out = a_in / 2;
    const int b_in = b_in_partial + channels[0];
    b_out = b_in / 2;
    c_out = b_out / 2;
    if (a_in % 2 || b_in % 2 || b_out % 2)
      throw std::invalid_argument("Decoder: channel plan requires even widths");
    a1.init(a_in, a_out, 3, 1, 1, rng);
    a2.init(a_out, a_out, 3, 1, 1, rng);
    b1.init(b_in, b_out, 3, 1, 1, rng);
    b2.init(b_out, b_out, 3, 1, 1, rng);
    c1.init(b_out, c_out, 3, 1, 1, rng);
    head.init(c_out, 1, 1, 1, 0, rng, /*std_override=*/0.01);
    head.b(0) = static_cast<S>(head_bias) / logit_gain;
  }

  MatX<S> forward(const std::array<Tensor3<S>, 3>& t, DecoderCtx<S>* ctx, bool train) {
    Tensor3<S> x = bilinear_resize(t[2], hs[1], hs[1]);
    Tensor3<S> cat = concat_channels(x, t[1]);
    Tensor3<S> y = a1.forward(cat, ctx ? &ctx->a1 : nullptr, train);
    y = a2.forward(y, ctx ? &ctx->a2 : nullptr, train);
    y = bilinear_resize(y, hs[0], hs[0]);
    cat = concat_channels(y, t[0]);
    y = b1.forward(cat, ctx ? &ctx->b1 : nullptr, train);
    y = b2.forward(y, ctx ? &ctx->b2 : nullptr, train);
    y = bilinear_resize(y, out_size, out_size);
    y = c1.forward(y, ctx ? &ctx->c1 : nullptr, train);
    Tensor3<S> z = head.forward(y, ctx ? &ctx->head : nullptr);
    MatX<S> map = sigmoid(
        MatX<S>(logit_gain * Eigen::Map<const MatX<S>>(z.data.data(), out_size, out_size)));
    if (ctx) ctx->sig = map;
    return map;
  }

  std::array<Tensor3<S>, 3> backward(const DecoderCtx<S>& ctx, const MatX<S>& gmap) {
    MatX<S> gz_flat = logit_gain * sigmoid_backward(ctx.sig, gmap);
    Tensor3<S> gz(1, out_size, out_size);
    gz.data.row(0) = Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(gz_flat.data(), gz_flat.size());
    Tensor3<S> g = head.backward(ctx.head, gz);
    g = c1.backward(ctx.c1, g);
    g = bilinear_resize_backward(g, hs[0], hs[0]);
    g = b2.backward(ctx.b2, g);
    g = b1.backward(ctx.b1, g);
    Tensor3<S> g_up = slice_channels(g, 0, a_out);
    std::array<Tensor3<S>, 3> gt;
    gt[0] = slice_channels(g, a_out, in_ch[0]);
    g = bilinear_resize_backward(g_up, hs[1], hs[1]);
    g = a2.backward(ctx.a2, g);
    g = a1.backward(ctx.a1, g);
    gt[1] = slice_channels(g, in_ch[2], in_ch[1]);
    gt[2] = bilinear_resize_backward(slice_channels(g, 0, in_ch[2]), hs[2], hs[2]);
    return gt;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    a1.collect(prefix + ".a1", out);
    a2.collect(prefix + ".a2", out);
    b1.collect(prefix + ".b1", out);
    b2.collect(prefix + ".b2", out);
    c1.collect(prefix + ".c1", out);
    head.collect(prefix + ".head", out);
  }
};

}  // namespace prn
