#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "prn/decoder.hpp"
#include "prn/encoder.hpp"
#include "prn/fusion.hpp"
#include "prn/msa.hpp"
#include "prn/prototype_bank.hpp"

namespace prn {

// Structural switches: prototype residuals, self-attention, cross-scale fusion.
struct ModelToggles {
  bool mp = true;
  bool msa = true;
  bool mf = true;
};

struct ModelConfig {
  EncoderConfig encoder;
  double proto_ratio = 0.10;
  int kmeans_max_iter = 300;
  ResidualKind residual_kind = ResidualKind::kAbs;
  int msa_depth = 3;
  int embed_cap = 256;
  AttentionDivisor divisor = AttentionDivisor::kTokenDim;
  ModelToggles toggles;
  double head_bias = -2.0;
  // Fixed multiplier on the score head's logits. The short constant-rate
  // schedule moves each weight only a small distance; the gain converts that
  // movement into a usable logit range (an output-layer step-size multiplier).
  double head_gain = 50.0;
  int top_k = 0;  // 0 = scale 100 pixels at 256x256 to the configured input size

  int effective_top_k() const {
    if (top_k > 0) return top_k;
    const double full = 256.0 * 256.0;
    const double px = static_cast<double>(encoder.input_size) * encoder.input_size;
    return std::max(1, static_cast<int>(std::llround(100.0 * px / full)));
  }
};

template <typename S>
struct ScoreMap {
  MatX<S> map;  // input_size x input_size, values in [0, 1]
  S score = S(0);
};

// Mean of the top_k highest pixels (all pixels if the map is smaller).
template <typename S>
S image_score(const MatX<S>& map, int top_k) {
  if (top_k < 1) throw std::invalid_argument("image_score: top_k must be >= 1");
  std::vector<S> v(map.data(), map.data() + map.size());
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(top_k), v.size());
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k - 1), v.end(),
                   std::greater<S>());
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += static_cast<double>(v[i]);
  return static_cast<S>(sum / static_cast<double>(k));
}

template <typename S>
struct PrnForwardCtx {
  FusionBlockCtx<S> f_feat, f_resid, f_post;
  std::array<MsaStackCtx<S>, 3> msa;
  DecoderCtx<S> dec;
};

// Full scoring network: frozen encoder and prototype bank produce feature and
// residual pyramids; both are cross-scale fused, concatenated per scale,
// passed through per-scale attention stacks, fused again, and decoded into a
// pixel score map.
template <typename S>
struct PrnModel {
  ModelConfig cfg;
  Encoder<S> encoder;
  PrototypeBank<S> bank;
  bool bank_ready = false;
  FusionBlock<S> fuse_feat, fuse_resid, fuse_post;
  std::array<MsaStack<S>, 3> msa_stacks;
  Decoder<S> decoder;

  void init(const ModelConfig& config, std::uint64_t seed) {
    cfg = config;
    cfg.encoder.validate();
    Rng root(seed);
    {
      Rng r = root.split("encoder");
      encoder.init(cfg.encoder, r);
    }
    const std::array<int, 3> c = cfg.encoder.channels;
    const std::array<int, 3> sides = cfg.encoder.scale_sizes();
    std::array<int, 3> c2 = {2 * c[0], 2 * c[1], 2 * c[2]};
    {
      Rng r = root.split("fuse_feat");
      fuse_feat.init(c, r);
    }
    {
      Rng r = root.split("fuse_resid");
      fuse_resid.init(c, r);
    }
    {
      Rng r = root.split("fuse_post");
      fuse_post.init(c2, r);
    }
    for (int j = 0; j < 3; ++j) {
      Rng r = root.split("msa" + std::to_string(j + 1));
      msa_stacks[static_cast<std::size_t>(j)].init(c2[static_cast<std::size_t>(j)],
                                                   sides[static_cast<std::size_t>(j)],
                                                   sides[static_cast<std::size_t>(j)], cfg.msa_depth,
                                                   cfg.embed_cap, cfg.divisor, r);
    }
    {
      Rng r = root.split("decoder");
      decoder.init(c2, sides, cfg.encoder.input_size, cfg.head_bias, cfg.head_gain, r);
    }
  }

  void set_bank(PrototypeBank<S> b) {
    bank = std::move(b);
    bank_ready = true;
  }

  ScoreMap<S> forward(const Tensor3<S>& image, PrnForwardCtx<S>* ctx, bool train) {
    FeaturePyramid<S> feats = encoder.extract(image);
    FeaturePyramid<S> resid;
    if (cfg.toggles.mp) {
      if (!bank_ready) throw std::logic_error("PrnModel: prototype bank not fitted");
      resid = residual(bank, feats);
    } else {
      for (int j = 0; j < 3; ++j) {
        const auto& f = feats.scales[static_cast<std::size_t>(j)];
        resid.scales[static_cast<std::size_t>(j)] = Tensor3<S>::zeros(f.channels(), f.h, f.w);
      }
    }
    std::array<Tensor3<S>, 3> ff = cfg.toggles.mf
                                       ? fuse_feat.forward(feats.scales, ctx ? &ctx->f_feat : nullptr)
                                       : feats.scales;
    std::array<Tensor3<S>, 3> df = cfg.toggles.mf
                                       ? fuse_resid.forward(resid.scales, ctx ? &ctx->f_resid : nullptr)
                                       : resid.scales;
    std::array<Tensor3<S>, 3> cat;
    for (int j = 0; j < 3; ++j)
      cat[static_cast<std::size_t>(j)] =
          concat_channels(ff[static_cast<std::size_t>(j)], df[static_cast<std::size_t>(j)]);
    std::array<Tensor3<S>, 3> att;
    for (int j = 0; j < 3; ++j) {
      auto js = static_cast<std::size_t>(j);
      att[js] = cfg.toggles.msa ? msa_stacks[js].forward(cat[js], ctx ? &ctx->msa[js] : nullptr, train)
                                : cat[js];
    }
    std::array<Tensor3<S>, 3> fused =
        cfg.toggles.mf ? fuse_post.forward(att, ctx ? &ctx->f_post : nullptr) : att;
    ScoreMap<S> out;
    out.map = decoder.forward(fused, ctx ? &ctx->dec : nullptr, train);
    out.score = image_score(out.map, cfg.effective_top_k());
    return out;
  }

  // Accumulates parameter gradients for the trainable stages; the encoder and
  // prototype bank take no gradient.
  void backward(PrnForwardCtx<S>& ctx, const MatX<S>& gmap) {
    std::array<Tensor3<S>, 3> g = decoder.backward(ctx.dec, gmap);
    if (cfg.toggles.mf) g = fuse_post.backward(ctx.f_post, g);
    std::array<Tensor3<S>, 3> gcat;
    for (int j = 0; j < 3; ++j) {
      auto js = static_cast<std::size_t>(j);
      gcat[js] = cfg.toggles.msa ? msa_stacks[js].backward(ctx.msa[js], g[js]) : g[js];
    }
    if (cfg.toggles.mf) {
      const std::array<int, 3> c = cfg.encoder.channels;
      std::array<Tensor3<S>, 3> gff, gdf;
      for (int j = 0; j < 3; ++j) {
        auto js = static_cast<std::size_t>(j);
        gff[js] = slice_channels(gcat[js], 0, c[js]);
        gdf[js] = slice_channels(gcat[js], c[js], c[js]);
      }
      fuse_feat.backward(ctx.f_feat, gff);
      fuse_resid.backward(ctx.f_resid, gdf);
    }
  }

  std::vector<ParamRef<S>> trainable_params() {
    std::vector<ParamRef<S>> out;
    if (cfg.toggles.mf) {
      fuse_feat.collect("fuse_feat", out);
      fuse_resid.collect("fuse_resid", out);
      fuse_post.collect("fuse_post", out);
    }
    if (cfg.toggles.msa)
      for (int j = 0; j < 3; ++j)
        msa_stacks[static_cast<std::size_t>(j)].collect("msa" + std::to_string(j + 1), out);
    decoder.collect("decoder", out);
    return out;
  }

  // Every array in the model, trainable or not, for serialization.
  std::vector<ParamRef<S>> all_arrays() {
    std::vector<ParamRef<S>> out;
    encoder.collect("encoder", out);
    if (bank_ready) bank.collect("prototypes", out);
    fuse_feat.collect("fuse_feat", out);
    fuse_resid.collect("fuse_resid", out);
    fuse_post.collect("fuse_post", out);
    for (int j = 0; j < 3; ++j)
      msa_stacks[static_cast<std::size_t>(j)].collect("msa" + std::to_string(j + 1), out);
    decoder.collect("decoder", out);
    return out;
  }
};

}  // namespace prn
