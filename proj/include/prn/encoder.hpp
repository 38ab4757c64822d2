#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>

#include "prn/layers.hpp"

namespace prn {

struct EncoderConfig {
  int input_size = 32;
  std::array<int, 3> channels = {8, 16, 32};

  void validate() const {
    if (input_size < 32 || input_size % 32 != 0)
      throw std::invalid_argument("EncoderConfig: input_size must be a positive multiple of 32");
    if (!(channels[0] < channels[1] && channels[1] < channels[2]) || channels[0] < 1)
      throw std::invalid_argument("EncoderConfig: channels must be positive and strictly increasing");
  }

  // Spatial side of each pyramid scale: input / 4, / 8, / 16.
  std::array<int, 3> scale_sizes() const {
    return {input_size / 4, input_size / 8, input_size / 16};
  }
};

template <typename S>
struct FeaturePyramid {
  std::array<Tensor3<S>, 3> scales;
};

// Frozen three-scale convolutional feature extractor. A stride-4 stem is
// followed by three two-unit blocks; blocks 2 and 3 open with a stride-2
// convolution, giving spatial sides input/4, input/8, input/16. Weights are
// seeded at construction and never trained; all normalization uses the
// sample's own statistics, so extraction is a pure function of the image.
template <typename S>
struct Encoder {
  EncoderConfig cfg;
  ConvNormRelu<S> stem;
  std::array<std::array<ConvNormRelu<S>, 2>, 3> blocks;

  void init(const EncoderConfig& config, Rng rng) {
    config.validate();
    cfg = config;
    stem.init(3, cfg.channels[0], 5, 4, 2, rng, /*affine=*/false, /*shared_stats=*/false);
    int in = cfg.channels[0];
    for (int b = 0; b < 3; ++b) {
      const int out = cfg.channels[static_cast<std::size_t>(b)];
      const int stride = b == 0 ? 1 : 2;
      blocks[static_cast<std::size_t>(b)][0].init(in, out, 3, stride, 1, rng, false, false);
      blocks[static_cast<std::size_t>(b)][1].init(out, out, 3, 1, 1, rng, false, false);
      in = out;
    }
  }

  FeaturePyramid<S> extract(const Tensor3<S>& image) {
    check_shape(image, 3, cfg.input_size, cfg.input_size, "Encoder::extract");
    FeaturePyramid<S> fp;
    Tensor3<S> x = stem.forward(image, nullptr, false);
    for (int b = 0; b < 3; ++b) {
      x = blocks[static_cast<std::size_t>(b)][0].forward(x, nullptr, false);
      x = blocks[static_cast<std::size_t>(b)][1].forward(x, nullptr, false);
      fp.scales[static_cast<std::size_t>(b)] = x;
    }
    return fp;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    stem.collect(prefix + ".stem", out);
    for (int b = 0; b < 3; ++b)
      for (int u = 0; u < 2; ++u)
        blocks[static_cast<std::size_t>(b)][static_cast<std::size_t>(u)].collect(
            prefix + ".block" + std::to_string(b + 1) + ".unit" + std::to_string(u + 1), out);
  }
};

}  // namespace prn
