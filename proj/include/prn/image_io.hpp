#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "prn/tensor.hpp"

namespace prn {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ImageU8 {
  int h = 0, w = 0, channels = 0;  // 1 (gray) or 3 (rgb), interleaved row-major
  std::vector<std::uint8_t> pixels;
};

ImageU8 read_png(const std::string& path);
void write_png(const std::string& path, const ImageU8& img);

// Planar float image in [0, 1]; grayscale inputs are replicated to 3 channels.
Tensor3f to_float_image(const ImageU8& img);
ImageU8 from_float_image(const Tensor3f& img);

// Binary mask: pixels >= 128 map to 1.0, the rest to 0.0 (first channel).
MatXf to_float_mask(const ImageU8& img);
ImageU8 from_float_gray(const MatXf& map);

// Nearest-neighbor resize with half-pixel centers, then re-binarize at 0.5.
MatXf resize_mask_nearest(const MatXf& mask, int oh, int ow);

// Decode and bilinearly resize to size x size (exact pass-through when the
// decoded image already matches).
Tensor3f load_image(const std::string& path, int size);
MatXf load_mask(const std::string& path, int size);
void save_image(const std::string& path, const Tensor3f& img);
void save_gray(const std::string& path, const MatXf& map);

}  // namespace prn
