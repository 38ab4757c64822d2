#include "prn/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "prn/layers.hpp"

namespace prn {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

ImageU8 read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw ImageIoError("cannot open PNG for reading: " + path);
  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
    throw ImageIoError("not a PNG file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw ImageIoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ImageIoError("png_create_info_struct failed");
  }

  ImageU8 out;
  std::vector<png_bytep> rows;
  bool failed = false;
  // Everything interacting with libpng lives in this block; on error libpng
  // longjmps back to the setjmp point and we throw after cleanup.
  if (setjmp(png_jmpbuf(png))) {
    failed = true;
  } else {
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_packing(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
      png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    out.h = static_cast<int>(png_get_image_height(png, info));
    out.w = static_cast<int>(png_get_image_width(png, info));
    out.channels = static_cast<int>(png_get_channels(png, info));
    if (out.channels != 1 && out.channels != 3) {
      failed = true;
    } else {
      out.pixels.resize(static_cast<std::size_t>(out.h) * out.w * out.channels);
      rows.resize(static_cast<std::size_t>(out.h));
      for (int y = 0; y < out.h; ++y)
        rows[static_cast<std::size_t>(y)] =
            out.pixels.data() + static_cast<std::size_t>(y) * out.w * out.channels;
      png_read_image(png, rows.data());
      png_read_end(png, nullptr);
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (failed) throw ImageIoError("failed to decode PNG: " + path);
  return out;
}

void write_png(const std::string& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw ImageIoError("write_png: image must have 1 or 3 channels");
  if (img.pixels.size() != static_cast<std::size_t>(img.h) * img.w * img.channels)
    throw ImageIoError("write_png: pixel buffer size mismatch");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw ImageIoError("cannot open PNG for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw ImageIoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw ImageIoError("png_create_info_struct failed");
  }

  std::vector<png_bytep> rows(static_cast<std::size_t>(img.h));
  bool failed = false;
  if (setjmp(png_jmpbuf(png))) {
    failed = true;
  } else {
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.h; ++y)
      rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(
          img.pixels.data() + static_cast<std::size_t>(y) * img.w * img.channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
  }
  png_destroy_write_struct(&png, &info);
  if (failed) throw ImageIoError("failed to encode PNG: " + path);
}

Tensor3f to_float_image(const ImageU8& img) {
  Tensor3f out(3, img.h, img.w);
  const float inv = 1.0f / 255.0f;
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c) {
        const int src = img.channels == 1 ? 0 : c;
        out.at(c, y, x) =
            inv * img.pixels[(static_cast<std::size_t>(y) * img.w + x) * img.channels +
                             static_cast<std::size_t>(src)];
      }
  return out;
}

ImageU8 from_float_image(const Tensor3f& img) {
  if (img.channels() != 3) throw ImageIoError("from_float_image: expected 3 channels");
  ImageU8 out;
  out.h = img.h;
  out.w = img.w;
  out.channels = 3;
  out.pixels.resize(static_cast<std::size_t>(img.h) * img.w * 3);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c) {
        float v = std::min(std::max(img.at(c, y, x), 0.0f), 1.0f);
        out.pixels[(static_cast<std::size_t>(y) * img.w + x) * 3 + static_cast<std::size_t>(c)] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  return out;
}

MatXf to_float_mask(const ImageU8& img) {
  MatXf out(img.h, img.w);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      out(y, x) = img.pixels[(static_cast<std::size_t>(y) * img.w + x) * img.channels] >= 128 ? 1.0f
                                                                                              : 0.0f;
  return out;
}

ImageU8 from_float_gray(const MatXf& map) {
  ImageU8 out;
  out.h = static_cast<int>(map.rows());
  out.w = static_cast<int>(map.cols());
  out.channels = 1;
  out.pixels.resize(static_cast<std::size_t>(out.h) * out.w);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) {
      float v = std::min(std::max(map(y, x), 0.0f), 1.0f);
      out.pixels[static_cast<std::size_t>(y) * out.w + x] =
          static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  return out;
}

MatXf resize_mask_nearest(const MatXf& mask, int oh, int ow) {
  const int ih = static_cast<int>(mask.rows());
  const int iw = static_cast<int>(mask.cols());
  if (ih == oh && iw == ow) return mask;
  MatXf out(oh, ow);
  for (int y = 0; y < oh; ++y) {
    int sy = static_cast<int>(std::floor((y + 0.5) * ih / oh));
    sy = std::min(std::max(sy, 0), ih - 1);
    for (int x = 0; x < ow; ++x) {
      int sx = static_cast<int>(std::floor((x + 0.5) * iw / ow));
      sx = std::min(std::max(sx, 0), iw - 1);
      out(y, x) = mask(sy, sx) >= 0.5f ? 1.0f : 0.0f;
    }
  }
  return out;
}

Tensor3f load_image(const std::string& path, int size) {
  Tensor3f img = to_float_image(read_png(path));
  return bilinear_resize(img, size, size);
}

MatXf load_mask(const std::string& path, int size) {
  return resize_mask_nearest(to_float_mask(read_png(path)), size, size);
}

void save_image(const std::string& path, const Tensor3f& img) {
  write_png(path, from_float_image(img));
}

void save_gray(const std::string& path, const MatXf& map) {
  write_png(path, from_float_gray(map));
}

}  // namespace prn
