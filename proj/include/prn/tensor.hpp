#pragma once

#include <Eigen/Core>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace prn {

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatXf = MatX<float>;
using MatXd = MatX<double>;

// Dense C x H x W tensor stored as a row-major (channels x H*W) Eigen matrix,
// so per-channel maps are contiguous rows and cross-channel ops are plain
// matrix expressions.
template <typename Scalar>
struct Tensor3 {
  MatX<Scalar> data;  // channels x (h*w), spatial row-major
  int h = 0;
  int w = 0;

  Tensor3() = default;
  Tensor3(int channels, int height, int width)
      : data(MatX<Scalar>::Zero(channels, static_cast<Eigen::Index>(height) * width)),
        h(height),
        w(width) {}
  Tensor3(MatX<Scalar> m, int height, int width) : data(std::move(m)), h(height), w(width) {
    if (data.cols() != static_cast<Eigen::Index>(h) * w)
      throw std::invalid_argument("Tensor3: matrix cols != h*w");
  }

  static Tensor3 zeros(int channels, int height, int width) { return Tensor3(channels, height, width); }

  int channels() const { return static_cast<int>(data.rows()); }
  Eigen::Index size() const { return data.size(); }
  bool same_shape(const Tensor3& o) const {
    return channels() == o.channels() && h == o.h && w == o.w;
  }

  Scalar at(int c, int y, int x) const { return data(c, static_cast<Eigen::Index>(y) * w + x); }
  Scalar& at(int c, int y, int x) { return data(c, static_cast<Eigen::Index>(y) * w + x); }

  // View of one channel as an h x w map.
  Eigen::Map<const MatX<Scalar>> channel(int c) const {
    return Eigen::Map<const MatX<Scalar>>(data.row(c).data(), h, w);
  }
  Eigen::Map<MatX<Scalar>> channel(int c) {
    return Eigen::Map<MatX<Scalar>>(data.row(c).data(), h, w);
  }

  template <typename T>
  Tensor3<T> cast() const {
    Tensor3<T> out;
    out.data = data.template cast<T>();
    out.h = h;
    out.w = w;
    return out;
  }

  std::string shape_str() const {
    return "(" + std::to_string(channels()) + ", " + std::to_string(h) + ", " + std::to_string(w) + ")";
  }
};

using Tensor3f = Tensor3<float>;
using Tensor3d = Tensor3<double>;

template <typename Scalar>
Tensor3<Scalar> concat_channels(const std::vector<const Tensor3<Scalar>*>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: empty input");
  int h = parts[0]->h, w = parts[0]->w;
  int ch = 0;
  for (const auto* p : parts) {
    if (p->h != h || p->w != w) throw std::invalid_argument("concat_channels: spatial shape mismatch");
    ch += p->channels();
  }
  Tensor3<Scalar> out(ch, h, w);
  int row = 0;
  for (const auto* p : parts) {
    out.data.middleRows(row, p->channels()) = p->data;
    row += p->channels();
  }
  return out;
}

template <typename Scalar>
Tensor3<Scalar> concat_channels(const Tensor3<Scalar>& a, const Tensor3<Scalar>& b) {
  return concat_channels<Scalar>({&a, &b});
}

template <typename Scalar>
Tensor3<Scalar> slice_channels(const Tensor3<Scalar>& x, int first, int count) {
  if (first < 0 || count < 0 || first + count > x.channels())
    throw std::out_of_range("slice_channels: range out of bounds");
  Tensor3<Scalar> out(count, x.h, x.w);
  out.data = x.data.middleRows(first, count);
  return out;
}

template <typename Scalar>
void check_shape(const Tensor3<Scalar>& x, int channels, int h, int w, const char* where) {
  if (x.channels() != channels || x.h != h || x.w != w)
    throw std::invalid_argument(std::string(where) + ": expected (" + std::to_string(channels) + ", " +
                                std::to_string(h) + ", " + std::to_string(w) + "), got " + x.shape_str());
}

}  // namespace prn
