#pragma once

#include <string>
#include <vector>

#include "prn/tensor.hpp"

namespace prn {

// Named view onto one parameter or statistics buffer. `grad` is null for
// buffers and frozen arrays; `decay` marks arrays included in L2 weight decay.
template <typename Scalar>
struct ParamRef {
  std::string name;
  Scalar* value = nullptr;
  Scalar* grad = nullptr;
  Eigen::Index size = 0;
  std::vector<Eigen::Index> shape;
  bool decay = true;
};

template <typename Scalar>
void add_param(std::vector<ParamRef<Scalar>>& out, const std::string& name, MatX<Scalar>& value,
               MatX<Scalar>& grad, bool decay = true) {
  out.push_back({name, value.data(), grad.data(), value.size(), {value.rows(), value.cols()}, decay});
}

template <typename Scalar>
void add_param(std::vector<ParamRef<Scalar>>& out, const std::string& name, VecX<Scalar>& value,
               VecX<Scalar>& grad, bool decay = true) {
  out.push_back({name, value.data(), grad.data(), value.size(), {value.size()}, decay});
}

}  // namespace prn
