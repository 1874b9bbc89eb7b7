// Core dense types. Everything downstream works on row-major double planes so
// that a (C,H,W) tensor channel can be mapped without copying.
#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sfm {

using Scalar = double;
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CPlane = Eigen::Array<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BPlane = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
using PlaneMap = Eigen::Map<Plane>;
using ConstPlaneMap = Eigen::Map<const Plane>;
using LabelMap = Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// N-dimensional (1..4) dense array, row-major with the last axis fastest.
// This is the unit of file I/O; in-memory math happens on FeatureMap/Plane.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::uint32_t> shape) : shape_(std::move(shape)) {
    if (shape_.empty() || shape_.size() > 4)
      throw std::invalid_argument("tensor rank must be 1..4");
    std::size_t n = 1;
    for (auto e : shape_) {
      if (e == 0) throw std::invalid_argument("tensor extent must be nonzero");
      n *= e;
    }
    data_ = Vec::Zero(static_cast<Eigen::Index>(n));
  }

  const std::vector<std::uint32_t>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Eigen::Index size() const { return data_.size(); }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Vec& vec() { return data_; }
  const Vec& vec() const { return data_; }

  Scalar& operator[](Eigen::Index i) { return data_[i]; }
  Scalar operator[](Eigen::Index i) const { return data_[i]; }

 private:
  std::vector<std::uint32_t> shape_;
  Vec data_;
};

// Channel-major (C,H,W) stack of planes, the working type of the pipeline.
struct FeatureMap {
  int C = 0, H = 0, W = 0;
  Vec data;  // C*H*W, row-major per channel

  FeatureMap() = default;
  FeatureMap(int c, int h, int w) : C(c), H(h), W(w) {
    if (c <= 0 || h <= 0 || w <= 0)
      throw std::invalid_argument("feature map dims must be positive");
    data = Vec::Zero(static_cast<Eigen::Index>(c) * h * w);
  }

  PlaneMap channel(int c) {
    return PlaneMap(data.data() + static_cast<Eigen::Index>(c) * H * W, H, W);
  }
  ConstPlaneMap channel(int c) const {
    return ConstPlaneMap(data.data() + static_cast<Eigen::Index>(c) * H * W, H, W);
  }
  Scalar& at(int c, int i, int j) {
    return data[(static_cast<Eigen::Index>(c) * H + i) * W + j];
  }
  Scalar at(int c, int i, int j) const {
    return data[(static_cast<Eigen::Index>(c) * H + i) * W + j];
  }
};

inline FeatureMap from_plane(const Plane& p) {
  FeatureMap f(1, static_cast<int>(p.rows()), static_cast<int>(p.cols()));
  f.channel(0) = p;
  return f;
}

}  // namespace sfm
