#pragma once

#include "frontal/common.hpp"

#include <Eigen/Core>

#include <cstdint>

namespace frontal {

// Dense rank-3 tensor (channels x height x width) backed by one contiguous
// Eigen array. Layout is channel-major with row-major planes, so each channel
// is exposable as an Eigen 2-D map and the flat view works for whole-tensor
// expressions.
template <typename S>
struct TensorT {
  using Storage = Eigen::Array<S, Eigen::Dynamic, 1>;
  using PlaneT = Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using PlaneMap = Eigen::Map<PlaneT>;
  using ConstPlaneMap = Eigen::Map<const PlaneT>;

  int channels = 0;
  int height = 0;
  int width = 0;
  Storage data;

  TensorT() = default;
  TensorT(int c, int h, int w)
      : channels(c), height(h), width(w),
        data(Storage::Zero(static_cast<Eigen::Index>(c) * h * w)) {}

  static TensorT zeros(int c, int h, int w) { return TensorT(c, h, w); }

  static TensorT constant(int c, int h, int w, S value) {
    TensorT t(c, h, w);
    t.data.setConstant(value);
    return t;
  }

  Eigen::Index size() const { return data.size(); }
  Eigen::Index plane_size() const { return static_cast<Eigen::Index>(height) * width; }

  S& operator()(int c, int y, int x) {
    return data[(static_cast<Eigen::Index>(c) * height + y) * width + x];
  }
  S operator()(int c, int y, int x) const {
    return data[(static_cast<Eigen::Index>(c) * height + y) * width + x];
  }

  PlaneMap plane(int c) {
    return PlaneMap(data.data() + static_cast<Eigen::Index>(c) * plane_size(), height, width);
  }
  ConstPlaneMap plane(int c) const {
    return ConstPlaneMap(data.data() + static_cast<Eigen::Index>(c) * plane_size(), height, width);
  }

  bool same_shape(const TensorT& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  bool all_finite() const { return data.isFinite().all(); }

  std::uint64_t digest() const {
    std::uint64_t h = fnv1a64(&channels, sizeof(channels));
    h = fnv1a64(&height, sizeof(height), h);
    h = fnv1a64(&width, sizeof(width), h);
    return fnv1a64(data.data(), static_cast<std::size_t>(data.size()) * sizeof(S), h);
  }
};

using Tensor = TensorT<Scalar>;

}  // namespace frontal
