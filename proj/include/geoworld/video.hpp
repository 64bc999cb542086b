#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <string>

#include "geoworld/error.hpp"

namespace geoworld {

/// Dense T x H x W scalar field stored row-major as (t, y, x).
template <typename Scalar>
struct VideoGrid {
  int frames = 0;
  int height = 0;
  int width = 0;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> values;

  VideoGrid() = default;
  VideoGrid(int t, int h, int w, Scalar fill = Scalar(0)) : frames(t), height(h), width(w) {
    if (t < 1 || h < 1 || w < 1) {
      fail(ErrorCode::shape_mismatch, "video grid dimensions must be >= 1");
    }
    values.setConstant(static_cast<Eigen::Index>(t) * h * w, fill);
  }

  Eigen::Index size() const { return values.size(); }
  Eigen::Index frame_size() const { return static_cast<Eigen::Index>(height) * width; }
  Eigen::Index index(int t, int y, int x) const {
    return (static_cast<Eigen::Index>(t) * height + y) * width + x;
  }

  Scalar& operator()(int t, int y, int x) { return values[index(t, y, x)]; }
  Scalar operator()(int t, int y, int x) const { return values[index(t, y, x)]; }

  auto frame(int t) { return values.segment(static_cast<Eigen::Index>(t) * frame_size(), frame_size()); }
  auto frame(int t) const {
    return values.segment(static_cast<Eigen::Index>(t) * frame_size(), frame_size());
  }

  bool same_shape(const VideoGrid& o) const {
    return frames == o.frames && height == o.height && width == o.width;
  }
};

/// Depth in scene units; values <= 0 or non-finite mark invalid pixels.
using DepthVideo = VideoGrid<double>;
using Mask = VideoGrid<unsigned char>;

inline bool is_valid_depth(double d) { return std::isfinite(d) && d > 0; }

inline void require_same_shape(const DepthVideo& a, const DepthVideo& b, const char* what) {
  if (!a.same_shape(b)) fail(ErrorCode::shape_mismatch, std::string(what) + ": shape mismatch");
}

}  // namespace geoworld
