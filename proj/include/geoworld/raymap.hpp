#pragma once

#include <Eigen/Core>

#include <span>
#include <vector>

#include "geoworld/depth_codec.hpp"
#include "geoworld/geom.hpp"

namespace geoworld {

struct RayEncodingConfig {
  double s_ray = 2.0;

  void validate() const {
    if (!(s_ray > 0) || !std::isfinite(s_ray)) {
      fail(ErrorCode::invalid_argument, "s_ray must be positive and finite");
    }
  }
};

/// sign(t') * log(1 + |t'|) with t' = s_ray * t / max_disparity, per component.
Eigen::Vector3d encode_translation(const Eigen::Vector3d& t, const ClipScale& scale,
                                   const RayEncodingConfig& cfg = {});

/// Inverse of encode_translation; returns t / max_disparity. The metric scale
/// of the clip cannot be recovered from the encoding.
Eigen::Vector3d decode_translation(const Eigen::Vector3d& t_log, const RayEncodingConfig& cfg = {});

/// T x 6 x H x W field. Channels 0-2 hold world-frame ray directions whose
/// camera-frame z component is 1; channels 3-5 hold ray origins.
struct Raymap {
  static constexpr int kChannels = 6;

  int frames = 0;
  int height = 0;
  int width = 0;
  Eigen::ArrayXd values;

  Raymap() = default;
  Raymap(int t, int h, int w);

  Eigen::Index index(int t, int c, int y, int x) const {
    return ((static_cast<Eigen::Index>(t) * kChannels + c) * height + y) * width + x;
  }
  double& operator()(int t, int c, int y, int x) { return values[index(t, c, y, x)]; }
  double operator()(int t, int c, int y, int x) const { return values[index(t, c, y, x)]; }

  Eigen::Vector3d direction(int t, int y, int x) const;
  Eigen::Vector3d origin(int t, int y, int x) const;
  void set_origin(int t, int y, int x, const Eigen::Vector3d& o);
};

/// Builds a raymap from camera_from_world extrinsics sampled at pixel centers.
/// Origin channels carry the log-encoded camera centers.
Raymap build_raymap(std::span<const Posed> extrinsics, const Intrinsicsd& K,
                    const ClipScale& scale, const RayEncodingConfig& cfg = {});

/// Applies decode_translation to every origin pixel.
Raymap decode_raymap_origins(const Raymap& r, const RayEncodingConfig& cfg = {});

/// Per-frame camera axes estimated from a raymap (columns of the rotation).
struct RayFrameAxes {
  Eigen::Vector3d x, y, z;
  Eigen::Vector3d center;
  Eigen::Vector3d look_at;
};

RayFrameAxes estimate_frame_axes(const Raymap& r, int t);

struct CameraEstimate {
  std::vector<Posed> extrinsics;  // camera_from_world
  std::vector<Intrinsicsd> intrinsics;
};

/// Mean-ray camera recovery. Origins must already be decoded. Focal length is
/// reported as |look_at - center|, which is ~1 for unit-z directions; use
/// recover_intrinsics_lsq for the true intrinsics.
CameraEstimate raymap_to_camera(const Raymap& r);

/// Per-frame least-squares fit of (fx, fy, cx, cy) to the ray directions given
/// camera_from_world extrinsics.
std::vector<Intrinsicsd> recover_intrinsics_lsq(const Raymap& r, std::span<const Posed> extrinsics);

/// ceil(T/4) x 24 x H/8 x W/8. Channel k*6 + c of group g holds channel c of frame 4g + k.
struct LatentRaymap {
  static constexpr int kTemporalGroup = 4;
  static constexpr int kSpatialFactor = 8;
  static constexpr int kChannels = Raymap::kChannels * kTemporalGroup;

  int groups = 0;
  int height = 0;
  int width = 0;
  Eigen::ArrayXd values;

  LatentRaymap() = default;
  LatentRaymap(int g, int h, int w);

  Eigen::Index index(int g, int c, int y, int x) const {
    return ((static_cast<Eigen::Index>(g) * kChannels + c) * height + y) * width + x;
  }
  double& operator()(int g, int c, int y, int x) { return values[index(g, c, y, x)]; }
  double operator()(int g, int c, int y, int x) const { return values[index(g, c, y, x)]; }
};

/// Bilinear x8 spatial downsample (half-pixel sampling) followed by temporal
/// grouping of 4 frames into channels. Missing frames of the last group are zero.
LatentRaymap rearrange_raymap(const Raymap& r);

/// Inverse channel grouping plus bilinear x8 upsample back to frames x height x width.
Raymap unrearrange_raymap(const LatentRaymap& l, int frames, int height, int width);

/// Half-pixel bilinear resampling of a row-major H x W plane, edges clamped.
Eigen::ArrayXd resize_bilinear(const Eigen::Ref<const Eigen::ArrayXd>& src, int src_h, int src_w,
                               int dst_h, int dst_w);

}  // namespace geoworld
