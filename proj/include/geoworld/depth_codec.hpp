#pragma once

#include <optional>

#include "geoworld/video.hpp"

namespace geoworld {

/// Per-clip maximum disparity shared by the depth and translation codecs.
struct ClipScale {
  double max_disparity = 1.0;

  void validate() const {
    if (!(max_disparity > 0) || !std::isfinite(max_disparity)) {
      fail(ErrorCode::invalid_argument, "clip scale must be positive and finite");
    }
  }
};

/// Disparity remapped to [-1, 1]; invalid pixels hold NaN and a false mask entry.
struct NormalizedDisparityVideo {
  VideoGrid<double> values;
  Mask valid;
};

struct DepthClipRange {
  double d_min = 1e-2;
  double d_max = 1e2;
};

/// Below this disparity a decoded pixel is reported invalid instead of infinite.
inline constexpr double kMinDecodedDisparity = 1e-6;

struct EncodedDepth {
  NormalizedDisparityVideo disparity;
  ClipScale scale;
};

/// depth -> 1/sqrt(clip(depth)) -> divide by the clip maximum -> map [0,1] to [-1,1].
EncodedDepth encode_disparity(const DepthVideo& depth, DepthClipRange range = {});

/// Inverse of encode_disparity. Without a scale the depth is recovered up to a
/// single global factor. Pixels with disparity <= kMinDecodedDisparity, or
/// already invalid, decode to 0 (invalid).
DepthVideo decode_disparity(const NormalizedDisparityVideo& norm,
                            std::optional<ClipScale> scale = std::nullopt);

}  // namespace geoworld
