#include "geoworld/depth_codec.hpp"

#include <algorithm>
#include <limits>
#include <vector>

#include "geoworld/parallel.hpp"

namespace geoworld {

EncodedDepth encode_disparity(const DepthVideo& depth, DepthClipRange range) {
  if (!(range.d_min > 0)) fail(ErrorCode::invalid_argument, "encode_disparity: d_min must be > 0");
  if (!(range.d_min < range.d_max)) {
    fail(ErrorCode::invalid_argument, "encode_disparity: d_min must be < d_max");
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  EncodedDepth out;
  out.disparity.values = VideoGrid<double>(depth.frames, depth.height, depth.width, nan);
  out.disparity.valid = Mask(depth.frames, depth.height, depth.width, 0);

  // Raw disparity first; the per-frame maxima combine exactly in any order.
  std::vector<double> frame_max(static_cast<std::size_t>(depth.frames), 0.0);
  parallel_for(static_cast<std::size_t>(depth.frames), [&](std::size_t t) {
    auto src = depth.frame(static_cast<int>(t));
    auto dst = out.disparity.values.frame(static_cast<int>(t));
    auto valid = out.disparity.valid.frame(static_cast<int>(t));
    double m = 0.0;
    for (Eigen::Index i = 0; i < src.size(); ++i) {
      if (!is_valid_depth(src[i])) continue;
      const double disp = 1.0 / std::sqrt(std::clamp(src[i], range.d_min, range.d_max));
      dst[i] = disp;
      valid[i] = 1;
      m = std::max(m, disp);
    }
    frame_max[t] = m;
  });

  const double max_disp = *std::max_element(frame_max.begin(), frame_max.end());
  if (!(max_disp > 0)) fail(ErrorCode::invalid_argument, "encode_disparity: no valid pixels");
  out.scale.max_disparity = max_disp;

  parallel_for(static_cast<std::size_t>(depth.frames), [&](std::size_t t) {
    auto dst = out.disparity.values.frame(static_cast<int>(t));
    auto valid = out.disparity.valid.frame(static_cast<int>(t));
    for (Eigen::Index i = 0; i < dst.size(); ++i) {
      if (valid[i]) dst[i] = 2.0 * (dst[i] / max_disp) - 1.0;
    }
  });
  return out;
}

DepthVideo decode_disparity(const NormalizedDisparityVideo& norm, std::optional<ClipScale> scale) {
  const auto& v = norm.values;
  if (!norm.valid.same_shape(Mask(v.frames, v.height, v.width))) {
    fail(ErrorCode::shape_mismatch, "decode_disparity: mask shape differs from values");
  }
  double s = 1.0;
  if (scale) {
    scale->validate();
    s = scale->max_disparity;
  }
  DepthVideo out(v.frames, v.height, v.width, 0.0);
  parallel_for(static_cast<std::size_t>(v.frames), [&](std::size_t t) {
    auto src = v.frame(static_cast<int>(t));
    auto valid = norm.valid.frame(static_cast<int>(t));
    auto dst = out.frame(static_cast<int>(t));
    for (Eigen::Index i = 0; i < src.size(); ++i) {
      if (!valid[i] || !std::isfinite(src[i])) continue;
      const double disp = 0.5 * (src[i] + 1.0) * s;
      if (disp <= kMinDecodedDisparity) continue;
      dst[i] = 1.0 / (disp * disp);
    }
  });
  return out;
}

}  // namespace geoworld
