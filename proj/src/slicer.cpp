#include "geoworld/slicer.hpp"

#include <cmath>
#include <string>

#include "geoworld/error.hpp"

namespace geoworld {

void SliceConfig::validate() const {
  const double values[] = {max_low_texture_ratio, max_dynamic_ratio, max_flow_mag, max_fb_err_ratio};
  for (double v : values) {
    if (!std::isfinite(v)) fail(ErrorCode::invalid_argument, "slice: thresholds must be finite");
  }
  if (min_segment_len < 2) fail(ErrorCode::invalid_argument, "slice: min_segment_len must be >= 2");
}

bool passes_frame_criteria(const FrameStats& s, const SliceConfig& cfg) {
  return s.keypoint_count >= cfg.min_keypoints && s.low_texture_ratio <= cfg.max_low_texture_ratio &&
         s.dynamic_ratio <= cfg.max_dynamic_ratio;
}

bool breaks_after(const FrameStats& s, const SliceConfig& cfg) {
  return s.flow_mag > cfg.max_flow_mag || s.fb_err_ratio > cfg.max_fb_err_ratio;
}

std::vector<Segment> slice(const std::vector<FrameStats>& stats, const SliceConfig& cfg) {
  cfg.validate();
  if (stats.empty()) fail(ErrorCode::invalid_argument, "slice: empty stats");
  for (std::size_t i = 0; i < stats.size(); ++i) {
    if (stats[i].frame != static_cast<int>(i)) {
      fail(ErrorCode::invalid_argument,
           "slice: frames must be contiguous from 0 (entry " + std::to_string(i) + " has frame " +
               std::to_string(stats[i].frame) + ")");
    }
  }

  std::vector<Segment> out;
  int start = -1;
  auto close = [&](int end) {
    if (start >= 0 && end - start >= cfg.min_segment_len) out.push_back({start, end});
    start = -1;
  };
  const int n = static_cast<int>(stats.size());
  for (int i = 0; i < n; ++i) {
    const FrameStats& s = stats[static_cast<std::size_t>(i)];
    if (!passes_frame_criteria(s, cfg)) {
      close(i);
      continue;
    }
    if (start < 0) start = i;
    if (breaks_after(s, cfg)) close(i + 1);
  }
  close(n);
  return out;
}

}  // namespace geoworld
