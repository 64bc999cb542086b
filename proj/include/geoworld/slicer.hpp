#pragma once

#include <vector>

namespace geoworld {

/// Precomputed per-frame statistics. flow_mag and fb_err_ratio describe the
/// transition from this frame to the next one.
struct FrameStats {
  int frame = 0;
  int keypoint_count = 0;
  double low_texture_ratio = 0;
  double dynamic_ratio = 0;
  double flow_mag = 0;
  double fb_err_ratio = 0;
};

struct SliceConfig {
  int min_keypoints = 50;
  double max_low_texture_ratio = 0.5;
  double max_dynamic_ratio = 0.5;
  double max_flow_mag = 60.0;
  double max_fb_err_ratio = 2.0;
  int min_segment_len = 8;

  void validate() const;
};

/// Half-open frame range [start, end).
struct Segment {
  int start = 0;
  int end = 0;

  int length() const { return end - start; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Frame is usable on its own (enough keypoints, texture, static content).
bool passes_frame_criteria(const FrameStats& s, const SliceConfig& cfg);

/// Motion to the next frame is too large or correspondences unreliable.
bool breaks_after(const FrameStats& s, const SliceConfig& cfg);

/// Splits a stream at rejected frames and truncates after frames whose outgoing
/// transition fails; segments shorter than min_segment_len are dropped.
std::vector<Segment> slice(const std::vector<FrameStats>& stats, const SliceConfig& cfg = {});

}  // namespace geoworld
