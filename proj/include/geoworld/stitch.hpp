#pragma once

#include <vector>

#include "geoworld/geom.hpp"
#include "geoworld/video.hpp"

namespace geoworld {

template <typename Payload>
struct Window {
  int start = 0;
  Payload payload;
};

/// Overlapping windows in frame order; starts advance by exactly `stride`.
template <typename Payload>
struct WindowSet {
  std::vector<Window<Payload>> windows;
  int stride = 8;
};

struct StitchedDepth {
  DepthVideo video;             // frames start at windows.front().start
  std::vector<double> scales;   // factor applied to each window (1 for the first)
};

/// Left-to-right sweep: each incoming window is rescaled by the mean ratio
/// accumulated/incoming over jointly valid overlap pixels, then blended in with
/// a linear ramp (incoming weight 0 at the first overlap frame, 1 at the last).
StitchedDepth stitch_depth(const WindowSet<DepthVideo>& ws);

struct StitchedTrajectory {
  Trajectory trajectory;
  std::vector<Sim3d> alignments;   // maps each window into the output frame
  std::vector<bool> se3_fallback;  // overlap centers were degenerate
};

/// Each incoming window is mapped onto the accumulated trajectory by a Sim(3)
/// fitted on overlapping camera centers. Overlap translations blend linearly and
/// rotations by slerp with the same ramp as stitch_depth.
StitchedTrajectory stitch_poses(const WindowSet<Trajectory>& ws);

struct KalmanConfig {
  double process_sigma = 0.01;
  double obs_sigma = 0.05;
};

/// Constant-velocity Kalman filter with Rauch-Tung-Striebel smoothing, run per
/// translation axis of the camera centers. Rotations and timestamps pass through.
Trajectory kalman_smooth(const Trajectory& traj, const KalmanConfig& cfg = {});

}  // namespace geoworld
