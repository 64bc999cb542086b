#pragma once

#include <utility>
#include <vector>

#include "geoworld/geom.hpp"
#include "geoworld/video.hpp"

namespace geoworld {

enum class DepthAlignment { none, scale, scale_shift };
enum class ScaleEstimator { least_squares, median_ratio };

struct DepthMetrics {
  double abs_rel = 0;
  double delta_125 = 0;  // percent
};

/// Abs Rel and delta < 1.25 over pixels where the mask is set and both depths
/// are valid, after optional per-sequence alignment of pred onto gt.
DepthMetrics depth_metrics(const DepthVideo& pred, const DepthVideo& gt, const Mask& mask,
                           DepthAlignment alignment,
                           ScaleEstimator estimator = ScaleEstimator::least_squares);
DepthMetrics depth_metrics(const DepthVideo& pred, const DepthVideo& gt, DepthAlignment alignment,
                           ScaleEstimator estimator = ScaleEstimator::least_squares);

inline constexpr double kDefaultMaxDt = 0.02;

using IndexPairs = std::vector<std::pair<std::size_t, std::size_t>>;

/// Greedy nearest-timestamp matching; each entry used at most once and
/// |dt| <= max_dt. Pairs are returned sorted by pred index.
IndexPairs associate(const Trajectory& pred, const Trajectory& gt, double max_dt = kDefaultMaxDt);

enum class TrajectoryAlignment { none, se3, sim3 };

/// RMSE of camera-center differences after aligning pred onto gt.
double ate(const Trajectory& pred, const Trajectory& gt, TrajectoryAlignment align,
           double max_dt = kDefaultMaxDt);

struct RpeResult {
  double trans = 0;
  double rot_deg = 0;
};

/// Relative pose error over associated frames delta apart. With scale_align the
/// prediction's translations are rescaled by the Sim(3) scale of its centers.
RpeResult rpe(const Trajectory& pred, const Trajectory& gt, int delta = 1, bool scale_align = true,
              double max_dt = kDefaultMaxDt);

struct PoseMetrics {
  double ate_rmse = 0;
  double rpe_trans = 0;
  double rpe_rot_deg = 0;
};

PoseMetrics pose_metrics(const Trajectory& pred, const Trajectory& gt, TrajectoryAlignment align,
                         int delta = 1, double max_dt = kDefaultMaxDt);

}  // namespace geoworld
