#pragma once

#include <Eigen/Core>

#include <vector>

#include "geoworld/raymap.hpp"
#include "geoworld/video.hpp"

namespace geoworld {

/// T x H x W x 3 points with a validity mask and the depth they were projected from.
struct PointMap {
  int frames = 0;
  int height = 0;
  int width = 0;
  Eigen::ArrayXd points;
  Mask valid;
  DepthVideo depth;

  Eigen::Index index(int t, int y, int x) const {
    return ((static_cast<Eigen::Index>(t) * height + y) * width + x) * 3;
  }
  Eigen::Vector3d at(int t, int y, int x) const {
    const Eigen::Index i = index(t, y, x);
    return {points[i], points[i + 1], points[i + 2]};
  }
};

/// P = depth * direction + origin per pixel. The raymap origins must be
/// decoded and share the depth's normalization.
PointMap project_pointmap(const DepthVideo& depth, const Raymap& decoded);

struct SsiAlignment {
  double scale = 1.0;
  double shift = 0.0;
};

/// Closed-form argmin over (s, t) of sum_mask (s * pred + t - gt)^2. Pixels
/// count when the mask is nonzero and both values are finite.
SsiAlignment ssi_align(const DepthVideo& pred, const DepthVideo& gt, const Mask& mask);

struct SsiLossConfig {
  double alpha = 0.5;
  int num_scales = 4;
};

/// Mean |aligned residual| plus alpha times the multi-scale gradient term.
double ssi_loss(const DepthVideo& pred, const DepthVideo& gt, const Mask& mask,
                const SsiLossConfig& cfg = {});

/// Inverse-depth weighted mean of per-point distances, weights normalized to mean one.
double pointmap_loss(const PointMap& pred, const PointMap& gt, int norm_p = 2);

inline constexpr double kPointmapDepthFloor = 1e-6;

struct MsSsimConfig {
  std::vector<double> weights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  double dynamic_range = 1.0;
};

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), valid region only.
double ssim(const Eigen::ArrayXXd& a, const Eigen::ArrayXXd& b, double dynamic_range = 1.0);

/// Product over dyadic scales of max(SSIM_i, 0)^w_i.
double ms_ssim(const Eigen::ArrayXXd& a, const Eigen::ArrayXXd& b, const MsSsimConfig& cfg = {});

}  // namespace geoworld
