#include "geoworld/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

namespace geoworld {

namespace {

bool counted(const DepthVideo& pred, const DepthVideo& gt, const Mask* mask, Eigen::Index i) {
  return (mask == nullptr || mask->values[i] != 0) && is_valid_depth(gt.values[i]) &&
         is_valid_depth(pred.values[i]);
}

DepthMetrics depth_metrics_impl(const DepthVideo& pred, const DepthVideo& gt, const Mask* mask,
                                DepthAlignment alignment, ScaleEstimator estimator) {
  require_same_shape(pred, gt, "depth_metrics");
  if (mask && (mask->frames != gt.frames || mask->height != gt.height || mask->width != gt.width)) {
    fail(ErrorCode::shape_mismatch, "depth_metrics: mask shape mismatch");
  }

  std::vector<Eigen::Index> pixels;
  for (Eigen::Index i = 0; i < gt.size(); ++i) {
    if (counted(pred, gt, mask, i)) pixels.push_back(i);
  }
  if (pixels.empty()) fail(ErrorCode::invalid_argument, "depth_metrics: no valid pixels");

  double s = 1.0, shift = 0.0;
  if (alignment == DepthAlignment::scale) {
    if (estimator == ScaleEstimator::least_squares) {
      double pg = 0, pp = 0;
      for (auto i : pixels) {
        pg += pred.values[i] * gt.values[i];
        pp += pred.values[i] * pred.values[i];
      }
      s = pg / pp;
    } else {
      std::vector<double> ratios;
      ratios.reserve(pixels.size());
      for (auto i : pixels) ratios.push_back(gt.values[i] / pred.values[i]);
      std::sort(ratios.begin(), ratios.end());
      const std::size_t m = ratios.size() / 2;
      s = ratios.size() % 2 ? ratios[m] : 0.5 * (ratios[m - 1] + ratios[m]);
    }
    if (!(s > 0) || !std::isfinite(s)) fail(ErrorCode::degenerate, "depth_metrics: degenerate scale");
  } else if (alignment == DepthAlignment::scale_shift) {
    double n = 0, sp = 0, sg = 0;
    for (auto i : pixels) {
      n += 1;
      sp += pred.values[i];
      sg += gt.values[i];
    }
    const double mp = sp / n, mg = sg / n;
    double var = 0, cov = 0;
    for (auto i : pixels) {
      var += (pred.values[i] - mp) * (pred.values[i] - mp);
      cov += (pred.values[i] - mp) * (gt.values[i] - mg);
    }
    if (n < 2 || var <= 1e-24 * n * std::max(1.0, mp * mp)) {
      fail(ErrorCode::degenerate, "depth_metrics: constant prediction under the mask");
    }
    s = cov / var;
    shift = mg - s * mp;
  }

  double abs_rel = 0;
  double within = 0;
  for (auto i : pixels) {
    const double p = s * pred.values[i] + shift;
    const double g = gt.values[i];
    abs_rel += std::abs(p - g) / g;
    if (p > 0 && std::max(p / g, g / p) < 1.25) within += 1;
  }
  const double n = static_cast<double>(pixels.size());
  return {abs_rel / n, 100.0 * within / n};
}

}  // namespace

DepthMetrics depth_metrics(const DepthVideo& pred, const DepthVideo& gt, const Mask& mask,
                           DepthAlignment alignment, ScaleEstimator estimator) {
  return depth_metrics_impl(pred, gt, &mask, alignment, estimator);
}

DepthMetrics depth_metrics(const DepthVideo& pred, const DepthVideo& gt, DepthAlignment alignment,
                           ScaleEstimator estimator) {
  return depth_metrics_impl(pred, gt, nullptr, alignment, estimator);
}

IndexPairs associate(const Trajectory& pred, const Trajectory& gt, double max_dt) {
  if (pred.empty() || gt.empty()) fail(ErrorCode::invalid_argument, "associate: empty trajectory");
  if (!(max_dt >= 0)) fail(ErrorCode::invalid_argument, "associate: max_dt must be >= 0");

  std::vector<std::tuple<double, std::size_t, std::size_t>> candidates;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    // Timestamps are sorted, so only a window of gt entries can match.
    const double t = pred[i].timestamp;
    auto lo = std::lower_bound(gt.entries.begin(), gt.entries.end(), t - max_dt,
                               [](const TimedPose& e, double v) { return e.timestamp < v; });
    for (auto it = lo; it != gt.entries.end() && it->timestamp <= t + max_dt; ++it) {
      const double dt = std::abs(it->timestamp - t);
      if (dt <= max_dt) {
        candidates.emplace_back(dt, i, static_cast<std::size_t>(it - gt.entries.begin()));
      }
    }
  }
  std::sort(candidates.begin(), candidates.end());

  std::vector<bool> used_pred(pred.size(), false), used_gt(gt.size(), false);
  IndexPairs pairs;
  for (const auto& [dt, i, j] : candidates) {
    if (used_pred[i] || used_gt[j]) continue;
    used_pred[i] = used_gt[j] = true;
    pairs.emplace_back(i, j);
  }
  if (pairs.empty()) fail(ErrorCode::invalid_argument, "associate: no timestamps within max_dt");
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

namespace {

struct Associated {
  std::vector<Posed> pred;  // world_from_camera
  std::vector<Posed> gt;
};

Associated associated_poses(const Trajectory& pred, const Trajectory& gt, double max_dt) {
  pred.validate();
  gt.validate();
  Associated a;
  for (const auto& [i, j] : associate(pred, gt, max_dt)) {
    a.pred.push_back(to_convention(pred[i].pose, PoseConvention::world_from_camera));
    a.gt.push_back(to_convention(gt[j].pose, PoseConvention::world_from_camera));
  }
  return a;
}

std::vector<Eigen::Vector3d> centers(const std::vector<Posed>& poses) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(poses.size());
  for (const auto& p : poses) out.push_back(p.translation);
  return out;
}

double rms(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

// Scale mapping pred centers onto gt centers: Umeyama when well posed, else
// the ratio of RMS spreads about the centroids.
double center_scale(const std::vector<Eigen::Vector3d>& pred, const std::vector<Eigen::Vector3d>& gt) {
  try {
    return umeyama_sim3(pred, gt).scale;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::degenerate) throw;
  }
  auto spread = [](const std::vector<Eigen::Vector3d>& pts) {
    Eigen::Vector3d mu = Eigen::Vector3d::Zero();
    for (const auto& p : pts) mu += p;
    mu /= static_cast<double>(pts.size());
    double s = 0;
    for (const auto& p : pts) s += (p - mu).squaredNorm();
    return std::sqrt(s / static_cast<double>(pts.size()));
  };
  const double sp = spread(pred);
  const double sg = spread(gt);
  return sp > 0 && sg > 0 ? sg / sp : 1.0;
}

}  // namespace

double ate(const Trajectory& pred, const Trajectory& gt, TrajectoryAlignment align, double max_dt) {
  const Associated a = associated_poses(pred, gt, max_dt);
  const auto src = centers(a.pred);
  const auto dst = centers(a.gt);
  Sim3d T;
  if (align == TrajectoryAlignment::sim3) {
    T = umeyama_sim3(src, dst);
  } else if (align == TrajectoryAlignment::se3) {
    T = umeyama_se3(src, dst);
  }
  std::vector<double> err;
  err.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) err.push_back((T * src[i] - dst[i]).norm());
  return rms(err);
}

RpeResult rpe(const Trajectory& pred, const Trajectory& gt, int delta, bool scale_align,
              double max_dt) {
  if (delta < 1) fail(ErrorCode::invalid_argument, "rpe: delta must be >= 1");
  const Associated a = associated_poses(pred, gt, max_dt);
  const std::size_t d = static_cast<std::size_t>(delta);
  if (a.pred.size() < d + 1) {
    fail(ErrorCode::invalid_argument, "rpe: fewer than delta + 1 associated pairs");
  }
  const double s = scale_align ? center_scale(centers(a.pred), centers(a.gt)) : 1.0;

  std::vector<double> trans, rot;
  for (std::size_t i = 0; i + d < a.pred.size(); ++i) {
    const Posed rel_gt = compose(inverse(a.gt[i]), a.gt[i + d]);
    Posed rel_pred = compose(inverse(a.pred[i]), a.pred[i + d]);
    rel_pred.translation *= s;
    const Posed err = compose(inverse(rel_gt), rel_pred);
    trans.push_back(err.translation.norm());
    rot.push_back(rotation_geodesic_error(Eigen::Quaterniond::Identity(), err.rotation) * 180.0 /
                  std::numbers::pi);
  }
  return {rms(trans), rms(rot)};
}

PoseMetrics pose_metrics(const Trajectory& pred, const Trajectory& gt, TrajectoryAlignment align,
                         int delta, double max_dt) {
  PoseMetrics m;
  m.ate_rmse = ate(pred, gt, align, max_dt);
  const RpeResult r = rpe(pred, gt, delta, align == TrajectoryAlignment::sim3, max_dt);
  m.rpe_trans = r.trans;
  m.rpe_rot_deg = r.rot_deg;
  return m;
}

}  // namespace geoworld
