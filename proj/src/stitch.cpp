#include "geoworld/stitch.hpp"

#include <algorithm>
#include <string>

namespace geoworld {

namespace {

template <typename Payload, typename LengthFn>
void validate_windows(const WindowSet<Payload>& ws, LengthFn length, int min_overlap) {
  if (ws.windows.empty()) fail(ErrorCode::invalid_argument, "stitch: no windows");
  if (ws.stride < 1) fail(ErrorCode::invalid_argument, "stitch: stride must be >= 1");
  int covered_end = ws.windows.front().start + length(ws.windows.front().payload);
  for (std::size_t k = 1; k < ws.windows.size(); ++k) {
    const auto& w = ws.windows[k];
    if (w.start != ws.windows[k - 1].start + ws.stride) {
      fail(ErrorCode::invalid_argument,
           "stitch: window " + std::to_string(k) + " does not start one stride after its predecessor");
    }
    if (covered_end - w.start < min_overlap) {
      fail(ErrorCode::invalid_argument, "stitch: window " + std::to_string(k) + " overlaps fewer than " +
                                            std::to_string(min_overlap) + " frames");
    }
    covered_end = std::max(covered_end, w.start + length(w.payload));
  }
}

// Incoming weight at overlap frame j of n; endpoints included.
double ramp(int j, int n) { return n == 1 ? 1.0 : static_cast<double>(j) / (n - 1); }

}  // namespace

StitchedDepth stitch_depth(const WindowSet<DepthVideo>& ws) {
  validate_windows(ws, [](const DepthVideo& d) { return d.frames; }, 1);
  const int origin = ws.windows.front().start;
  const DepthVideo& first = ws.windows.front().payload;
  for (const auto& w : ws.windows) {
    if (w.payload.height != first.height || w.payload.width != first.width) {
      fail(ErrorCode::shape_mismatch, "stitch_depth: windows differ in spatial size");
    }
  }

  std::vector<Eigen::ArrayXd> canvas;
  for (int t = 0; t < first.frames; ++t) canvas.emplace_back(first.frame(t));
  StitchedDepth out;
  out.scales.push_back(1.0);

  for (std::size_t k = 1; k < ws.windows.size(); ++k) {
    const DepthVideo& in = ws.windows[k].payload;
    const int offset = ws.windows[k].start - origin;
    const int canvas_end = static_cast<int>(canvas.size());
    const int overlap = std::min(canvas_end, offset + in.frames) - offset;

    double ratio_sum = 0;
    double n = 0;
    for (int j = 0; j < overlap; ++j) {
      const auto& acc = canvas[static_cast<std::size_t>(offset + j)];
      const auto inc = in.frame(j);
      for (Eigen::Index i = 0; i < acc.size(); ++i) {
        if (is_valid_depth(acc[i]) && is_valid_depth(inc[i])) {
          ratio_sum += acc[i] / inc[i];
          n += 1;
        }
      }
    }
    if (n == 0) {
      fail(ErrorCode::degenerate,
           "stitch_depth: window " + std::to_string(k) + " has no jointly valid overlap pixels");
    }
    const double scale = ratio_sum / n;
    out.scales.push_back(scale);

    for (int j = 0; j < in.frames; ++j) {
      Eigen::ArrayXd scaled = in.frame(j);
      for (Eigen::Index i = 0; i < scaled.size(); ++i) {
        scaled[i] = is_valid_depth(scaled[i]) ? scaled[i] * scale : 0.0;
      }
      if (j >= overlap) {
        canvas.push_back(std::move(scaled));
        continue;
      }
      const double w = ramp(j, overlap);
      auto& acc = canvas[static_cast<std::size_t>(offset + j)];
      for (Eigen::Index i = 0; i < acc.size(); ++i) {
        const bool va = is_valid_depth(acc[i]);
        const bool vi = is_valid_depth(scaled[i]);
        if (va && vi) {
          acc[i] = (1 - w) * acc[i] + w * scaled[i];
        } else if (vi) {
          acc[i] = scaled[i];
        } else if (!va) {
          acc[i] = 0.0;
        }
      }
    }
  }

  out.video = DepthVideo(static_cast<int>(canvas.size()), first.height, first.width);
  for (std::size_t t = 0; t < canvas.size(); ++t) out.video.frame(static_cast<int>(t)) = canvas[t];
  return out;
}

StitchedTrajectory stitch_poses(const WindowSet<Trajectory>& ws) {
  validate_windows(ws, [](const Trajectory& t) { return static_cast<int>(t.size()); }, 2);
  const int origin = ws.windows.front().start;
  const Trajectory& first = ws.windows.front().payload;
  if (first.empty()) fail(ErrorCode::invalid_argument, "stitch_poses: empty window");
  const PoseConvention convention = first[0].pose.convention;

  std::vector<TimedPose> canvas;  // world_from_camera
  for (const auto& e : first.entries) {
    canvas.push_back({e.timestamp, to_convention(e.pose, PoseConvention::world_from_camera)});
  }
  StitchedTrajectory out;
  out.alignments.push_back(Sim3d{});
  out.se3_fallback.push_back(false);

  for (std::size_t k = 1; k < ws.windows.size(); ++k) {
    const Trajectory& in = ws.windows[k].payload;
    in.validate();
    if (!in.empty() && in[0].pose.convention != convention) {
      fail(ErrorCode::convention_mismatch, "stitch_poses: windows use different conventions");
    }
    const int offset = ws.windows[k].start - origin;
    const int overlap = std::min(static_cast<int>(canvas.size()), offset + static_cast<int>(in.size())) - offset;

    std::vector<Eigen::Vector3d> src, dst;
    for (int j = 0; j < overlap; ++j) {
      src.push_back(in[static_cast<std::size_t>(j)].pose.center());
      dst.push_back(canvas[static_cast<std::size_t>(offset + j)].pose.translation);
    }
    Sim3d align;
    bool fallback = false;
    try {
      align = umeyama_sim3(src, dst);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::degenerate) throw;
      const Posed a = canvas[static_cast<std::size_t>(offset)].pose;
      const Posed b = to_convention(in[0].pose, PoseConvention::world_from_camera);
      const Posed g = compose(a, inverse(b));
      align.scale = 1.0;
      align.rotation = g.rotation;
      align.translation = g.translation;
      fallback = true;
    }
    out.alignments.push_back(align);
    out.se3_fallback.push_back(fallback);

    for (std::size_t j = 0; j < in.size(); ++j) {
      const Posed moved =
          transform_pose(align, to_convention(in[j].pose, PoseConvention::world_from_camera));
      if (static_cast<int>(j) >= overlap) {
        canvas.push_back({in[j].timestamp, moved});
        continue;
      }
      const double w = ramp(static_cast<int>(j), overlap);
      Posed& acc = canvas[static_cast<std::size_t>(offset) + j].pose;
      acc.translation = (1 - w) * acc.translation + w * moved.translation;
      acc.rotation = slerp(acc.rotation, moved.rotation, w);
    }
  }

  for (auto& e : canvas) {
    e.pose = to_convention(e.pose, convention);
    out.trajectory.entries.push_back(e);
  }
  return out;
}

Trajectory kalman_smooth(const Trajectory& traj, const KalmanConfig& cfg) {
  if (!(cfg.process_sigma > 0) || !(cfg.obs_sigma > 0)) {
    fail(ErrorCode::invalid_argument, "kalman_smooth: sigmas must be positive");
  }
  traj.validate();
  const std::size_t n = traj.size();
  if (n < 2) fail(ErrorCode::invalid_argument, "kalman_smooth: need at least 2 entries");

  const double q = cfg.process_sigma * cfg.process_sigma;
  const double r = cfg.obs_sigma * cfg.obs_sigma;
  const auto observed = traj.centers();
  std::vector<Eigen::Vector3d> smoothed(n);

  using Vec2 = Eigen::Vector2d;
  using Mat2 = Eigen::Matrix2d;
  for (int axis = 0; axis < 3; ++axis) {
    std::vector<Vec2> x_pred(n), x_filt(n);
    std::vector<Mat2> p_pred(n), p_filt(n), transition(n);

    const double dt0 = traj[1].timestamp - traj[0].timestamp;
    x_pred[0] = Vec2(observed[0][axis], (observed[1][axis] - observed[0][axis]) / dt0);
    p_pred[0] = Vec2(r, 1e4).asDiagonal();
    for (std::size_t k = 0; k < n; ++k) {
      if (k > 0) {
        const double dt = traj[k].timestamp - traj[k - 1].timestamp;
        Mat2 F;
        F << 1, dt, 0, 1;
        Mat2 Q;
        Q << dt * dt * dt / 3, dt * dt / 2, dt * dt / 2, dt;
        transition[k] = F;
        x_pred[k] = F * x_filt[k - 1];
        p_pred[k] = F * p_filt[k - 1] * F.transpose() + q * Q;
      }
      const double innovation = observed[k][axis] - x_pred[k][0];
      const double s = p_pred[k](0, 0) + r;
      const Vec2 gain = p_pred[k].col(0) / s;
      x_filt[k] = x_pred[k] + gain * innovation;
      p_filt[k] = p_pred[k] - gain * p_pred[k].row(0);
    }

    Vec2 x_smooth = x_filt[n - 1];
    smoothed[n - 1][axis] = x_smooth[0];
    for (std::size_t k = n - 1; k-- > 0;) {
      const Mat2 c = p_filt[k] * transition[k + 1].transpose() * p_pred[k + 1].inverse();
      x_smooth = x_filt[k] + c * (x_smooth - x_pred[k + 1]);
      smoothed[k][axis] = x_smooth[0];
    }
  }

  Trajectory out = traj;
  for (std::size_t k = 0; k < n; ++k) {
    Posed wfc = to_convention(traj[k].pose, PoseConvention::world_from_camera);
    wfc.translation = smoothed[k];
    out[k].pose = to_convention(wfc, traj[k].pose.convention);
  }
  return out;
}

}  // namespace geoworld
