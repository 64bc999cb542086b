#include "geoworld/ba.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace geoworld::ba {

namespace {

constexpr double kMinDepth = 1e-9;
constexpr int kBlockParams = 13;  // from-pose (6), to-pose (6), log-focal (1)

using BlockJacobian = Eigen::Matrix<double, 2, kBlockParams>;

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

Eigen::Quaterniond rotation_from_axis_angle(const Eigen::Vector3d& w) {
  const double angle = w.norm();
  if (angle < 1e-300) return Eigen::Quaterniond::Identity();
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, w / angle));
}

// Reprojects the anchor of `from` into the frame of `to` and subtracts the
// observation there. Returns false (residual zero) when the point ends up
// behind the target camera.
bool reprojection(const AnchoredObservation& from, const AnchoredObservation& to,
                  const Posed& T_from, const Posed& T_to, const Intrinsicsd& K,
                  Eigen::Vector2d& r, BlockJacobian* J) {
  const Eigen::Vector3d X_from = anchor_point(from, K);
  const Eigen::Matrix3d R_from = T_from.rotation.toRotationMatrix();
  const Eigen::Matrix3d R_to = T_to.rotation.toRotationMatrix();
  const Eigen::Matrix3d R_rel = R_to * R_from.transpose();
  const Eigen::Vector3d X = R_rel * (X_from - T_from.translation) + T_to.translation;
  if (!(X.z() > kMinDepth)) {
    r.setZero();
    if (J) J->setZero();
    return false;
  }
  const double inv_z = 1.0 / X.z();
  r.x() = K.fx * X.x() * inv_z + K.cx - to.u;
  r.y() = K.fy * X.y() * inv_z + K.cy - to.v;
  if (!J) return true;

  Eigen::Matrix<double, 2, 3> dproj;
  dproj << K.fx * inv_z, 0, -K.fx * X.x() * inv_z * inv_z,  //
      0, K.fy * inv_z, -K.fy * X.y() * inv_z * inv_z;
  J->block<2, 3>(0, 0) = dproj * R_rel * skew(X_from);
  J->block<2, 3>(0, 3) = -dproj * R_rel;
  J->block<2, 3>(0, 6) = -dproj * skew(X);
  J->block<2, 3>(0, 9) = dproj;
  const Eigen::Vector3d dX_focal = R_rel * Eigen::Vector3d(-X_from.x(), -X_from.y(), 0.0);
  J->col(12) = dproj * dX_focal + Eigen::Vector2d(K.fx * X.x() * inv_z, K.fy * X.y() * inv_z);
  return true;
}

// Visits every residual block in layout order.
template <typename Fn>
void for_each_block(const Problem& p, Fn&& fn) {
  std::size_t block = 0;
  for (const auto& track : p.tracks) {
    const auto& obs = track.observations;
    for (std::size_t a = 0; a < obs.size(); ++a) {
      for (std::size_t b = a + 1; b < obs.size(); ++b) {
        fn(block++, obs[a], obs[b]);
        fn(block++, obs[b], obs[a]);
      }
    }
  }
}

void check_parameters(const Problem& p, std::span<const Posed> poses, const Intrinsicsd& K) {
  if (poses.size() != p.init_poses.size()) {
    fail(ErrorCode::shape_mismatch, "ba: one pose per frame required");
  }
  for (const auto& pose : poses) {
    if (pose.convention != PoseConvention::camera_from_world) {
      fail(ErrorCode::convention_mismatch, "ba: poses must be camera_from_world");
    }
  }
  K.validate();
}

}  // namespace

std::size_t Problem::num_residual_pairs() const {
  std::size_t n = 0;
  for (const auto& t : tracks) n += t.observations.size() * (t.observations.size() - 1) / 2;
  return n;
}

double sample_depth(const DepthVideo& depths, int frame, double u, double v) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (frame < 0 || frame >= depths.frames) return nan;
  if (!(u >= 0 && v >= 0 && u <= depths.width && v <= depths.height)) return nan;
  const double x = std::clamp(u - 0.5, 0.0, static_cast<double>(depths.width - 1));
  const double y = std::clamp(v - 0.5, 0.0, static_cast<double>(depths.height - 1));
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, depths.width - 1);
  const int y1 = std::min(y0 + 1, depths.height - 1);
  const double wx = x - x0;
  const double wy = y - y0;
  const double d00 = depths(frame, y0, x0), d01 = depths(frame, y0, x1);
  const double d10 = depths(frame, y1, x0), d11 = depths(frame, y1, x1);
  if (!is_valid_depth(d00) || !is_valid_depth(d01) || !is_valid_depth(d10) || !is_valid_depth(d11)) {
    return nan;
  }
  return (1 - wy) * ((1 - wx) * d00 + wx * d01) + wy * ((1 - wx) * d10 + wx * d11);
}

Problem build_problem(const std::vector<Track>& tracks, const DepthVideo& depths,
                      std::vector<Posed> init_poses, const Intrinsicsd& init_intrinsics,
                      const Mask* static_masks) {
  init_intrinsics.validate();
  if (init_poses.size() != static_cast<std::size_t>(depths.frames)) {
    fail(ErrorCode::shape_mismatch, "build_problem: depth frame count differs from pose count");
  }
  if (depths.width != init_intrinsics.width || depths.height != init_intrinsics.height) {
    fail(ErrorCode::shape_mismatch, "build_problem: depth size differs from intrinsics");
  }
  if (static_masks && !static_masks->same_shape(Mask(depths.frames, depths.height, depths.width))) {
    fail(ErrorCode::shape_mismatch, "build_problem: mask shape differs from depth");
  }
  for (const auto& pose : init_poses) {
    if (pose.convention != PoseConvention::camera_from_world) {
      fail(ErrorCode::convention_mismatch, "build_problem: poses must be camera_from_world");
    }
  }

  Problem p;
  p.init_poses = std::move(init_poses);
  p.init_intrinsics = init_intrinsics;
  for (const auto& track : tracks) {
    for (std::size_t k = 1; k < track.observations.size(); ++k) {
      if (track.observations[k].frame <= track.observations[k - 1].frame) {
        fail(ErrorCode::invalid_argument,
             "build_problem: track " + std::to_string(track.id) + " frames not strictly increasing");
      }
    }
    AnchoredTrack kept{track.id, {}};
    for (const auto& o : track.observations) {
      const double d = sample_depth(depths, o.frame, o.u, o.v);
      bool usable = std::isfinite(d);
      if (usable && static_masks) {
        const int x = std::min(static_cast<int>(o.u), depths.width - 1);
        const int y = std::min(static_cast<int>(o.v), depths.height - 1);
        usable = (*static_masks)(o.frame, y, x) != 0;
      }
      if (usable) {
        kept.observations.push_back({o.frame, o.u, o.v, d});
      } else {
        ++p.dropped_observations;
      }
    }
    if (kept.observations.size() >= 2) {
      p.tracks.push_back(std::move(kept));
    } else {
      p.dropped_observations += static_cast<int>(kept.observations.size());
    }
  }
  if (p.tracks.empty()) fail(ErrorCode::invalid_argument, "build_problem: no usable observations");
  return p;
}

Eigen::Vector3d anchor_point(const AnchoredObservation& o, const Intrinsicsd& K) {
  return o.depth * Eigen::Vector3d((o.u - K.cx) / K.fx, (o.v - K.cy) / K.fy, 1.0);
}

Residuals residuals(const Problem& p, std::span<const Posed> poses, const Intrinsicsd& K) {
  check_parameters(p, poses, K);
  Residuals out;
  const std::size_t blocks = 2 * p.num_residual_pairs();
  out.values.setZero(static_cast<Eigen::Index>(2 * blocks));
  out.behind_camera.assign(blocks, false);
  for_each_block(p, [&](std::size_t k, const AnchoredObservation& from, const AnchoredObservation& to) {
    Eigen::Vector2d r;
    const auto f = static_cast<std::size_t>(from.frame);
    const auto t = static_cast<std::size_t>(to.frame);
    out.behind_camera[k] = !reprojection(from, to, poses[f], poses[t], K, r, nullptr);
    out.values.segment<2>(static_cast<Eigen::Index>(2 * k)) = r;
  });
  return out;
}

Eigen::MatrixXd jacobian_analytic(const Problem& p, std::span<const Posed> poses,
                                  const Intrinsicsd& K) {
  check_parameters(p, poses, K);
  const Eigen::Index n = 6 * static_cast<Eigen::Index>(poses.size()) + 1;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(4 * p.num_residual_pairs()), n);
  for_each_block(p, [&](std::size_t k, const AnchoredObservation& from, const AnchoredObservation& to) {
    Eigen::Vector2d r;
    BlockJacobian Jb;
    reprojection(from, to, poses[static_cast<std::size_t>(from.frame)],
                 poses[static_cast<std::size_t>(to.frame)], K, r, &Jb);
    const Eigen::Index row = static_cast<Eigen::Index>(2 * k);
    J.block<2, 6>(row, 6 * from.frame) += Jb.block<2, 6>(0, 0);
    J.block<2, 6>(row, 6 * to.frame) += Jb.block<2, 6>(0, 6);
    J.block<2, 1>(row, n - 1) = Jb.col(12);
  });
  return J;
}

Eigen::MatrixXd jacobian_numeric(const Problem& p, std::span<const Posed> poses,
                                 const Intrinsicsd& K, double step) {
  check_parameters(p, poses, K);
  const Eigen::Index n = 6 * static_cast<Eigen::Index>(poses.size()) + 1;
  Eigen::MatrixXd J(static_cast<Eigen::Index>(4 * p.num_residual_pairs()), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(n);
    std::vector<Posed> plus(poses.begin(), poses.end()), minus(poses.begin(), poses.end());
    Intrinsicsd K_plus = K, K_minus = K;
    delta[j] = step;
    apply_increment(plus, K_plus, delta);
    delta[j] = -step;
    apply_increment(minus, K_minus, delta);
    J.col(j) = (residuals(p, plus, K_plus).values - residuals(p, minus, K_minus).values) / (2 * step);
  }
  return J;
}

void apply_increment(std::vector<Posed>& poses, Intrinsicsd& K, const Eigen::VectorXd& delta) {
  if (delta.size() != 6 * static_cast<Eigen::Index>(poses.size()) + 1) {
    fail(ErrorCode::shape_mismatch, "apply_increment: increment size mismatch");
  }
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Eigen::Index o = 6 * static_cast<Eigen::Index>(i);
    const Eigen::Quaterniond dq = rotation_from_axis_angle(delta.segment<3>(o));
    poses[i].rotation = (dq * poses[i].rotation).normalized();
    poses[i].translation = dq * poses[i].translation + delta.segment<3>(o + 3);
  }
  const double f = std::exp(delta[delta.size() - 1]);
  K.fx *= f;
  K.fy *= f;
}

double robust_rho(double s, RobustLoss loss, double scale) {
  if (loss == RobustLoss::none) return s;
  const double c2 = scale * scale;
  return c2 * std::log1p(s / c2);
}

double robust_rho_derivative(double s, RobustLoss loss, double scale) {
  if (loss == RobustLoss::none) return 1.0;
  return 1.0 / (1.0 + s / (scale * scale));
}

double total_cost(const Problem& p, std::span<const Posed> poses, const Intrinsicsd& K,
                  RobustLoss loss, double scale) {
  check_parameters(p, poses, K);
  double cost = 0;
  for_each_block(p, [&](std::size_t, const AnchoredObservation& from, const AnchoredObservation& to) {
    Eigen::Vector2d r;
    if (reprojection(from, to, poses[static_cast<std::size_t>(from.frame)],
                     poses[static_cast<std::size_t>(to.frame)], K, r, nullptr)) {
      cost += robust_rho(r.squaredNorm(), loss, scale);
    }
  });
  return cost;
}

namespace {

struct NormalEquations {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  int behind = 0;
};

// Gauss-Newton system of the robust cost over the free parameters
// (frames 1..F-1 and the log-focal; frame 0 is the gauge).
NormalEquations linearize(const Problem& p, const std::vector<Posed>& poses, const Intrinsicsd& K,
                          const SolveConfig& cfg) {
  const int frames = static_cast<int>(poses.size());
  const Eigen::Index n = 6 * (frames - 1) + 1;
  NormalEquations ne;
  ne.H.setZero(n, n);
  ne.g.setZero(n);

  // Column in the reduced system for block parameter k, or -1 when fixed.
  auto column = [&](int frame, int k) -> Eigen::Index {
    return frame == 0 ? -1 : 6 * (frame - 1) + k;
  };

  for_each_block(p, [&](std::size_t, const AnchoredObservation& from, const AnchoredObservation& to) {
    Eigen::Vector2d r;
    BlockJacobian J;
    const Posed& T_from = poses[static_cast<std::size_t>(from.frame)];
    const Posed& T_to = poses[static_cast<std::size_t>(to.frame)];
    bool ok;
    if (cfg.jacobian == JacobianMode::analytic) {
      ok = reprojection(from, to, T_from, T_to, K, r, &J);
    } else {
      ok = reprojection(from, to, T_from, T_to, K, r, nullptr);
      if (ok) {
        // Central differences over the 13 parameters this block touches.
        constexpr double h = 1e-6;
        for (int k = 0; k < kBlockParams; ++k) {
          Eigen::Vector2d rp, rm;
          std::vector<Posed> pair_plus{T_from, T_to}, pair_minus{T_from, T_to};
          Intrinsicsd K_plus = K, K_minus = K;
          Eigen::VectorXd d = Eigen::VectorXd::Zero(13);
          d[k] = h;
          apply_increment(pair_plus, K_plus, d);
          d[k] = -h;
          apply_increment(pair_minus, K_minus, d);
          reprojection(from, to, pair_plus[0], pair_plus[1], K_plus, rp, nullptr);
          reprojection(from, to, pair_minus[0], pair_minus[1], K_minus, rm, nullptr);
          J.col(k) = (rp - rm) / (2 * h);
        }
      }
    }
    if (!ok) {
      ++ne.behind;
      return;
    }
    const double w = 2.0 * robust_rho_derivative(r.squaredNorm(), cfg.robust, cfg.cauchy_scale);
    std::array<Eigen::Index, kBlockParams> cols;
    for (int k = 0; k < 6; ++k) {
      cols[static_cast<std::size_t>(k)] = column(from.frame, k);
      cols[static_cast<std::size_t>(k + 6)] = column(to.frame, k);
    }
    cols[12] = n - 1;
    const Eigen::Matrix<double, kBlockParams, kBlockParams> JtJ = w * J.transpose() * J;
    const Eigen::Matrix<double, kBlockParams, 1> Jtr = w * J.transpose() * r;
    for (int a = 0; a < kBlockParams; ++a) {
      const Eigen::Index ca = cols[static_cast<std::size_t>(a)];
      if (ca < 0) continue;
      ne.g[ca] += Jtr[a];
      for (int b = 0; b < kBlockParams; ++b) {
        const Eigen::Index cb = cols[static_cast<std::size_t>(b)];
        if (cb >= 0) ne.H(ca, cb) += JtJ(a, b);
      }
    }
  });
  return ne;
}

}  // namespace

Solution solve(const Problem& p, const SolveConfig& cfg) {
  if (p.num_frames() < 2) fail(ErrorCode::invalid_argument, "solve: need at least 2 frames");
  if (p.tracks.empty()) fail(ErrorCode::invalid_argument, "solve: no usable tracks");
  if (cfg.robust == RobustLoss::cauchy && !(cfg.cauchy_scale > 0)) {
    fail(ErrorCode::invalid_argument, "solve: cauchy scale must be positive");
  }
  if (cfg.max_iters < 0) fail(ErrorCode::invalid_argument, "solve: max_iters must be >= 0");
  check_parameters(p, p.init_poses, p.init_intrinsics);

  // Express all cameras relative to frame 0 so the gauge frame is the identity.
  const Posed anchor = p.init_poses.front();
  std::vector<Posed> poses;
  poses.reserve(p.init_poses.size());
  for (const auto& pose : p.init_poses) poses.push_back(compose(pose, inverse(anchor)));
  poses.front() = Posed::Identity();
  Intrinsicsd K = p.init_intrinsics;

  const int frames = p.num_frames();
  const Eigen::Index n = 6 * (frames - 1) + 1;
  auto full_increment = [&](const Eigen::VectorXd& reduced) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(6 * frames + 1);
    d.segment(6, n - 1) = reduced.head(n - 1);
    d[d.size() - 1] = reduced[n - 1];
    return d;
  };

  Report report;
  report.dropped_observations = p.dropped_observations;
  double cost = total_cost(p, poses, K, cfg.robust, cfg.cauchy_scale);
  report.initial_cost = cost;
  report.cost_history.push_back(cost);

  double lambda = 1e-4;
  bool relinearize = true;
  NormalEquations ne;
  report.termination = "max_iters";
  while (report.iterations < cfg.max_iters) {
    if (relinearize) {
      ne = linearize(p, poses, K, cfg);
      relinearize = false;
    }
    if (ne.g.lpNorm<Eigen::Infinity>() < cfg.grad_tol) {
      report.converged = true;
      report.termination = "grad_tol";
      break;
    }
    ++report.iterations;

    Eigen::MatrixXd A = ne.H;
    A.diagonal() += lambda * ne.H.diagonal().cwiseMax(1e-12);
    const Eigen::VectorXd step = A.ldlt().solve(-ne.g);
    if (!step.allFinite()) {
      lambda *= 10;
      continue;
    }

    std::vector<Posed> trial_poses = poses;
    Intrinsicsd trial_K = K;
    apply_increment(trial_poses, trial_K, full_increment(step));
    const double trial_cost = total_cost(p, trial_poses, trial_K, cfg.robust, cfg.cauchy_scale);

    if (trial_cost < cost) {
      const double decrease = cost - trial_cost;
      poses = std::move(trial_poses);
      K = trial_K;
      cost = trial_cost;
      report.cost_history.push_back(cost);
      lambda = std::max(lambda / 10, 1e-12);
      relinearize = true;
      if (step.norm() < cfg.step_tol) {
        report.converged = true;
        report.termination = "step_tol";
        break;
      }
      if (decrease <= cfg.function_tol * std::max(cost + decrease, 1e-300)) {
        report.converged = true;
        report.termination = "function_tol";
        break;
      }
    } else {
      lambda *= 10;
      if (lambda > 1e16) {
        report.termination = "no_decrease";
        break;
      }
    }
  }

  Solution s;
  s.poses.reserve(poses.size());
  for (const auto& pose : poses) s.poses.push_back(compose(pose, anchor));
  s.intrinsics = K;
  report.final_cost = cost;
  report.behind_camera = 0;
  for (bool b : residuals(p, poses, K).behind_camera) report.behind_camera += b ? 1 : 0;
  s.report = std::move(report);
  return s;
}

}  // namespace geoworld::ba
