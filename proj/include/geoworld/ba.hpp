#pragma once

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

#include "geoworld/geom.hpp"
#include "geoworld/video.hpp"

namespace geoworld::ba {

struct Observation {
  int frame = 0;
  double u = 0;  // continuous pixel coordinates; pixel (i, j) spans [i, i+1) x [j, j+1)
  double v = 0;
};

struct Track {
  int id = 0;
  std::vector<Observation> observations;
};

/// Observation with the depth sampled from its frame's depth map.
struct AnchoredObservation {
  int frame = 0;
  double u = 0;
  double v = 0;
  double depth = 0;
};

struct AnchoredTrack {
  int id = 0;
  std::vector<AnchoredObservation> observations;
};

struct Problem {
  std::vector<AnchoredTrack> tracks;
  std::vector<Posed> init_poses;  // camera_from_world, one per frame
  Intrinsicsd init_intrinsics;
  int dropped_observations = 0;

  int num_frames() const { return static_cast<int>(init_poses.size()); }
  std::size_t num_residual_pairs() const;  // ordered observation pairs (i < j) over all tracks
};

/// Bilinear lookup at continuous pixel coordinates. Returns NaN when any tap is
/// invalid or the point lies outside the image.
double sample_depth(const DepthVideo& depths, int frame, double u, double v);

/// Drops observations on dynamic (mask == 0) or invalid-depth pixels and
/// anchors the rest with their bilinear depth. Tracks left with fewer than two
/// observations are dropped entirely. `static_masks` may be null.
Problem build_problem(const std::vector<Track>& tracks, const DepthVideo& depths,
                      std::vector<Posed> init_poses, const Intrinsicsd& init_intrinsics,
                      const Mask* static_masks = nullptr);

/// Camera-frame point of an anchored observation under the given intrinsics.
Eigen::Vector3d anchor_point(const AnchoredObservation& o, const Intrinsicsd& K);

/// Residual vector layout: tracks in order; within a track, observation pairs
/// (a, b) with a < b in lexicographic order; each pair contributes
/// [u_ab, v_ab, u_ba, v_ba] where *_ab reprojects the anchor of a into frame b
/// minus the observation at b, and *_ba is the mirrored term.
struct Residuals {
  Eigen::VectorXd values;
  std::vector<bool> behind_camera;  // one flag per 2-component block; flagged blocks are zero
};

Residuals residuals(const Problem& p, std::span<const Posed> poses, const Intrinsicsd& K);

/// Jacobian of residuals() with respect to [omega_0, tau_0, ..., omega_{F-1},
/// tau_{F-1}, log_focal], where pose i is perturbed as [Rot(omega) | tau] * T_i
/// and both focal lengths are scaled by exp(log_focal). Dense; for small problems.
Eigen::MatrixXd jacobian_analytic(const Problem& p, std::span<const Posed> poses,
                                  const Intrinsicsd& K);
Eigen::MatrixXd jacobian_numeric(const Problem& p, std::span<const Posed> poses,
                                 const Intrinsicsd& K, double step = 1e-6);

/// Pose and focal update used by the solver; delta is laid out as for the Jacobians.
void apply_increment(std::vector<Posed>& poses, Intrinsicsd& K, const Eigen::VectorXd& delta);

enum class RobustLoss { none, cauchy };
enum class JacobianMode { analytic, numeric };

/// rho(s) = c^2 log(1 + s / c^2) for Cauchy, s otherwise; s is a squared residual norm.
double robust_rho(double s, RobustLoss loss, double scale);
double robust_rho_derivative(double s, RobustLoss loss, double scale);

struct SolveConfig {
  RobustLoss robust = RobustLoss::cauchy;
  double cauchy_scale = 2.0;  // pixels
  int max_iters = 100;
  double grad_tol = 1e-10;
  double step_tol = 1e-10;
  double function_tol = 1e-12;
  JacobianMode jacobian = JacobianMode::analytic;
};

struct Report {
  int iterations = 0;
  double initial_cost = 0;
  double final_cost = 0;
  bool converged = false;
  int dropped_observations = 0;
  int behind_camera = 0;  // flagged residual blocks at the final parameters
  std::string termination;
  std::vector<double> cost_history;  // cost after each accepted step, starting with the initial cost
};

/// Robust cost sum_k rho(|r_k|^2) over the 2-component residual blocks.
double total_cost(const Problem& p, std::span<const Posed> poses, const Intrinsicsd& K,
                  RobustLoss loss, double scale);

struct Solution {
  std::vector<Posed> poses;  // camera_from_world
  Intrinsicsd intrinsics;
  Report report;
};

/// Levenberg-Marquardt over per-frame pose increments and one shared log-focal.
/// Frame 0 is held fixed (the gauge); anchors stay fixed in their camera frames.
Solution solve(const Problem& p, const SolveConfig& cfg = {});

}  // namespace geoworld::ba
