#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <numbers>

#include "geoworld/ba.hpp"
#include "geoworld/eval.hpp"
#include "synth.hpp"

using namespace geoworld;
using namespace geoworld::ba;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Problem scene_problem(const synth::Scene& s, const std::vector<Posed>& init) {
  return build_problem(s.tracks, s.depths, init, s.K);
}

double ate_of(const std::vector<Posed>& est, const std::vector<Posed>& gt) {
  return ate(synth::to_trajectory(est), synth::to_trajectory(gt), TrajectoryAlignment::sim3);
}

synth::SceneConfig small_scene() {
  synth::SceneConfig c;
  c.frames = 5;
  c.tracks = 30;
  return c;
}

}  // namespace

TEST(SampleDepth, BilinearAtContinuousCoordinates) {
  DepthVideo d(1, 2, 2);
  d.values << 1, 2, 3, 4;
  EXPECT_DOUBLE_EQ(sample_depth(d, 0, 0.5, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(sample_depth(d, 0, 1.5, 0.5), 2.0);
  EXPECT_DOUBLE_EQ(sample_depth(d, 0, 1.0, 1.0), 2.5);
  EXPECT_DOUBLE_EQ(sample_depth(d, 0, 1.25, 0.5), 1.75);
  EXPECT_TRUE(std::isnan(sample_depth(d, 0, 5.0, 0.5)));
  d.values[3] = 0;
  EXPECT_TRUE(std::isnan(sample_depth(d, 0, 1.0, 1.0)));
}

TEST(BuildProblem, AnchorsMatchGeneratorPoints) {
  const synth::Scene s = synth::make_scene(111);
  ASSERT_EQ(s.tracks.size(), 200u);
  const Problem p = scene_problem(s, s.poses);
  EXPECT_EQ(p.dropped_observations, 0);
  ASSERT_EQ(p.tracks.size(), s.tracks.size());
  for (std::size_t k = 0; k < p.tracks.size(); ++k) {
    for (const auto& o : p.tracks[k].observations) {
      const Posed wfc = change_convention(s.poses[std::size_t(o.frame)]);
      EXPECT_LT((wfc * anchor_point(o, s.K) - s.points[k]).norm(), 1e-9);
    }
  }
}

TEST(BuildProblem, MaskedAndInvalidObservationsDropped) {
  synth::Scene s = synth::make_scene(112, small_scene());
  Mask m(s.depths.frames, s.depths.height, s.depths.width, 1);
  const Observation o = s.tracks[0].observations[0];
  m(o.frame, int(o.v), int(o.u)) = 0;
  const Problem masked = build_problem(s.tracks, s.depths, s.poses, s.K, &m);
  const int expected = s.tracks[0].observations.size() == 2 ? 2 : 1;
  EXPECT_EQ(masked.dropped_observations, expected);

  const Observation o2 = s.tracks[1].observations[0];
  s.depths(o2.frame, int(o2.v), int(o2.u)) = 0;
  EXPECT_GE(scene_problem(s, s.poses).dropped_observations, 1);
}

TEST(BuildProblem, Errors) {
  const synth::Scene s = synth::make_scene(113, small_scene());
  std::vector<Posed> short_poses(s.poses.begin(), s.poses.end() - 1);
  EXPECT_THROW(build_problem(s.tracks, s.depths, short_poses, s.K), Error);
  std::vector<Posed> wfc = s.poses;
  for (auto& p : wfc) p = change_convention(p);
  EXPECT_THROW(build_problem(s.tracks, s.depths, wfc, s.K), Error);
  std::vector<Track> bad = s.tracks;
  std::swap(bad[0].observations[0], bad[0].observations[1]);
  EXPECT_THROW(build_problem(bad, s.depths, s.poses, s.K), Error);
  EXPECT_THROW(build_problem({}, s.depths, s.poses, s.K), Error);
}

TEST(Residuals, ZeroAtGroundTruth) {
  const synth::Scene s = synth::make_scene(114);
  const Problem p = scene_problem(s, s.poses);
  const Residuals r = residuals(p, s.poses, s.K);
  EXPECT_EQ(std::size_t(r.values.size()), 4 * p.num_residual_pairs());
  EXPECT_LT(r.values.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Residuals, TranslationGivesFocalOverDepth) {
  const double f = 200, z = 5, delta = 1e-4;
  Intrinsicsd K;
  K.fx = K.fy = f;
  K.cx = 16;
  K.cy = 12;
  K.width = 32;
  K.height = 24;
  const DepthVideo d(2, 24, 32, z);
  const Track t{0, {{0, 10.3, 7.7}, {1, 10.3, 7.7}}};
  std::vector<Posed> poses(2);
  const Problem p = build_problem({t}, d, poses, K);
  poses[1].translation.x() += delta;
  const Residuals r = residuals(p, poses, K);
  EXPECT_NEAR(r.values[0], f * delta / z, 0.01 * f * delta / z);
  EXPECT_NEAR(r.values[1], 0.0, 1e-12);
  EXPECT_NEAR(r.values[2], -f * delta / z, 0.01 * f * delta / z);
}

TEST(Residuals, MirroredPairUnderRelabelling) {
  synth::Rng rng(115);
  const synth::Scene s = synth::make_scene(115, small_scene());
  const std::vector<Posed> poses = synth::perturb_poses(rng, s.poses, 1 * kDeg, 0.02);
  const Track& src = s.tracks[0];
  const Observation a = src.observations[0], b = src.observations[1];
  const Track fwd{0, {{0, a.u, a.v}, {1, b.u, b.v}}};
  const Track rev{0, {{0, b.u, b.v}, {1, a.u, a.v}}};
  DepthVideo d(2, s.depths.height, s.depths.width), drev = d;
  d.frame(0) = s.depths.frame(a.frame);
  d.frame(1) = s.depths.frame(b.frame);
  drev.frame(0) = d.frame(1);
  drev.frame(1) = d.frame(0);
  const std::vector<Posed> pf{poses[std::size_t(a.frame)], poses[std::size_t(b.frame)]};
  const std::vector<Posed> pr{pf[1], pf[0]};
  const Residuals rf = residuals(build_problem({fwd}, d, pf, s.K), pf, s.K);
  const Residuals rr = residuals(build_problem({rev}, drev, pr, s.K), pr, s.K);
  EXPECT_EQ(rf.values.head<2>(), rr.values.tail<2>());
  EXPECT_EQ(rf.values.tail<2>(), rr.values.head<2>());
}

TEST(Residuals, BehindCameraBlocksFlaggedAndZero) {
  Intrinsicsd K;
  K.fx = K.fy = 10;
  K.cx = K.cy = 4;
  K.width = K.height = 8;
  const DepthVideo d(2, 8, 8, 2.0);
  const Track t{0, {{0, 4, 4}, {1, 4, 4}}};
  std::vector<Posed> poses(2);
  const Problem p = build_problem({t}, d, poses, K);
  poses[1].translation.z() = -5;
  const Residuals r = residuals(p, poses, K);
  EXPECT_TRUE(r.behind_camera[0]);
  EXPECT_EQ(r.values[0], 0.0);
  EXPECT_EQ(r.values[1], 0.0);
}

TEST(Jacobian, AnalyticMatchesFiniteDifferences) {
  synth::Rng rng(116);
  for (int trial = 0; trial < 5; ++trial) {
    const synth::Scene s = synth::make_scene(200 + std::uint64_t(trial), small_scene());
    const std::vector<Posed> poses = synth::perturb_poses(rng, s.poses, 2 * kDeg, 0.05);
    Intrinsicsd K = s.K;
    K.fx *= 1.03;
    K.fy *= 1.03;
    const Problem p = scene_problem(s, poses);
    const Eigen::MatrixXd Ja = jacobian_analytic(p, poses, K);
    const Eigen::MatrixXd Jn = jacobian_numeric(p, poses, K);
    ASSERT_EQ(Ja.rows(), Jn.rows());
    ASSERT_EQ(Ja.cols(), 6 * 5 + 1);
    const double rel = (Ja - Jn).cwiseAbs().maxCoeff() / Jn.cwiseAbs().maxCoeff();
    EXPECT_LT(rel, 1e-5);
  }
}

TEST(Jacobian, IncrementMatchesLayout) {
  const synth::Scene s = synth::make_scene(117, small_scene());
  const Problem p = scene_problem(s, s.poses);
  std::vector<Posed> poses = s.poses;
  Intrinsicsd K = s.K;
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(31);
  delta[30] = std::log(1.1);
  delta.segment<3>(9) = Eigen::Vector3d(0.1, 0.2, 0.3);
  apply_increment(poses, K, delta);
  EXPECT_NEAR(K.fx, 330.0, 1e-9);
  EXPECT_NEAR(K.fy, 330.0, 1e-9);
  EXPECT_LT((poses[1].translation - s.poses[1].translation - Eigen::Vector3d(0.1, 0.2, 0.3)).norm(), 1e-12);
}

TEST(Robust, CauchyProperties) {
  for (double c : {0.5, 2.0, 10.0}) {
    EXPECT_DOUBLE_EQ(robust_rho(0, RobustLoss::cauchy, c), 0.0);
    EXPECT_DOUBLE_EQ(robust_rho_derivative(0, RobustLoss::cauchy, c), 1.0);
    for (double s : {1e-6, 0.1, 1.0, 4.0, 100.0, 1e6}) {
      EXPECT_LE(robust_rho(s, RobustLoss::cauchy, c), s);
      EXPECT_NEAR(robust_rho(s, RobustLoss::cauchy, c), c * c * std::log1p(s / (c * c)), 1e-12 * (1 + s));
      EXPECT_NEAR(robust_rho_derivative(s, RobustLoss::cauchy, c), 1 / (1 + s / (c * c)), 1e-15);
      EXPECT_EQ(robust_rho(s, RobustLoss::none, c), s);
    }
  }
}

TEST(Solve, ZeroNoiseConvergesImmediately) {
  const synth::Scene s = synth::make_scene(118);
  const Solution sol = solve(scene_problem(s, s.poses));
  EXPECT_LE(sol.report.iterations, 2);
  EXPECT_LT(sol.report.final_cost, 1e-12);
  EXPECT_TRUE(sol.report.converged);
}

TEST(Solve, RecoversPerturbedPoses) {
  for (std::uint64_t seed : {119u, 120u}) {
    synth::Rng rng(seed);
    const synth::Scene s = synth::make_scene(seed);
    const std::vector<Posed> init = synth::perturb_poses(rng, s.poses, 2 * kDeg, 0.05);
    const auto t0 = std::chrono::steady_clock::now();
    const Solution sol = solve(scene_problem(s, init));
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_LE(ate_of(sol.poses, s.poses), 0.1 * ate_of(init, s.poses));
    EXPECT_LE(sol.report.iterations, 100);
    EXPECT_LT(seconds, 30.0);
    EXPECT_NEAR(sol.intrinsics.fx, s.K.fx, 1e-3);
    EXPECT_EQ(sol.poses[0].translation, s.poses[0].translation);
    for (std::size_t i = 1; i < sol.report.cost_history.size(); ++i) {
      EXPECT_LE(sol.report.cost_history[i], sol.report.cost_history[i - 1]);
    }
    EXPECT_LE(sol.report.final_cost, sol.report.initial_cost);
  }
}

TEST(Solve, NumericJacobianModeAgrees) {
  synth::Rng rng(121);
  const synth::Scene s = synth::make_scene(121, small_scene());
  const std::vector<Posed> init = synth::perturb_poses(rng, s.poses, 1 * kDeg, 0.02);
  SolveConfig a, n;
  n.jacobian = JacobianMode::numeric;
  const Solution sa = solve(scene_problem(s, init), a), sn = solve(scene_problem(s, init), n);
  for (std::size_t i = 0; i < s.poses.size(); ++i) {
    EXPECT_LT((sa.poses[i].translation - sn.poses[i].translation).norm(), 1e-6);
  }
}

TEST(Solve, GaugeInvariantCost) {
  synth::Rng rng(122);
  const synth::Scene s = synth::make_scene(122, small_scene());
  const std::vector<Posed> init = synth::perturb_poses(rng, s.poses, 2 * kDeg, 0.05);
  const Posed g(synth::random_rotation(rng), synth::uniform3(rng, -3, 3));
  std::vector<Posed> moved;
  for (const auto& p : init) moved.push_back(compose(p, g));
  const Problem a = scene_problem(s, init), b = scene_problem(s, moved);
  EXPECT_NEAR(total_cost(a, init, s.K, RobustLoss::cauchy, 2), total_cost(b, moved, s.K, RobustLoss::cauchy, 2),
              1e-9 * (1 + total_cost(a, init, s.K, RobustLoss::cauchy, 2)));
  const Solution sa = solve(a), sb = solve(b);
  EXPECT_NEAR(sa.report.final_cost, sb.report.final_cost, 1e-9);
}

TEST(Solve, CauchyBeatsPlainLeastSquaresWithOutliers) {
  int wins = 0;
  const int trials = 5;
  for (int trial = 0; trial < trials; ++trial) {
    const std::uint64_t seed = 300 + std::uint64_t(trial);
    synth::Rng rng(seed);
    synth::Scene s = synth::make_scene(seed);
    for (std::size_t k = 0; k < s.tracks.size(); k += 10) {
      for (auto& o : s.tracks[k].observations) {
        const double a = synth::uniform(rng, 0, 2 * std::numbers::pi);
        o.u = std::clamp(o.u + 20 * std::cos(a), 0.5, s.K.width - 0.5);
        o.v = std::clamp(o.v + 20 * std::sin(a), 0.5, s.K.height - 0.5);
      }
    }
    const std::vector<Posed> init = synth::perturb_poses(rng, s.poses, 2 * kDeg, 0.05);
    SolveConfig robust, plain;
    plain.robust = RobustLoss::none;
    const Problem p = scene_problem(s, init);
    const auto gt = synth::to_trajectory(s.poses);
    const double rc = rpe(synth::to_trajectory(solve(p, robust).poses), gt, 1, false).rot_deg;
    const double rn = rpe(synth::to_trajectory(solve(p, plain).poses), gt, 1, false).rot_deg;
    if (rc <= rn) ++wins;
  }
  EXPECT_EQ(wins, trials);
}

TEST(Solve, MaxItersReportsNonConvergence) {
  synth::Rng rng(123);
  const synth::Scene s = synth::make_scene(123, small_scene());
  const std::vector<Posed> init = synth::perturb_poses(rng, s.poses, 3 * kDeg, 0.1);
  SolveConfig cfg;
  cfg.max_iters = 1;
  const Solution sol = solve(scene_problem(s, init), cfg);
  EXPECT_FALSE(sol.report.converged);
  EXPECT_LE(sol.report.final_cost, sol.report.initial_cost);
  EXPECT_FALSE(sol.report.termination.empty());
}
