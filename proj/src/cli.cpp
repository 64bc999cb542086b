#include "geoworld/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "geoworld/ba.hpp"
#include "geoworld/depth_codec.hpp"
#include "geoworld/eval.hpp"
#include "geoworld/io.hpp"
#include "geoworld/losses.hpp"
#include "geoworld/parallel.hpp"
#include "geoworld/raymap.hpp"
#include "geoworld/slicer.hpp"
#include "geoworld/stitch.hpp"

namespace geoworld::cli {

using nlohmann::json;

constexpr double kReportZero = 1e-12;

std::string format_number(double v) {
  if (!std::isfinite(v)) return "null";
  if (v == 0.0) v = 0.0;  // drops the sign of -0
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  std::string s(buf);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

namespace {

void emit(const json& j, std::string& out) {
  switch (j.type()) {
    case json::value_t::object: {
      out += '{';
      bool first = true;
      for (const auto& [key, value] : j.items()) {
        if (!first) out += ", ";
        first = false;
        out += json(key).dump();
        out += ": ";
        emit(value, out);
      }
      out += '}';
      break;
    }
    case json::value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ", ";
        emit(j[i], out);
      }
      out += ']';
      break;
    }
    case json::value_t::number_float:
      out += format_number(j.get<double>());
      break;
    default:
      out += j.dump();
  }
}

std::string to_text(const json& j) {
  std::string s;
  emit(j, s);
  return s;
}

Intrinsicsd parse_intrinsics(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      fail(ErrorCode::invalid_argument, "intrinsics: cannot parse '" + item + "'");
    }
  }
  if (v.size() != 6) fail(ErrorCode::invalid_argument, "intrinsics: expected fx,fy,cx,cy,W,H");
  Intrinsicsd K;
  K.fx = v[0];
  K.fy = v[1];
  K.cx = v[2];
  K.cy = v[3];
  K.width = static_cast<int>(v[4]);
  K.height = static_cast<int>(v[5]);
  if (K.width != v[4] || K.height != v[5]) {
    fail(ErrorCode::invalid_argument, "intrinsics: W and H must be integers");
  }
  K.validate();
  return K;
}

std::vector<std::pair<int, std::string>> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::vector<std::pair<int, std::string>> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    int start = 0;
    std::string file;
    std::string rest;
    if (!(ls >> start >> file) || (ls >> rest)) {
      fail(ErrorCode::format, "manifest: malformed line " + std::to_string(line_no));
    }
    std::filesystem::path p(file);
    if (p.is_relative()) p = base / p;
    entries.emplace_back(start, p.string());
  }
  if (entries.empty()) fail(ErrorCode::format, "manifest: no windows");
  return entries;
}

std::vector<Posed> poses_of(const Trajectory& t, PoseConvention c) {
  std::vector<Posed> out;
  out.reserve(t.size());
  for (const auto& e : t.entries) out.push_back(to_convention(e.pose, c));
  return out;
}

Mask full_mask(const DepthVideo& like) { return Mask(like.frames, like.height, like.width, 1); }

Raymap scale_origins(Raymap r, double scale) {
  if (scale == 1.0) return r;
  for (int t = 0; t < r.frames; ++t) {
    for (int y = 0; y < r.height; ++y) {
      for (int x = 0; x < r.width; ++x) r.set_origin(t, y, x, r.origin(t, y, x) * scale);
    }
  }
  return r;
}

json quaternion_json(const Eigen::Quaterniond& q) { return json::array({q.w(), q.x(), q.y(), q.z()}); }

json vector_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

json shape_json(int t, int h, int w) { return {{"frames", t}, {"height", h}, {"width", w}}; }

template <typename T>
CLI::Option* add_choice(CLI::App* app, const std::string& name, T& value,
                        const std::map<std::string, T>& choices, const std::string& help) {
  CLI::Option* opt =
      app->add_option(name, value, help)->transform(CLI::CheckedTransformer(choices, CLI::ignore_case));
  for (const auto& [key, v] : choices) {
    if (v == value) opt->default_str(key);
  }
  return opt;
}

const std::map<std::string, TrajectoryAlignment> kPoseAlign{
    {"none", TrajectoryAlignment::none}, {"se3", TrajectoryAlignment::se3}, {"sim3", TrajectoryAlignment::sim3}};
const std::map<std::string, DepthAlignment> kDepthAlign{
    {"none", DepthAlignment::none}, {"scale", DepthAlignment::scale}, {"scale_shift", DepthAlignment::scale_shift}};
const std::map<std::string, ScaleEstimator> kEstimators{
    {"least_squares", ScaleEstimator::least_squares}, {"median_ratio", ScaleEstimator::median_ratio}};
const std::map<std::string, ba::RobustLoss> kRobust{{"none", ba::RobustLoss::none},
                                                   {"cauchy", ba::RobustLoss::cauchy}};
const std::map<std::string, ba::JacobianMode> kJacobian{{"analytic", ba::JacobianMode::analytic},
                                                       {"numeric", ba::JacobianMode::numeric}};

struct Options {
  std::string in, out, pred, gt, mask, traj, raymap, manifest, stats, tracks, depths, init_traj, intrinsics;
  std::string latent_out, kind = "ssi";
  DepthClipRange range;
  std::optional<double> scale;
  double clip_scale = 1.0;
  RayEncodingConfig ray;
  DepthAlignment depth_align = DepthAlignment::none;
  ScaleEstimator estimator = ScaleEstimator::least_squares;
  TrajectoryAlignment pose_align = TrajectoryAlignment::sim3;
  int delta = 1;
  double max_dt = kDefaultMaxDt;
  int stride = 8;
  KalmanConfig kalman;
  SliceConfig slice;
  ba::SolveConfig solve;
  SsiLossConfig ssi;
  MsSsimConfig ms_ssim;
  int norm = 2;
};

using Handler = std::function<json(const Options&, std::ostream&)>;

json cmd_encode_depth(const Options& o, std::ostream&) {
  const DepthVideo depth = io::depth_from_tensor(io::read_tensor(o.in));
  const EncodedDepth enc = encode_disparity(depth, o.range);
  if (!o.out.empty()) io::write_tensor(o.out, io::to_tensor(enc.disparity.values));
  json j = shape_json(depth.frames, depth.height, depth.width);
  j["scale"] = enc.scale.max_disparity;
  j["valid_pixels"] = static_cast<long long>(enc.disparity.valid.values.cast<long long>().sum());
  return j;
}

json cmd_decode_depth(const Options& o, std::ostream&) {
  NormalizedDisparityVideo norm;
  norm.values = io::depth_from_tensor(io::read_tensor(o.in));
  norm.valid = Mask(norm.values.frames, norm.values.height, norm.values.width);
  for (Eigen::Index i = 0; i < norm.values.size(); ++i) {
    norm.valid.values[i] = std::isfinite(norm.values.values[i]) ? 1 : 0;
  }
  std::optional<ClipScale> scale;
  if (o.scale) scale = ClipScale{*o.scale};
  const DepthVideo depth = decode_disparity(norm, scale);
  if (!o.out.empty()) io::write_tensor(o.out, io::to_tensor(depth));
  json j = shape_json(depth.frames, depth.height, depth.width);
  long long valid = 0;
  for (Eigen::Index i = 0; i < depth.size(); ++i) valid += is_valid_depth(depth.values[i]) ? 1 : 0;
  j["valid_pixels"] = valid;
  return j;
}

json cmd_build_raymap(const Options& o, std::ostream& err) {
  const Trajectory traj = io::read_tum(o.traj, &err);
  const Intrinsicsd K = parse_intrinsics(o.intrinsics);
  const auto extrinsics = poses_of(traj, PoseConvention::camera_from_world);
  const Raymap r = build_raymap(extrinsics, K, ClipScale{o.clip_scale}, o.ray);
  if (!o.out.empty()) io::write_tensor(o.out, io::to_tensor(r));
  json j = shape_json(r.frames, r.height, r.width);
  if (!o.latent_out.empty()) {
    const LatentRaymap l = rearrange_raymap(r);
    io::write_tensor(o.latent_out, io::to_tensor(l));
    j["latent_groups"] = l.groups;
  }
  return j;
}

json cmd_raymap_to_camera(const Options& o, std::ostream&) {
  const Raymap decoded = decode_raymap_origins(io::raymap_from_tensor(io::read_tensor(o.raymap)), o.ray);
  const CameraEstimate cam = raymap_to_camera(decoded);
  const auto intrinsics = recover_intrinsics_lsq(decoded, cam.extrinsics);
  Trajectory traj;
  for (std::size_t t = 0; t < cam.extrinsics.size(); ++t) {
    Posed wfc = to_convention(cam.extrinsics[t], PoseConvention::world_from_camera);
    wfc.translation *= o.clip_scale;
    traj.entries.push_back({static_cast<double>(t), wfc});
  }
  if (!o.out.empty()) io::write_tum(o.out, traj);
  json ks = json::array();
  for (const auto& K : intrinsics) ks.push_back({{"cx", K.cx}, {"cy", K.cy}, {"fx", K.fx}, {"fy", K.fy}});
  return {{"frames", decoded.frames}, {"intrinsics", ks}};
}

json cmd_project_pointmap(const Options& o, std::ostream&) {
  const DepthVideo depth = io::depth_from_tensor(io::read_tensor(o.depths));
  const Raymap decoded = scale_origins(
      decode_raymap_origins(io::raymap_from_tensor(io::read_tensor(o.raymap)), o.ray), o.clip_scale);
  const PointMap pm = project_pointmap(depth, decoded);
  if (!o.out.empty()) io::write_tensor(o.out, io::to_tensor(pm));
  json j = shape_json(pm.frames, pm.height, pm.width);
  j["valid_points"] = static_cast<long long>(pm.valid.values.cast<long long>().sum());
  return j;
}

json cmd_eval_depth(const Options& o, std::ostream&) {
  const DepthVideo pred = io::depth_from_tensor(io::read_tensor(o.pred));
  const DepthVideo gt = io::depth_from_tensor(io::read_tensor(o.gt));
  const Mask mask = o.mask.empty() ? full_mask(gt) : io::mask_from_tensor(io::read_tensor(o.mask));
  const DepthMetrics m = depth_metrics(pred, gt, mask, o.depth_align, o.estimator);
  return {{"abs_rel", m.abs_rel}, {"delta_125", m.delta_125}};
}

// Alignment round-off on identical trajectories is reported as exact zero.
double snap_zero(double v) { return std::abs(v) < kReportZero ? 0.0 : v; }

json cmd_eval_pose(const Options& o, std::ostream& err) {
  const Trajectory pred = io::read_tum(o.pred, &err);
  const Trajectory gt = io::read_tum(o.gt, &err);
  const PoseMetrics m = pose_metrics(pred, gt, o.pose_align, o.delta, o.max_dt);
  return {{"ate_rmse", snap_zero(m.ate_rmse)},
          {"rpe_rot_deg", snap_zero(m.rpe_rot_deg)},
          {"rpe_trans", snap_zero(m.rpe_trans)}};
}

json cmd_stitch_depth(const Options& o, std::ostream&) {
  WindowSet<DepthVideo> ws;
  ws.stride = o.stride;
  for (const auto& [start, path] : read_manifest(o.manifest)) {
    ws.windows.push_back({start, io::depth_from_tensor(io::read_tensor(path))});
  }
  const StitchedDepth s = stitch_depth(ws);
  if (!o.out.empty()) io::write_tensor(o.out, io::to_tensor(s.video));
  json j = shape_json(s.video.frames, s.video.height, s.video.width);
  j["scales"] = s.scales;
  j["start"] = ws.windows.front().start;
  return j;
}

json cmd_stitch_pose(const Options& o, std::ostream& err) {
  WindowSet<Trajectory> ws;
  ws.stride = o.stride;
  for (const auto& [start, path] : read_manifest(o.manifest)) {
    ws.windows.push_back({start, io::read_tum(path, &err)});
  }
  const StitchedTrajectory s = stitch_poses(ws);
  if (!o.out.empty()) io::write_tum(o.out, s.trajectory);
  json windows = json::array();
  for (std::size_t k = 0; k < s.alignments.size(); ++k) {
    const Sim3d& a = s.alignments[k];
    windows.push_back({{"rotation", quaternion_json(a.rotation)},
                       {"scale", a.scale},
                       {"se3_fallback", static_cast<bool>(s.se3_fallback[k])},
                       {"translation", vector_json(a.translation)}});
  }
  return {{"frames", s.trajectory.size()}, {"windows", windows}};
}

json cmd_smooth(const Options& o, std::ostream& err) {
  const Trajectory traj = io::read_tum(o.traj, &err);
  const Trajectory smoothed = kalman_smooth(traj, o.kalman);
  if (!o.out.empty()) io::write_tum(o.out, smoothed);
  const auto a = traj.centers();
  const auto b = smoothed.centers();
  double sq = 0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]).squaredNorm();
  return {{"frames", traj.size()}, {"rms_correction", std::sqrt(sq / static_cast<double>(a.size()))}};
}

json cmd_slice(const Options& o, std::ostream&) {
  const auto segments = slice(io::read_frame_stats_jsonl(o.stats), o.slice);
  json j = json::array();
  for (const auto& s : segments) j.push_back(json::array({s.start, s.end}));
  return j;
}

json cmd_refine(const Options& o, std::ostream& err) {
  const auto tracks = io::read_tracks_jsonl(o.tracks);
  const DepthVideo depths = io::depth_from_tensor(io::read_tensor(o.depths));
  const Trajectory init = io::read_tum(o.init_traj, &err);
  const Intrinsicsd K = parse_intrinsics(o.intrinsics);
  std::optional<Mask> masks;
  if (!o.mask.empty()) masks = io::mask_from_tensor(io::read_tensor(o.mask));
  const ba::Problem problem = ba::build_problem(tracks, depths, poses_of(init, PoseConvention::camera_from_world),
                                                K, masks ? &*masks : nullptr);
  const ba::Solution sol = ba::solve(problem, o.solve);
  Trajectory out;
  for (std::size_t i = 0; i < sol.poses.size(); ++i) {
    out.entries.push_back(
        {init[i].timestamp, to_convention(sol.poses[i], PoseConvention::world_from_camera)});
  }
  if (!o.out.empty()) io::write_tum(o.out, out);
  const ba::Report& r = sol.report;
  return {{"behind_camera", r.behind_camera},
          {"converged", r.converged},
          {"dropped_observations", r.dropped_observations},
          {"final_cost", r.final_cost},
          {"initial_cost", r.initial_cost},
          {"intrinsics",
           {{"cx", sol.intrinsics.cx}, {"cy", sol.intrinsics.cy}, {"fx", sol.intrinsics.fx}, {"fy", sol.intrinsics.fy}}},
          {"iterations", r.iterations},
          {"termination", r.termination}};
}

json cmd_losses(const Options& o, std::ostream&) {
  if (o.kind == "ms_ssim") {
    const auto a = io::image_from_tensor(io::read_tensor(o.pred));
    const auto b = io::image_from_tensor(io::read_tensor(o.gt));
    return {{"kind", o.kind}, {"value", ms_ssim(a, b, o.ms_ssim)}};
  }
  const DepthVideo pred = io::depth_from_tensor(io::read_tensor(o.pred));
  const DepthVideo gt = io::depth_from_tensor(io::read_tensor(o.gt));
  if (o.kind == "ssi") {
    const Mask mask = o.mask.empty() ? full_mask(gt) : io::mask_from_tensor(io::read_tensor(o.mask));
    const SsiAlignment a = ssi_align(pred, gt, mask);
    return {{"kind", o.kind}, {"scale", a.scale}, {"shift", a.shift}, {"value", ssi_loss(pred, gt, mask, o.ssi)}};
  }
  const Raymap decoded = scale_origins(
      decode_raymap_origins(io::raymap_from_tensor(io::read_tensor(o.raymap)), o.ray), o.clip_scale);
  const PointMap p = project_pointmap(pred, decoded);
  const PointMap g = project_pointmap(gt, decoded);
  return {{"kind", o.kind}, {"value", pointmap_loss(p, g, o.norm)}};
}

void add_ray_options(CLI::App* sub, Options& o) {
  sub->add_option("--s-ray", o.ray.s_ray, "Translation pre-log scale")->capture_default_str();
}

void add_scale_option(CLI::App* sub, Options& o) {
  sub->add_option("--scale", o.clip_scale, "Clip maximum disparity shared with the depth codec")
      ->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  int threads = 1;
  CLI::App app{"Geometric core: depth and raymap codecs, losses, evaluation, stitching, slicing, refinement",
               "geoworld"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--threads", threads, "Worker threads for data-parallel stages")
      ->check(CLI::Range(1, 1024))
      ->capture_default_str();

  std::map<CLI::App*, Handler> handlers;
  auto sub = [&](const std::string& name, const std::string& help, Handler h) {
    CLI::App* s = app.add_subcommand(name, help);
    handlers[s] = std::move(h);
    return s;
  };

  {
    auto* s = sub("encode-depth", "Depth tensor to normalized disparity", cmd_encode_depth);
    s->add_option("--in", o.in, "Depth tensor (T x H x W)")->required();
    s->add_option("--out", o.out, "Normalized disparity tensor; invalid pixels are NaN");
    s->add_option("--d-min", o.range.d_min, "Near clip")->capture_default_str();
    s->add_option("--d-max", o.range.d_max, "Far clip")->capture_default_str();
  }
  {
    auto* s = sub("decode-depth", "Normalized disparity to depth", cmd_decode_depth);
    s->add_option("--in", o.in, "Normalized disparity tensor")->required();
    s->add_option("--out", o.out, "Depth tensor; invalid pixels are 0");
    s->add_option("--scale", o.scale, "Clip maximum disparity from encode-depth; omit for relative depth");
  }
  {
    auto* s = sub("build-raymap", "Trajectory and intrinsics to a raymap", cmd_build_raymap);
    s->add_option("--traj", o.traj, "TUM trajectory")->required();
    s->add_option("--intrinsics", o.intrinsics, "fx,fy,cx,cy,W,H")->required();
    s->add_option("--out", o.out, "Raymap tensor (T x 6 x H x W)");
    s->add_option("--latent-out", o.latent_out, "Rearranged latent raymap tensor");
    add_scale_option(s, o);
    add_ray_options(s, o);
  }
  {
    auto* s = sub("raymap-to-camera", "Raymap to extrinsics and intrinsics", cmd_raymap_to_camera);
    s->add_option("--raymap,--in", o.raymap, "Raymap tensor")->required();
    s->add_option("--out", o.out, "TUM trajectory, timestamps are frame indices");
    add_scale_option(s, o);
    add_ray_options(s, o);
  }
  {
    auto* s = sub("project-pointmap", "Depth and raymap to a pointmap", cmd_project_pointmap);
    s->add_option("--depths", o.depths, "Depth tensor")->required();
    s->add_option("--raymap", o.raymap, "Raymap tensor")->required();
    s->add_option("--out", o.out, "Pointmap tensor (T x H x W x 3)");
    add_scale_option(s, o);
    add_ray_options(s, o);
  }
  {
    auto* s = sub("eval-depth", "Abs Rel and delta < 1.25", cmd_eval_depth);
    s->add_option("--pred", o.pred, "Predicted depth tensor")->required();
    s->add_option("--gt", o.gt, "Ground-truth depth tensor")->required();
    s->add_option("--mask", o.mask, "Evaluation mask tensor");
    add_choice(s, "--align", o.depth_align, kDepthAlign, "none|scale|scale_shift");
    add_choice(s, "--scale-estimator", o.estimator, kEstimators, "least_squares|median_ratio");
  }
  {
    auto* s = sub("eval-pose", "ATE and RPE", cmd_eval_pose);
    s->add_option("--pred", o.pred, "Predicted TUM trajectory")->required();
    s->add_option("--gt", o.gt, "Ground-truth TUM trajectory")->required();
    add_choice(s, "--align", o.pose_align, kPoseAlign, "none|se3|sim3");
    s->add_option("--delta", o.delta, "RPE frame offset")->check(CLI::PositiveNumber)->capture_default_str();
    s->add_option("--max-dt", o.max_dt, "Timestamp association tolerance")->capture_default_str();
  }
  {
    auto* s = sub("stitch-depth", "Stitch overlapping depth windows", cmd_stitch_depth);
    s->add_option("--manifest", o.manifest, "Lines of 'start_frame path'")->required();
    s->add_option("--stride", o.stride, "Frames between window starts")->capture_default_str();
    s->add_option("--out", o.out, "Stitched depth tensor");
  }
  {
    auto* s = sub("stitch-pose", "Stitch overlapping trajectory windows", cmd_stitch_pose);
    s->add_option("--manifest", o.manifest, "Lines of 'start_frame path'")->required();
    s->add_option("--stride", o.stride, "Frames between window starts")->capture_default_str();
    s->add_option("--out", o.out, "Stitched TUM trajectory");
  }
  {
    auto* s = sub("smooth", "Constant-velocity smoothing of camera centers", cmd_smooth);
    s->add_option("--traj,--in", o.traj, "TUM trajectory")->required();
    s->add_option("--process-sigma", o.kalman.process_sigma, "Acceleration noise")->capture_default_str();
    s->add_option("--obs-sigma", o.kalman.obs_sigma, "Position noise")->capture_default_str();
    s->add_option("--out", o.out, "Smoothed TUM trajectory");
  }
  {
    auto* s = sub("slice", "Cut a frame-stats stream into segments", cmd_slice);
    s->add_option("--stats", o.stats, "JSONL frame stats")->required();
    s->add_option("--min-keypoints", o.slice.min_keypoints)->capture_default_str();
    s->add_option("--max-low-texture-ratio", o.slice.max_low_texture_ratio)->capture_default_str();
    s->add_option("--max-dynamic-ratio", o.slice.max_dynamic_ratio)->capture_default_str();
    s->add_option("--max-flow-mag", o.slice.max_flow_mag)->capture_default_str();
    s->add_option("--max-fb-err-ratio", o.slice.max_fb_err_ratio)->capture_default_str();
    s->add_option("--min-segment-len", o.slice.min_segment_len)->capture_default_str();
  }
  {
    auto* s = sub("refine", "Depth-anchored bundle adjustment of poses and focal", cmd_refine);
    s->add_option("--tracks", o.tracks, "JSONL tracks")->required();
    s->add_option("--depths", o.depths, "Depth tensor")->required();
    s->add_option("--init-traj", o.init_traj, "Initial TUM trajectory")->required();
    s->add_option("--intrinsics", o.intrinsics, "fx,fy,cx,cy,W,H")->required();
    s->add_option("--mask", o.mask, "Static-pixel mask tensor");
    s->add_option("--out", o.out, "Refined TUM trajectory");
    add_choice(s, "--robust", o.solve.robust, kRobust, "cauchy|none");
    s->add_option("--cauchy-scale", o.solve.cauchy_scale, "Pixels")->capture_default_str();
    s->add_option("--max-iters", o.solve.max_iters)->capture_default_str();
    s->add_option("--grad-tol", o.solve.grad_tol)->capture_default_str();
    s->add_option("--step-tol", o.solve.step_tol)->capture_default_str();
    s->add_option("--function-tol", o.solve.function_tol)->capture_default_str();
    add_choice(s, "--jacobian", o.solve.jacobian, kJacobian, "analytic|numeric");
  }
  {
    auto* s = sub("losses", "SSI, MS-SSIM or pointmap loss", cmd_losses);
    s->add_option("--kind", o.kind, "ssi|ms_ssim|pointmap")
        ->check(CLI::IsMember({"ssi", "ms_ssim", "pointmap"}))
        ->capture_default_str();
    s->add_option("--pred", o.pred, "Predicted depth or image tensor")->required();
    s->add_option("--gt", o.gt, "Reference depth or image tensor")->required();
    s->add_option("--mask", o.mask, "Mask tensor (ssi)");
    s->add_option("--alpha", o.ssi.alpha, "Gradient term weight (ssi)")->capture_default_str();
    s->add_option("--num-scales", o.ssi.num_scales, "Gradient scales (ssi)")->capture_default_str();
    s->add_option("--dynamic-range", o.ms_ssim.dynamic_range, "Image value range (ms_ssim)")
        ->capture_default_str();
    s->add_option("--raymap", o.raymap, "Raymap tensor (pointmap)");
    s->add_option("--norm", o.norm, "1 or 2 (pointmap)")->check(CLI::IsMember({1, 2}))->capture_default_str();
    add_scale_option(s, o);
    add_ray_options(s, o);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsageError;
  }

  CLI::App* chosen = app.get_subcommands().front();
  if (chosen->get_name() == "losses" && o.kind == "pointmap" && o.raymap.empty()) {
    err << "usage error: --raymap is required for --kind pointmap\n";
    return kUsageError;
  }

  try {
    set_num_threads(threads);
    const json report = handlers.at(chosen)(o, err);
    out << to_text(report) << "\n";
    return kSuccess;
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return kDomainError;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return kDomainError;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace geoworld::cli
