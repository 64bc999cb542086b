#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "geoworld/cli.hpp"
#include "geoworld/io.hpp"
#include "synth.hpp"

using namespace geoworld;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result call(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Runs the installed binary; stdout only.
Result spawn(const std::string& args) {
  Result r;
  const std::string cmd = std::string(GEOWORLD_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return {-1, "", ""};
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof(buf), p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / "geoworld_test_cli";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    synth::Rng rng(141);

    DepthVideo depth(3, 12, 16);
    for (Eigen::Index i = 0; i < depth.size(); ++i) depth.values[i] = synth::uniform(rng, 1, 4);
    io::write_tensor(path("depth.bin"), io::to_tensor(depth));
    DepthVideo noisy = depth;
    for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy.values[i] *= 1 + synth::gauss(rng, 0.05);
    io::write_tensor(path("noisy.bin"), io::to_tensor(noisy));

    io::write_tum(path("traj.tum"), synth::random_trajectory(rng, 30));
    Trajectory three = synth::random_trajectory(rng, 3);
    io::write_tum(path("traj3.tum"), three);

    std::ofstream stats(path("stats.jsonl"));
    for (int i = 0; i < 40; ++i) {
      stats << json{{"frame", i}, {"keypoint_count", 300}, {"low_texture_ratio", 0.1}, {"dynamic_ratio", 0.0},
                    {"flow_mag", 4.0}, {"fb_err_ratio", 0.3}}
                   .dump()
            << "\n";
    }
    stats.close();

    synth::SceneConfig cfg;
    cfg.frames = 6;
    cfg.tracks = 40;
    const synth::Scene s = synth::make_scene(142, cfg);
    io::write_tensor(path("scene_depth.bin"), io::to_tensor(s.depths));
    std::ofstream tracks(path("tracks.jsonl"));
    for (const auto& t : s.tracks) {
      json obs = json::array();
      for (const auto& o : t.observations) obs.push_back({{"frame", o.frame}, {"u", o.u}, {"v", o.v}});
      tracks << json{{"id", t.id}, {"obs", obs}}.dump() << "\n";
    }
    tracks.close();
    io::write_tum(path("scene_init.tum"), synth::to_trajectory(synth::perturb_poses(rng, s.poses, 0.01, 0.02)));
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%d,%d", s.K.fx, s.K.fy, s.K.cx, s.K.cy, s.K.width,
                  s.K.height);
    scene_k_ = buf;

    DepthVideo video(20, 4, 5);
    for (Eigen::Index i = 0; i < video.size(); ++i) video.values[i] = synth::uniform(rng, 1, 5);
    std::ofstream manifest(path("windows.txt"));
    for (int start = 0; start + 8 <= 20; start += 4) {
      DepthVideo w(8, 4, 5);
      for (int t = 0; t < 8; ++t) w.frame(t) = video.frame(start + t) * (1 + 0.5 * start);
      const std::string name = "w" + std::to_string(start) + ".bin";
      io::write_tensor(path(name), io::to_tensor(w));
      manifest << start << " " << name << "\n";
    }
    manifest.close();

    Eigen::ArrayXXd img = synth::smooth_image(rng, 180, 180);
    io::write_tensor(path("img_a.bin"), io::to_tensor(img));
    for (Eigen::Index i = 0; i < img.size(); ++i) img(i) += synth::gauss(rng, 0.02);
    io::write_tensor(path("img_b.bin"), io::to_tensor(img));
  }

  static std::string path(const std::string& name) { return (dir_ / name).string(); }
  static std::string read(const std::string& name) { return io::read_file(path(name)); }

  static inline fs::path dir_;
  static inline std::string scene_k_;
};

}  // namespace

TEST(CliFormat, Numbers) {
  EXPECT_EQ(cli::format_number(0.0), "0.0");
  EXPECT_EQ(cli::format_number(-0.0), "0.0");
  EXPECT_EQ(cli::format_number(1.0), "1.0");
  EXPECT_EQ(cli::format_number(100.0), "100.0");
  EXPECT_EQ(cli::format_number(0.1), "0.1");
  EXPECT_EQ(cli::format_number(1.0 / 3.0), "0.333333333");
  EXPECT_EQ(cli::format_number(1e-20), "1e-20");
  EXPECT_EQ(cli::format_number(std::nan("")), "null");
  EXPECT_EQ(cli::format_number(-std::numeric_limits<double>::infinity()), "null");
}

TEST_F(CliTest, EvalPoseIdenticalGolden) {
  const Result r = call({"eval-pose", "--pred", path("traj.tum"), "--gt", path("traj.tum"), "--align", "sim3"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "{\"ate_rmse\": 0.0, \"rpe_rot_deg\": 0.0, \"rpe_trans\": 0.0}\n");
}

TEST_F(CliTest, SliceAllPassingGolden) {
  const Result r = call({"slice", "--stats", path("stats.jsonl"), "--min-keypoints", "50"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "[[0, 40]]\n");
  const Result tight = call({"slice", "--stats", path("stats.jsonl"), "--min-keypoints", "301"});
  EXPECT_EQ(tight.code, 0);
  EXPECT_EQ(tight.out, "[]\n");
}

TEST_F(CliTest, DepthCodecPipelineRoundTrip) {
  const Result enc = call({"encode-depth", "--in", path("depth.bin"), "--out", path("disp.bin")});
  ASSERT_EQ(enc.code, 0) << enc.err;
  const json report = json::parse(enc.out);
  EXPECT_EQ(report["frames"], 3);
  EXPECT_EQ(report["valid_pixels"], 3 * 12 * 16);
  char scale[64];
  std::snprintf(scale, sizeof(scale), "%.17g", report["scale"].get<double>());
  const Result dec = call({"decode-depth", "--in", path("disp.bin"), "--out", path("back.bin"), "--scale", scale});
  ASSERT_EQ(dec.code, 0) << dec.err;
  const Result ev = call({"eval-depth", "--pred", path("back.bin"), "--gt", path("depth.bin"), "--align", "none"});
  ASSERT_EQ(ev.code, 0) << ev.err;
  const json m = json::parse(ev.out);
  EXPECT_LT(m["abs_rel"].get<double>(), 1e-6);
  EXPECT_EQ(m["delta_125"].get<double>(), 100.0);
}

TEST_F(CliTest, EvalDepthScaleAlignment) {
  const Result r = call({"eval-depth", "--pred", path("noisy.bin"), "--gt", path("depth.bin"), "--align", "scale"});
  ASSERT_EQ(r.code, 0);
  const json m = json::parse(r.out);
  EXPECT_GT(m["abs_rel"].get<double>(), 0.0);
  EXPECT_LT(m["abs_rel"].get<double>(), 0.1);
  EXPECT_EQ(r.out.find('\n'), r.out.size() - 1);
}

TEST_F(CliTest, RaymapPipeline) {
  const std::string K = "10,11,8,8,16,16";
  const Result b = call({"build-raymap", "--traj", path("traj.tum"), "--intrinsics", K, "--out", path("ray.bin"),
                         "--latent-out", path("latent.bin")});
  ASSERT_EQ(b.code, 0) << b.err;
  const io::Tensor ray = io::read_tensor(path("ray.bin"));
  EXPECT_EQ(ray.dims, (std::vector<std::uint32_t>{30, 6, 16, 16}));
  EXPECT_EQ(io::read_tensor(path("latent.bin")).dims, (std::vector<std::uint32_t>{8, 24, 2, 2}));
  const Result c = call({"raymap-to-camera", "--raymap", path("ray.bin"), "--out", path("cams.tum")});
  ASSERT_EQ(c.code, 0) << c.err;
  const json intr = json::parse(c.out)["intrinsics"];
  ASSERT_EQ(intr.size(), 30u);
  EXPECT_NEAR(intr[0]["fx"].get<double>(), 10.0, 1e-3);
  EXPECT_NEAR(intr[0]["fy"].get<double>(), 11.0, 1e-3);
  EXPECT_NEAR(intr[0]["cx"].get<double>(), 8.0, 1e-3);
  const auto cams = io::read_tum(path("cams.tum"));
  const auto truth = io::read_tum(path("traj.tum"));
  ASSERT_EQ(cams.size(), 30u);
  for (std::size_t i = 0; i < cams.size(); ++i) {
    EXPECT_LT(rotation_geodesic_error(cams[i].pose.rotation, truth[i].pose.rotation), 1e-6);
  }

  const Result p = call({"project-pointmap", "--depths", path("depth.bin"), "--raymap", path("ray.bin"), "--out",
                         path("pm.bin")});
  EXPECT_EQ(p.code, 1);
  EXPECT_EQ(p.err.rfind("error: shape_mismatch:", 0), 0u) << p.err;
}

TEST_F(CliTest, StitchAndSmooth) {
  const Result d = call({"stitch-depth", "--manifest", path("windows.txt"), "--stride", "4", "--out",
                         path("stitched.bin")});
  ASSERT_EQ(d.code, 0) << d.err;
  const json j = json::parse(d.out);
  EXPECT_EQ(j["scales"].size(), 4u);
  EXPECT_EQ(io::read_tensor(path("stitched.bin")).dims[0], 20u);
  const Result s = call({"smooth", "--traj", path("traj.tum"), "--out", path("smooth.tum")});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_EQ(json::parse(s.out)["frames"], 30);
}

TEST_F(CliTest, RefineImprovesCost) {
  const Result r = call({"refine", "--tracks", path("tracks.jsonl"), "--depths", path("scene_depth.bin"),
                         "--init-traj", path("scene_init.tum"), "--intrinsics", scene_k_, "--out",
                         path("refined.tum")});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  EXPECT_LT(j["final_cost"].get<double>(), j["initial_cost"].get<double>());
  EXPECT_EQ(j["dropped_observations"], 0);
  EXPECT_EQ(io::read_tum(path("refined.tum")).size(), 6u);
}

TEST_F(CliTest, Losses) {
  const Result self = call({"losses", "--kind", "ms_ssim", "--pred", path("img_a.bin"), "--gt", path("img_a.bin")});
  ASSERT_EQ(self.code, 0) << self.err;
  EXPECT_NEAR(json::parse(self.out)["value"].get<double>(), 1.0, 1e-9);
  const Result ssi = call({"losses", "--kind", "ssi", "--pred", path("noisy.bin"), "--gt", path("depth.bin")});
  ASSERT_EQ(ssi.code, 0) << ssi.err;
  const Result pm = call({"losses", "--kind", "pointmap", "--pred", path("noisy.bin"), "--gt", path("depth.bin")});
  EXPECT_EQ(pm.code, 2);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(call({}).code, 2);
  EXPECT_EQ(call({"no-such-command"}).code, 2);
  EXPECT_EQ(call({"eval-pose", "--pred", path("traj.tum")}).code, 2);
  EXPECT_EQ(call({"eval-pose", "--pred", path("traj.tum"), "--gt", path("traj.tum"), "--bogus"}).code, 2);
  EXPECT_EQ(call({"eval-pose", "--pred", path("traj.tum"), "--gt", path("traj.tum"), "--align", "affine"}).code, 2);
  EXPECT_EQ(call({"--threads", "0", "slice", "--stats", path("stats.jsonl")}).code, 2);

  const Result missing = call({"encode-depth", "--in", path("absent.bin")});
  EXPECT_EQ(missing.code, 1);
  EXPECT_EQ(missing.err.rfind("error: io:", 0), 0u) << missing.err;
  EXPECT_EQ(std::count(missing.err.begin(), missing.err.end(), '\n'), 1);

  const Result few = call({"eval-pose", "--pred", path("traj3.tum"), "--gt", path("traj3.tum"), "--delta", "5"});
  EXPECT_EQ(few.code, 1);
  EXPECT_TRUE(few.out.empty());
}

TEST_F(CliTest, HelpListsDefaults) {
  const Result top = call({"--help"});
  EXPECT_EQ(top.code, 0);
  for (const char* sub : {"encode-depth", "decode-depth", "build-raymap", "raymap-to-camera", "project-pointmap",
                          "eval-depth", "eval-pose", "stitch-depth", "stitch-pose", "smooth", "slice", "refine",
                          "losses"}) {
    EXPECT_NE(top.out.find(sub), std::string::npos) << sub;
  }
  const Result slice = call({"slice", "--help"});
  EXPECT_EQ(slice.code, 0);
  for (const char* d : {"[50]", "[0.5]", "[60]", "[2]", "[8]"}) EXPECT_NE(slice.out.find(d), std::string::npos) << d;
  const Result refine = call({"refine", "--help"});
  for (const char* d : {"[cauchy]", "[100]", "[1e-10]", "[analytic]"}) {
    EXPECT_NE(refine.out.find(d), std::string::npos) << d;
  }
  const Result enc = call({"encode-depth", "--help"});
  EXPECT_NE(enc.out.find("[0.01]"), std::string::npos);
  EXPECT_NE(enc.out.find("[100]"), std::string::npos);
}

TEST_F(CliTest, BinaryOutputByteStableAcrossRunsAndThreads) {
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"encode-depth --in " + path("depth.bin") + " --out ", ".bin"},
      {"build-raymap --traj " + path("traj.tum") + " --intrinsics 10,11,8,6,16,16 --out ", ".bin"},
      {"stitch-depth --manifest " + path("windows.txt") + " --stride 4 --out ", ".bin"},
      {"smooth --traj " + path("traj.tum") + " --out ", ".tum"},
      {"refine --tracks " + path("tracks.jsonl") + " --depths " + path("scene_depth.bin") + " --init-traj " +
           path("scene_init.tum") + " --intrinsics " + scene_k_ + " --out ",
       ".tum"},
  };
  int k = 0;
  for (const auto& [cmd, ext] : commands) {
    std::string ref_out, ref_file;
    for (int threads : {1, 1, 3, 8}) {
      const std::string file = path("stable" + std::to_string(k++) + ext);
      const Result r = spawn("--threads " + std::to_string(threads) + " " + cmd + file);
      ASSERT_EQ(r.code, 0) << cmd;
      if (ref_out.empty()) {
        ref_out = r.out;
        ref_file = io::read_file(file);
      } else {
        EXPECT_EQ(r.out, ref_out) << cmd;
        EXPECT_EQ(io::read_file(file), ref_file) << cmd;
      }
    }
  }
  for (const std::string& cmd :
       {"eval-pose --pred " + path("traj.tum") + " --gt " + path("smooth.tum"),
        "losses --kind ms_ssim --pred " + path("img_a.bin") + " --gt " + path("img_b.bin"),
        "slice --stats " + path("stats.jsonl")}) {
    const Result a = spawn("--threads 1 " + cmd), b = spawn("--threads 5 " + cmd);
    EXPECT_EQ(a.code, 0) << cmd;
    EXPECT_EQ(a.out, b.out) << cmd;
  }
}
