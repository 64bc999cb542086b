#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geoworld/ba.hpp"
#include "geoworld/geom.hpp"
#include "geoworld/losses.hpp"
#include "geoworld/raymap.hpp"
#include "geoworld/slicer.hpp"
#include "geoworld/video.hpp"

namespace geoworld::io {

/// Tensor container: "AETR", u32 version (1), u32 dtype (0 = f32), u32 ndim,
/// ndim x u32 dims, then row-major little-endian f32 payload. Nothing may follow.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const;
};

inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr std::uint32_t kTensorDtypeF32 = 0;

std::string encode_tensor(const Tensor& t);
Tensor decode_tensor(std::string_view bytes);
void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

Tensor to_tensor(const DepthVideo& v);
Tensor to_tensor(const Mask& m);
Tensor to_tensor(const Raymap& r);
Tensor to_tensor(const LatentRaymap& l);
Tensor to_tensor(const PointMap& p);
Tensor to_tensor(const Eigen::ArrayXXd& image);

/// Accepts T x H x W, or H x W as a single frame.
DepthVideo depth_from_tensor(const Tensor& t);
/// Nonzero values are set.
Mask mask_from_tensor(const Tensor& t);
Raymap raymap_from_tensor(const Tensor& t);
LatentRaymap latent_raymap_from_tensor(const Tensor& t);
Eigen::ArrayXXd image_from_tensor(const Tensor& t);

/// "timestamp tx ty tz qx qy qz qw" per line, '#' comments. Poses are
/// world_from_camera. Quaternions are normalized; a warning goes to `warnings`
/// (if non-null) when the norm deviates by more than 1e-3.
Trajectory parse_tum(std::istream& in, std::ostream* warnings = nullptr);
Trajectory read_tum(const std::string& path, std::ostream* warnings = nullptr);
std::string format_tum(const Trajectory& traj);
void write_tum(const std::string& path, const Trajectory& traj);

/// Grayscale "Pf" PFM; rows returned top-down as an H x W array.
Eigen::ArrayXXd decode_pfm(std::string_view bytes);
Eigen::ArrayXXd read_pfm(const std::string& path);

std::vector<FrameStats> parse_frame_stats_jsonl(std::istream& in);
std::vector<FrameStats> read_frame_stats_jsonl(const std::string& path);

/// {"id": n, "obs": [{"frame": f, "u": u, "v": v}, ...]} per line.
std::vector<ba::Track> parse_tracks_jsonl(std::istream& in);
std::vector<ba::Track> read_tracks_jsonl(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace geoworld::io
