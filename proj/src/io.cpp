#include "geoworld/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace geoworld::io {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>(i)]))
         << (8 * i);
  }
  return v;
}

std::uint32_t float_bits(float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, sizeof(u));
  return u;
}

float bits_float(std::uint32_t u) {
  float f;
  std::memcpy(&f, &u, sizeof(f));
  return f;
}

constexpr char kMagic[4] = {'A', 'E', 'T', 'R'};

std::size_t checked_count(const std::vector<std::uint32_t>& dims) {
  if (dims.empty()) fail(ErrorCode::format, "tensor: empty dims");
  std::size_t n = 1;
  for (auto d : dims) {
    if (d == 0) fail(ErrorCode::format, "tensor: zero-sized dimension");
    if (n > std::numeric_limits<std::size_t>::max() / 4 / d) {
      fail(ErrorCode::format, "tensor: dims overflow");
    }
    n *= d;
  }
  return n;
}

float to_f32(double v) { return static_cast<float>(v); }

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.dims.size() != rank) {
    fail(ErrorCode::shape_mismatch, std::string(what) + ": expected rank " + std::to_string(rank) +
                                        " tensor, got rank " + std::to_string(t.dims.size()));
  }
}

}  // namespace

std::size_t Tensor::element_count() const { return checked_count(dims); }

std::string encode_tensor(const Tensor& t) {
  const std::size_t n = checked_count(t.dims);
  if (t.data.size() != n) fail(ErrorCode::shape_mismatch, "tensor: dims product differs from data size");
  if (t.dims.size() > std::numeric_limits<std::uint32_t>::max()) {
    fail(ErrorCode::format, "tensor: too many dims");
  }
  std::string out(kMagic, 4);
  put_u32(out, kTensorVersion);
  put_u32(out, kTensorDtypeF32);
  put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) put_u32(out, d);
  out.reserve(out.size() + 4 * n);
  for (float f : t.data) put_u32(out, float_bits(f));
  return out;
}

Tensor decode_tensor(std::string_view bytes) {
  if (bytes.size() < 16) fail(ErrorCode::format, "tensor: truncated header");
  if (bytes.substr(0, 4) != std::string_view(kMagic, 4)) fail(ErrorCode::format, "tensor: bad magic");
  if (get_u32(bytes, 4) != kTensorVersion) fail(ErrorCode::format, "tensor: unsupported version");
  if (get_u32(bytes, 8) != kTensorDtypeF32) fail(ErrorCode::format, "tensor: unsupported dtype");
  const std::uint32_t ndim = get_u32(bytes, 12);
  if (ndim == 0) fail(ErrorCode::format, "tensor: empty dims");
  if (bytes.size() < 16 + 4 * static_cast<std::size_t>(ndim)) {
    fail(ErrorCode::format, "tensor: truncated header");
  }
  Tensor t;
  t.dims.reserve(ndim);
  for (std::uint32_t i = 0; i < ndim; ++i) t.dims.push_back(get_u32(bytes, 16 + 4 * std::size_t{i}));
  const std::size_t n = checked_count(t.dims);
  const std::size_t header = 16 + 4 * static_cast<std::size_t>(ndim);
  const std::size_t expected = header + 4 * n;
  if (bytes.size() < expected) fail(ErrorCode::format, "tensor: truncated payload");
  if (bytes.size() > expected) fail(ErrorCode::format, "tensor: trailing bytes after payload");
  t.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) t.data[i] = bits_float(get_u32(bytes, header + 4 * i));
  return t;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::io, "write failed for " + path);
}

void write_tensor(const std::string& path, const Tensor& t) { write_file(path, encode_tensor(t)); }

Tensor read_tensor(const std::string& path) { return decode_tensor(read_file(path)); }

Tensor to_tensor(const DepthVideo& v) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(v.frames), static_cast<std::uint32_t>(v.height),
            static_cast<std::uint32_t>(v.width)};
  t.data.reserve(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) t.data.push_back(to_f32(v.values[i]));
  return t;
}

Tensor to_tensor(const Mask& m) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(m.frames), static_cast<std::uint32_t>(m.height),
            static_cast<std::uint32_t>(m.width)};
  t.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) t.data.push_back(m.values[i] ? 1.0f : 0.0f);
  return t;
}

Tensor to_tensor(const Raymap& r) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(r.frames), Raymap::kChannels,
            static_cast<std::uint32_t>(r.height), static_cast<std::uint32_t>(r.width)};
  t.data.reserve(static_cast<std::size_t>(r.values.size()));
  for (Eigen::Index i = 0; i < r.values.size(); ++i) t.data.push_back(to_f32(r.values[i]));
  return t;
}

Tensor to_tensor(const LatentRaymap& l) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(l.groups), LatentRaymap::kChannels,
            static_cast<std::uint32_t>(l.height), static_cast<std::uint32_t>(l.width)};
  t.data.reserve(static_cast<std::size_t>(l.values.size()));
  for (Eigen::Index i = 0; i < l.values.size(); ++i) t.data.push_back(to_f32(l.values[i]));
  return t;
}

Tensor to_tensor(const PointMap& p) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(p.frames), static_cast<std::uint32_t>(p.height),
            static_cast<std::uint32_t>(p.width), 3};
  t.data.reserve(static_cast<std::size_t>(p.points.size()));
  for (Eigen::Index i = 0; i < p.points.size(); ++i) t.data.push_back(to_f32(p.points[i]));
  return t;
}

Tensor to_tensor(const Eigen::ArrayXXd& image) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(image.rows()), static_cast<std::uint32_t>(image.cols())};
  t.data.reserve(static_cast<std::size_t>(image.size()));
  for (Eigen::Index r = 0; r < image.rows(); ++r) {
    for (Eigen::Index c = 0; c < image.cols(); ++c) t.data.push_back(to_f32(image(r, c)));
  }
  return t;
}

DepthVideo depth_from_tensor(const Tensor& t) {
  checked_count(t.dims);
  if (t.dims.size() != 2 && t.dims.size() != 3) {
    fail(ErrorCode::shape_mismatch, "depth tensor must be T x H x W or H x W");
  }
  const int frames = t.dims.size() == 3 ? static_cast<int>(t.dims[0]) : 1;
  const int height = static_cast<int>(t.dims[t.dims.size() - 2]);
  const int width = static_cast<int>(t.dims[t.dims.size() - 1]);
  DepthVideo v(frames, height, width);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.values[i] = t.data[static_cast<std::size_t>(i)];
  return v;
}

Mask mask_from_tensor(const Tensor& t) {
  const DepthVideo v = depth_from_tensor(t);
  Mask m(v.frames, v.height, v.width);
  for (Eigen::Index i = 0; i < v.size(); ++i) m.values[i] = v.values[i] != 0.0 ? 1 : 0;
  return m;
}

Raymap raymap_from_tensor(const Tensor& t) {
  require_rank(t, 4, "raymap");
  if (t.dims[1] != Raymap::kChannels) fail(ErrorCode::shape_mismatch, "raymap: expected 6 channels");
  Raymap r(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[2]), static_cast<int>(t.dims[3]));
  for (Eigen::Index i = 0; i < r.values.size(); ++i) r.values[i] = t.data[static_cast<std::size_t>(i)];
  return r;
}

LatentRaymap latent_raymap_from_tensor(const Tensor& t) {
  require_rank(t, 4, "latent raymap");
  if (t.dims[1] != LatentRaymap::kChannels) {
    fail(ErrorCode::shape_mismatch, "latent raymap: expected 24 channels");
  }
  LatentRaymap l(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[2]), static_cast<int>(t.dims[3]));
  for (Eigen::Index i = 0; i < l.values.size(); ++i) l.values[i] = t.data[static_cast<std::size_t>(i)];
  return l;
}

Eigen::ArrayXXd image_from_tensor(const Tensor& t) {
  checked_count(t.dims);
  std::size_t rows = 0, cols = 0;
  if (t.dims.size() == 2) {
    rows = t.dims[0];
    cols = t.dims[1];
  } else if (t.dims.size() == 3 && t.dims[0] == 1) {
    rows = t.dims[1];
    cols = t.dims[2];
  } else {
    fail(ErrorCode::shape_mismatch, "image tensor must be H x W or 1 x H x W");
  }
  Eigen::ArrayXXd img(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      img(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.data[r * cols + c];
    }
  }
  return img;
}

Trajectory parse_tum(std::istream& in, std::ostream* warnings) {
  Trajectory traj;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double v[8];
    for (double& x : v) {
      if (!(ls >> x)) fail(ErrorCode::format, "tum: malformed line " + std::to_string(line_no));
    }
    std::string rest;
    if (ls >> rest) fail(ErrorCode::format, "tum: trailing fields on line " + std::to_string(line_no));
    for (double x : v) {
      if (!std::isfinite(x)) fail(ErrorCode::format, "tum: non-finite value on line " + std::to_string(line_no));
    }
    Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    const double norm = q.norm();
    if (!(norm > 0)) fail(ErrorCode::format, "tum: zero quaternion on line " + std::to_string(line_no));
    if (warnings && std::abs(norm - 1.0) > 1e-3) {
      *warnings << "warning: tum line " << line_no << ": quaternion norm " << norm
                << " renormalized\n";
    }
    if (!traj.empty() && !(v[0] > traj.entries.back().timestamp)) {
      fail(ErrorCode::format, "tum: non-increasing timestamp on line " + std::to_string(line_no));
    }
    traj.entries.push_back(
        {v[0], Posed(q.normalized(), Eigen::Vector3d(v[1], v[2], v[3]), PoseConvention::world_from_camera)});
  }
  if (traj.empty()) fail(ErrorCode::format, "tum: empty trajectory");
  return traj;
}

Trajectory read_tum(const std::string& path, std::ostream* warnings) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open " + path);
  return parse_tum(in, warnings);
}

std::string format_tum(const Trajectory& traj) {
  std::string out;
  char buf[64];
  for (const auto& e : traj.entries) {
    const Posed p = to_convention(e.pose, PoseConvention::world_from_camera);
    std::snprintf(buf, sizeof(buf), "%.9f", e.timestamp);
    out += buf;
    const double vals[7] = {p.translation.x(), p.translation.y(), p.translation.z(), p.rotation.x(),
                            p.rotation.y(),    p.rotation.z(),    p.rotation.w()};
    for (double x : vals) {
      std::snprintf(buf, sizeof(buf), " %.9g", x == 0.0 ? 0.0 : x);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void write_tum(const std::string& path, const Trajectory& traj) { write_file(path, format_tum(traj)); }

Eigen::ArrayXXd decode_pfm(std::string_view bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  };
  auto token = [&]() -> std::string {
    skip_space();
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) fail(ErrorCode::format, "pfm: truncated header");
    return std::string(bytes.substr(start, pos - start));
  };

  const std::string magic = token();
  if (magic == "PF") fail(ErrorCode::format, "pfm: color PF variant is unsupported");
  if (magic != "Pf") fail(ErrorCode::format, "pfm: bad header");
  int width = 0, height = 0;
  double scale = 0;
  try {
    width = std::stoi(token());
    height = std::stoi(token());
    scale = std::stod(token());
  } catch (const std::logic_error&) {
    fail(ErrorCode::format, "pfm: bad header");
  }
  if (width < 1 || height < 1 || scale == 0 || !std::isfinite(scale)) {
    fail(ErrorCode::format, "pfm: bad header");
  }
  // Exactly one whitespace byte separates the header from the raster.
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    fail(ErrorCode::format, "pfm: truncated header");
  }
  ++pos;
  const std::size_t expected = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 4;
  if (bytes.size() - pos < expected) fail(ErrorCode::format, "pfm: truncated raster");
  if (bytes.size() - pos > expected) fail(ErrorCode::format, "pfm: trailing bytes after raster");

  const bool little_endian = scale < 0;
  Eigen::ArrayXXd img(height, width);
  for (int row = 0; row < height; ++row) {
    for (int col = 0; col < width; ++col) {
      const std::size_t o = pos + 4 * (static_cast<std::size_t>(row) * width + col);
      std::uint32_t u = 0;
      for (int i = 0; i < 4; ++i) {
        const auto b = static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[o + static_cast<std::size_t>(i)]));
        u |= little_endian ? b << (8 * i) : b << (8 * (3 - i));
      }
      img(height - 1 - row, col) = bits_float(u);
    }
  }
  return img;
}

Eigen::ArrayXXd read_pfm(const std::string& path) { return decode_pfm(read_file(path)); }

namespace {

template <typename Fn>
void for_each_json_line(std::istream& in, const char* what, Fn&& fn) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::format, std::string(what) + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<FrameStats> parse_frame_stats_jsonl(std::istream& in) {
  std::vector<FrameStats> out;
  for_each_json_line(in, "frame stats", [&](const nlohmann::json& j) {
    FrameStats s;
    s.frame = j.at("frame").get<int>();
    s.keypoint_count = j.at("keypoint_count").get<int>();
    s.low_texture_ratio = j.at("low_texture_ratio").get<double>();
    s.dynamic_ratio = j.at("dynamic_ratio").get<double>();
    s.flow_mag = j.at("flow_mag").get<double>();
    s.fb_err_ratio = j.at("fb_err_ratio").get<double>();
    out.push_back(s);
  });
  return out;
}

std::vector<FrameStats> read_frame_stats_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open " + path);
  return parse_frame_stats_jsonl(in);
}

std::vector<ba::Track> parse_tracks_jsonl(std::istream& in) {
  std::vector<ba::Track> out;
  for_each_json_line(in, "tracks", [&](const nlohmann::json& j) {
    ba::Track t;
    t.id = j.at("id").get<int>();
    for (const auto& o : j.at("obs")) {
      t.observations.push_back({o.at("frame").get<int>(), o.at("u").get<double>(), o.at("v").get<double>()});
    }
    out.push_back(std::move(t));
  });
  return out;
}

std::vector<ba::Track> read_tracks_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open " + path);
  return parse_tracks_jsonl(in);
}

}  // namespace geoworld::io
