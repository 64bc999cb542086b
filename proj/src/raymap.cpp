#include "geoworld/raymap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "geoworld/parallel.hpp"

namespace geoworld {

namespace {

double signed_log1p(double v) { return std::copysign(std::log1p(std::abs(v)), v); }

// Largest |x| with expm1(x) finite.
const double kMaxLogMagnitude = std::log(std::numeric_limits<double>::max());

}  // namespace

Eigen::Vector3d encode_translation(const Eigen::Vector3d& t, const ClipScale& scale,
                                   const RayEncodingConfig& cfg) {
  scale.validate();
  cfg.validate();
  if (!t.allFinite()) fail(ErrorCode::invalid_argument, "encode_translation: non-finite input");
  const Eigen::Vector3d scaled = t / scale.max_disparity * cfg.s_ray;
  return scaled.unaryExpr(&signed_log1p);
}

Eigen::Vector3d decode_translation(const Eigen::Vector3d& t_log, const RayEncodingConfig& cfg) {
  cfg.validate();
  if (!t_log.allFinite()) fail(ErrorCode::invalid_argument, "decode_translation: non-finite input");
  if (t_log.cwiseAbs().maxCoeff() > kMaxLogMagnitude) {
    fail(ErrorCode::range, "decode_translation: |t_log| exceeds the representable exponent");
  }
  Eigen::Vector3d out;
  for (int i = 0; i < 3; ++i) {
    out[i] = std::copysign(std::expm1(std::abs(t_log[i])), t_log[i]) / cfg.s_ray;
  }
  return out;
}

Raymap::Raymap(int t, int h, int w) : frames(t), height(h), width(w) {
  if (t < 1 || h < 1 || w < 1) fail(ErrorCode::shape_mismatch, "raymap dimensions must be >= 1");
  values.setZero(static_cast<Eigen::Index>(t) * kChannels * h * w);
}

Eigen::Vector3d Raymap::direction(int t, int y, int x) const {
  return {(*this)(t, 0, y, x), (*this)(t, 1, y, x), (*this)(t, 2, y, x)};
}

Eigen::Vector3d Raymap::origin(int t, int y, int x) const {
  return {(*this)(t, 3, y, x), (*this)(t, 4, y, x), (*this)(t, 5, y, x)};
}

void Raymap::set_origin(int t, int y, int x, const Eigen::Vector3d& o) {
  for (int c = 0; c < 3; ++c) (*this)(t, 3 + c, y, x) = o[c];
}

Raymap build_raymap(std::span<const Posed> extrinsics, const Intrinsicsd& K,
                    const ClipScale& scale, const RayEncodingConfig& cfg) {
  K.validate();
  scale.validate();
  cfg.validate();
  if (extrinsics.empty()) fail(ErrorCode::invalid_argument, "build_raymap: empty trajectory");
  for (const auto& e : extrinsics) {
    if (e.convention != PoseConvention::camera_from_world) {
      fail(ErrorCode::convention_mismatch, "build_raymap: expects camera_from_world extrinsics");
    }
  }

  Raymap r(static_cast<int>(extrinsics.size()), K.height, K.width);
  parallel_for(extrinsics.size(), [&](std::size_t ti) {
    const int t = static_cast<int>(ti);
    const Eigen::Matrix3d world_from_camera = extrinsics[ti].rotation.conjugate().toRotationMatrix();
    const Eigen::Vector3d origin =
        encode_translation(extrinsics[ti].center(), scale, cfg);
    for (int y = 0; y < K.height; ++y) {
      for (int x = 0; x < K.width; ++x) {
        const Eigen::Vector3d cam((x + 0.5 - K.cx) / K.fx, (y + 0.5 - K.cy) / K.fy, 1.0);
        const Eigen::Vector3d d = world_from_camera * cam;
        for (int c = 0; c < 3; ++c) r(t, c, y, x) = d[c];
        r.set_origin(t, y, x, origin);
      }
    }
  });
  return r;
}

Raymap decode_raymap_origins(const Raymap& r, const RayEncodingConfig& cfg) {
  Raymap out = r;
  parallel_for(static_cast<std::size_t>(r.frames), [&](std::size_t ti) {
    const int t = static_cast<int>(ti);
    for (int y = 0; y < r.height; ++y) {
      for (int x = 0; x < r.width; ++x) out.set_origin(t, y, x, decode_translation(r.origin(t, y, x), cfg));
    }
  });
  return out;
}

RayFrameAxes estimate_frame_axes(const Raymap& r, int t) {
  const double n = static_cast<double>(r.height) * r.width;
  Eigen::Vector3d origin_sum = Eigen::Vector3d::Zero();
  Eigen::Vector3d end_sum = Eigen::Vector3d::Zero();
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      const Eigen::Vector3d o = r.origin(t, y, x);
      origin_sum += o;
      end_sum += o + r.direction(t, y, x);
    }
  }
  Eigen::Vector3d last_col = Eigen::Vector3d::Zero();
  Eigen::Vector3d first_col = Eigen::Vector3d::Zero();
  for (int y = 0; y < r.height; ++y) {
    last_col += r.direction(t, y, r.width - 1);
    first_col += r.direction(t, y, 0);
  }

  RayFrameAxes a;
  a.center = origin_sum / n;
  a.look_at = end_sum / n;
  const Eigen::Vector3d forward = a.look_at - a.center;
  if (forward.norm() < 1e-9) {
    fail(ErrorCode::degenerate, "raymap_to_camera: frame " + std::to_string(t) +
                                    " has coincident center and look-at point");
  }
  a.z = forward.normalized();
  a.x = ((last_col - first_col) / r.height).normalized();
  a.y = a.z.cross(a.x).normalized();
  a.x = a.y.cross(a.z).normalized();
  if (!a.x.allFinite() || !a.y.allFinite()) {
    fail(ErrorCode::degenerate, "raymap_to_camera: frame " + std::to_string(t) +
                                    " has no horizontal ray spread");
  }
  return a;
}

CameraEstimate raymap_to_camera(const Raymap& r) {
  CameraEstimate out;
  out.extrinsics.resize(static_cast<std::size_t>(r.frames));
  out.intrinsics.resize(static_cast<std::size_t>(r.frames));
  parallel_for(static_cast<std::size_t>(r.frames), [&](std::size_t ti) {
    const RayFrameAxes a = estimate_frame_axes(r, static_cast<int>(ti));
    Eigen::Matrix3d R;
    R << a.x, a.y, a.z;
    const Posed pose(Eigen::Quaterniond(R), a.center, PoseConvention::world_from_camera);
    out.extrinsics[ti] = change_convention(pose);

    Intrinsicsd k;
    k.fx = k.fy = (a.look_at - a.center).norm();
    k.cx = r.width / 2.0;
    k.cy = r.height / 2.0;
    k.width = r.width;
    k.height = r.height;
    out.intrinsics[ti] = k;
  });
  return out;
}

std::vector<Intrinsicsd> recover_intrinsics_lsq(const Raymap& r, std::span<const Posed> extrinsics) {
  if (extrinsics.size() != static_cast<std::size_t>(r.frames)) {
    fail(ErrorCode::shape_mismatch, "recover_intrinsics_lsq: one extrinsic per frame required");
  }
  std::vector<Intrinsicsd> out(extrinsics.size());
  parallel_for(extrinsics.size(), [&](std::size_t ti) {
    const int t = static_cast<int>(ti);
    const Posed e = to_convention(extrinsics[ti], PoseConvention::camera_from_world);
    const Eigen::Matrix3d camera_from_world = e.rotation.toRotationMatrix();
    const Eigen::Index n = static_cast<Eigen::Index>(r.height) * r.width;
    Eigen::ArrayXd a(n), b(n), u(n), v(n);
    Eigen::Index i = 0;
    for (int y = 0; y < r.height; ++y) {
      for (int x = 0; x < r.width; ++x, ++i) {
        const Eigen::Vector3d d = camera_from_world * r.direction(t, y, x);
        a[i] = d.x() / d.z();
        b[i] = d.y() / d.z();
        u[i] = x + 0.5;
        v[i] = y + 0.5;
      }
    }
    // Closed-form 1D least squares: pixel = focal * ratio + principal.
    auto fit = [&](const Eigen::ArrayXd& ratio, const Eigen::ArrayXd& pixel, const char* axis) {
      const double mr = ratio.mean();
      const double mp = pixel.mean();
      const double var = (ratio - mr).square().sum();
      if (!(var > 1e-18 * std::max(1.0, mr * mr) * static_cast<double>(n))) {
        fail(ErrorCode::degenerate, std::string("recover_intrinsics_lsq: constant ") + axis +
                                        " directions in frame " + std::to_string(t));
      }
      const double focal = ((ratio - mr) * (pixel - mp)).sum() / var;
      return std::pair<double, double>{focal, mp - focal * mr};
    };
    const auto [fx, cx] = fit(a, u, "x");
    const auto [fy, cy] = fit(b, v, "y");
    out[ti] = Intrinsicsd{fx, fy, cx, cy, r.width, r.height};
  });
  return out;
}

LatentRaymap::LatentRaymap(int g, int h, int w) : groups(g), height(h), width(w) {
  if (g < 1 || h < 1 || w < 1) fail(ErrorCode::shape_mismatch, "latent raymap dimensions must be >= 1");
  values.setZero(static_cast<Eigen::Index>(g) * kChannels * h * w);
}

Eigen::ArrayXd resize_bilinear(const Eigen::Ref<const Eigen::ArrayXd>& src, int src_h, int src_w,
                               int dst_h, int dst_w) {
  if (src.size() != static_cast<Eigen::Index>(src_h) * src_w) {
    fail(ErrorCode::shape_mismatch, "resize_bilinear: buffer size does not match dimensions");
  }
  // Source coordinate of a destination sample and its two taps.
  struct Tap {
    int lo, hi;
    double w_hi;
  };
  auto taps = [](int dst_n, int src_n) {
    std::vector<Tap> out(static_cast<std::size_t>(dst_n));
    const double ratio = static_cast<double>(src_n) / dst_n;
    for (int i = 0; i < dst_n; ++i) {
      const double s = std::max(0.0, (i + 0.5) * ratio - 0.5);
      const int lo = std::min(static_cast<int>(s), src_n - 1);
      const int hi = std::min(lo + 1, src_n - 1);
      out[static_cast<std::size_t>(i)] = {lo, hi, s - lo};
    }
    return out;
  };
  const auto ty = taps(dst_h, src_h);
  const auto tx = taps(dst_w, src_w);
  Eigen::ArrayXd out(static_cast<Eigen::Index>(dst_h) * dst_w);
  for (int y = 0; y < dst_h; ++y) {
    const Tap& a = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < dst_w; ++x) {
      const Tap& b = tx[static_cast<std::size_t>(x)];
      auto at = [&](int yy, int xx) { return src[static_cast<Eigen::Index>(yy) * src_w + xx]; };
      const double top = (1 - b.w_hi) * at(a.lo, b.lo) + b.w_hi * at(a.lo, b.hi);
      const double bottom = (1 - b.w_hi) * at(a.hi, b.lo) + b.w_hi * at(a.hi, b.hi);
      out[static_cast<Eigen::Index>(y) * dst_w + x] = (1 - a.w_hi) * top + a.w_hi * bottom;
    }
  }
  return out;
}

LatentRaymap rearrange_raymap(const Raymap& r) {
  constexpr int kF = LatentRaymap::kSpatialFactor;
  constexpr int kG = LatentRaymap::kTemporalGroup;
  if (r.height % kF != 0 || r.width % kF != 0) {
    fail(ErrorCode::shape_mismatch, "rearrange_raymap: height and width must be multiples of 8");
  }
  const int h = r.height / kF;
  const int w = r.width / kF;
  const int groups = (r.frames + kG - 1) / kG;
  LatentRaymap l(groups, h, w);
  const Eigen::Index plane = static_cast<Eigen::Index>(r.height) * r.width;
  const Eigen::Index small = static_cast<Eigen::Index>(h) * w;
  for (int t = 0; t < r.frames; ++t) {
    for (int c = 0; c < Raymap::kChannels; ++c) {
      const Eigen::ArrayXd down =
          resize_bilinear(r.values.segment(r.index(t, c, 0, 0), plane), r.height, r.width, h, w);
      const int channel = (t % kG) * Raymap::kChannels + c;
      l.values.segment(l.index(t / kG, channel, 0, 0), small) = down;
    }
  }
  return l;
}

Raymap unrearrange_raymap(const LatentRaymap& l, int frames, int height, int width) {
  constexpr int kF = LatentRaymap::kSpatialFactor;
  constexpr int kG = LatentRaymap::kTemporalGroup;
  if (frames < 1 || (frames + kG - 1) / kG != l.groups || height != l.height * kF ||
      width != l.width * kF) {
    fail(ErrorCode::shape_mismatch, "unrearrange_raymap: target shape inconsistent with latent");
  }
  Raymap r(frames, height, width);
  const Eigen::Index plane = static_cast<Eigen::Index>(height) * width;
  const Eigen::Index small = static_cast<Eigen::Index>(l.height) * l.width;
  for (int t = 0; t < frames; ++t) {
    for (int c = 0; c < Raymap::kChannels; ++c) {
      const int channel = (t % kG) * Raymap::kChannels + c;
      r.values.segment(r.index(t, c, 0, 0), plane) = resize_bilinear(
          l.values.segment(l.index(t / kG, channel, 0, 0), small), l.height, l.width, height, width);
    }
  }
  return r;
}

}  // namespace geoworld
