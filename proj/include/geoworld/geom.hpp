#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "geoworld/error.hpp"

namespace geoworld {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Matrix4 = Eigen::Matrix<Scalar, 4, 4>;

// Eigen's constructor argument order is (w, x, y, z). File formats with a
// different order (TUM is qx qy qz qw) are converted in io.
template <typename Scalar>
using Quaternion = Eigen::Quaternion<Scalar>;

enum class PoseConvention { camera_from_world, world_from_camera };

inline const char* to_string(PoseConvention c) {
  return c == PoseConvention::camera_from_world ? "camera_from_world" : "world_from_camera";
}

inline PoseConvention flipped(PoseConvention c) {
  return c == PoseConvention::camera_from_world ? PoseConvention::world_from_camera
                                                : PoseConvention::camera_from_world;
}

/// Rigid transform x -> R x + t, tagged with the frames it maps between.
template <typename Scalar>
struct Pose {
  Quaternion<Scalar> rotation = Quaternion<Scalar>::Identity();
  Vector3<Scalar> translation = Vector3<Scalar>::Zero();
  PoseConvention convention = PoseConvention::camera_from_world;

  Pose() = default;
  Pose(const Quaternion<Scalar>& q, const Vector3<Scalar>& t,
       PoseConvention conv = PoseConvention::camera_from_world)
      : rotation(q.normalized()), translation(t), convention(conv) {}

  static Pose Identity(PoseConvention conv = PoseConvention::camera_from_world) {
    return Pose(Quaternion<Scalar>::Identity(), Vector3<Scalar>::Zero(), conv);
  }

  static Pose FromMatrix(const Matrix4<Scalar>& m,
                         PoseConvention conv = PoseConvention::camera_from_world) {
    return Pose(Quaternion<Scalar>(Matrix3<Scalar>(m.template topLeftCorner<3, 3>())),
                m.template topRightCorner<3, 1>(), conv);
  }

  Matrix4<Scalar> matrix() const {
    Matrix4<Scalar> m = Matrix4<Scalar>::Identity();
    m.template topLeftCorner<3, 3>() = rotation.toRotationMatrix();
    m.template topRightCorner<3, 1>() = translation;
    return m;
  }

  Vector3<Scalar> operator*(const Vector3<Scalar>& p) const { return rotation * p + translation; }

  /// Camera position in world coordinates, whatever the convention.
  Vector3<Scalar> center() const {
    if (convention == PoseConvention::world_from_camera) return translation;
    return -(rotation.conjugate() * translation);
  }

  template <typename Other>
  Pose<Other> cast() const {
    return Pose<Other>(rotation.template cast<Other>(), translation.template cast<Other>(),
                       convention);
  }
};

using Posed = Pose<double>;

/// a * b: applies b, then a. Both poses must carry the same convention.
template <typename Scalar>
Pose<Scalar> compose(const Pose<Scalar>& a, const Pose<Scalar>& b) {
  if (a.convention != b.convention) {
    fail(ErrorCode::convention_mismatch, std::string("compose: ") + to_string(a.convention) +
                                             " vs " + to_string(b.convention));
  }
  Pose<Scalar> out;
  out.rotation = (a.rotation * b.rotation).normalized();
  out.translation = a.rotation * b.translation + a.translation;
  out.convention = a.convention;
  return out;
}

template <typename Scalar>
Pose<Scalar> operator*(const Pose<Scalar>& a, const Pose<Scalar>& b) {
  return compose(a, b);
}

/// Group inverse. The convention tag is kept so that compose(p, inverse(p))
/// is the identity; use change_convention() to reinterpret a pose.
template <typename Scalar>
Pose<Scalar> inverse(const Pose<Scalar>& p) {
  Pose<Scalar> out;
  out.rotation = p.rotation.conjugate();
  out.translation = -(out.rotation * p.translation);
  out.convention = p.convention;
  return out;
}

/// Same physical camera expressed in the other convention (extrinsics <-> pose).
template <typename Scalar>
Pose<Scalar> change_convention(const Pose<Scalar>& p) {
  Pose<Scalar> out = inverse(p);
  out.convention = flipped(p.convention);
  return out;
}

template <typename Scalar>
Pose<Scalar> to_convention(const Pose<Scalar>& p, PoseConvention target) {
  return p.convention == target ? p : change_convention(p);
}

/// Spherical linear interpolation along the shorter arc.
template <typename Scalar>
Quaternion<Scalar> slerp(const Quaternion<Scalar>& q0, const Quaternion<Scalar>& q1_in, Scalar t) {
  Eigen::Matrix<Scalar, 4, 1> a = q0.coeffs();
  Eigen::Matrix<Scalar, 4, 1> b = q1_in.coeffs();
  Scalar dot = a.dot(b);
  if (dot < Scalar(0)) {
    b = -b;
    dot = -dot;
  }
  dot = std::min(dot, Scalar(1));
  const Scalar theta = std::acos(dot);
  Eigen::Matrix<Scalar, 4, 1> c;
  if (theta < Scalar(1e-8)) {
    c = (Scalar(1) - t) * a + t * b;
  } else {
    const Scalar s = std::sin(theta);
    c = (std::sin((Scalar(1) - t) * theta) / s) * a + (std::sin(t * theta) / s) * b;
  }
  Quaternion<Scalar> q;
  q.coeffs() = c.normalized();
  return q;
}

/// Angle of qa^-1 qb in [0, pi].
template <typename Scalar>
Scalar rotation_geodesic_error(const Quaternion<Scalar>& qa, const Quaternion<Scalar>& qb) {
  const Quaternion<Scalar> d = qa.conjugate() * qb;
  return Scalar(2) * std::atan2(d.vec().norm(), std::abs(d.w()));
}

/// x -> s R x + t.
template <typename Scalar>
struct Sim3 {
  Scalar scale = Scalar(1);
  Quaternion<Scalar> rotation = Quaternion<Scalar>::Identity();
  Vector3<Scalar> translation = Vector3<Scalar>::Zero();

  Vector3<Scalar> operator*(const Vector3<Scalar>& p) const {
    return scale * (rotation * p) + translation;
  }

  Matrix4<Scalar> matrix() const {
    Matrix4<Scalar> m = Matrix4<Scalar>::Identity();
    m.template topLeftCorner<3, 3>() = scale * rotation.toRotationMatrix();
    m.template topRightCorner<3, 1>() = translation;
    return m;
  }

  Sim3 inverse() const {
    Sim3 out;
    out.scale = Scalar(1) / scale;
    out.rotation = rotation.conjugate();
    out.translation = -(out.scale * (out.rotation * translation));
    return out;
  }
};

using Sim3d = Sim3<double>;

/// Applies a similarity to a pose, moving the camera it describes.
template <typename Scalar>
Pose<Scalar> transform_pose(const Sim3<Scalar>& s, const Pose<Scalar>& p) {
  const Pose<Scalar> wfc = to_convention(p, PoseConvention::world_from_camera);
  Pose<Scalar> moved(s.rotation * wfc.rotation, s * wfc.translation,
                     PoseConvention::world_from_camera);
  return to_convention(moved, p.convention);
}

namespace detail {

// Canonical ordering of pairs so the estimate is independent of their labels.
template <typename Scalar>
std::vector<std::size_t> canonical_order(std::span<const Vector3<Scalar>> src,
                                         std::span<const Vector3<Scalar>> dst) {
  std::vector<std::size_t> order(src.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  auto key = [&](std::size_t i) {
    return std::array<Scalar, 6>{src[i].x(), src[i].y(), src[i].z(),
                                 dst[i].x(), dst[i].y(), dst[i].z()};
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  return order;
}

template <typename Scalar>
Sim3<Scalar> umeyama(std::span<const Vector3<Scalar>> src, std::span<const Vector3<Scalar>> dst,
                     bool with_scale) {
  if (src.size() != dst.size()) {
    fail(ErrorCode::shape_mismatch, "umeyama: point lists differ in length");
  }
  const std::size_t n = src.size();
  if (n < 3) fail(ErrorCode::degenerate, "umeyama: fewer than 3 point pairs");

  const auto order = canonical_order(src, dst);
  Vector3<Scalar> mu_src = Vector3<Scalar>::Zero();
  Vector3<Scalar> mu_dst = Vector3<Scalar>::Zero();
  for (std::size_t i : order) {
    mu_src += src[i];
    mu_dst += dst[i];
  }
  mu_src /= Scalar(n);
  mu_dst /= Scalar(n);

  Matrix3<Scalar> sigma = Matrix3<Scalar>::Zero();
  Matrix3<Scalar> src_scatter = Matrix3<Scalar>::Zero();
  Matrix3<Scalar> dst_scatter = Matrix3<Scalar>::Zero();
  Scalar var_src = 0;
  for (std::size_t i : order) {
    const Vector3<Scalar> a = src[i] - mu_src;
    const Vector3<Scalar> b = dst[i] - mu_dst;
    sigma += b * a.transpose();
    src_scatter += a * a.transpose();
    dst_scatter += b * b.transpose();
    var_src += a.squaredNorm();
  }
  sigma /= Scalar(n);
  var_src /= Scalar(n);

  // Both clouds must span at least a plane for the rotation to be unique.
  auto rank_below_two = [](const Matrix3<Scalar>& scatter) {
    Eigen::SelfAdjointEigenSolver<Matrix3<Scalar>> es(scatter, Eigen::EigenvaluesOnly);
    const auto ev = es.eigenvalues();  // ascending
    return !(ev(2) > Scalar(0)) || ev(1) <= Scalar(1e-12) * ev(2);
  };
  if (rank_below_two(src_scatter) || rank_below_two(dst_scatter)) {
    fail(ErrorCode::degenerate, "umeyama: collinear or coincident points");
  }

  Eigen::JacobiSVD<Matrix3<Scalar>> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Matrix3<Scalar>& U = svd.matrixU();
  const Matrix3<Scalar>& V = svd.matrixV();
  Vector3<Scalar> s = Vector3<Scalar>::Ones();
  if (U.determinant() * V.determinant() < Scalar(0)) s(2) = Scalar(-1);

  const Matrix3<Scalar> R = U * s.asDiagonal() * V.transpose();
  Sim3<Scalar> out;
  out.rotation = Quaternion<Scalar>(R).normalized();
  out.scale = with_scale ? svd.singularValues().dot(s) / var_src : Scalar(1);
  out.translation = mu_dst - out.scale * (R * mu_src);
  return out;
}

}  // namespace detail

/// Least-squares similarity with dst ~ s R src + t (Umeyama 1991).
/// Throws ErrorCode::degenerate on fewer than three pairs or collinear clouds.
template <typename Scalar>
Sim3<Scalar> umeyama_sim3(std::span<const Vector3<Scalar>> src,
                          std::span<const Vector3<Scalar>> dst) {
  return detail::umeyama(src, dst, true);
}

/// Rigid variant (scale fixed to one).
template <typename Scalar>
Sim3<Scalar> umeyama_se3(std::span<const Vector3<Scalar>> src,
                         std::span<const Vector3<Scalar>> dst) {
  return detail::umeyama(src, dst, false);
}

inline Sim3d umeyama_sim3(const std::vector<Eigen::Vector3d>& src,
                          const std::vector<Eigen::Vector3d>& dst) {
  return umeyama_sim3<double>(std::span<const Eigen::Vector3d>(src),
                              std::span<const Eigen::Vector3d>(dst));
}

inline Sim3d umeyama_se3(const std::vector<Eigen::Vector3d>& src,
                         const std::vector<Eigen::Vector3d>& dst) {
  return umeyama_se3<double>(std::span<const Eigen::Vector3d>(src),
                             std::span<const Eigen::Vector3d>(dst));
}

/// Pinhole intrinsics in pixels. Pixel (i, j) has its center at (i + 0.5, j + 0.5).
template <typename Scalar>
struct Intrinsics {
  Scalar fx = 1;
  Scalar fy = 1;
  Scalar cx = 0;
  Scalar cy = 0;
  int width = 1;
  int height = 1;

  Matrix3<Scalar> matrix() const {
    Matrix3<Scalar> k = Matrix3<Scalar>::Identity();
    k(0, 0) = fx;
    k(1, 1) = fy;
    k(0, 2) = cx;
    k(1, 2) = cy;
    return k;
  }

  void validate() const {
    if (!(fx > 0) || !(fy > 0) || !std::isfinite(fx) || !std::isfinite(fy) ||
        !std::isfinite(cx) || !std::isfinite(cy)) {
      fail(ErrorCode::invalid_argument, "intrinsics: focal lengths must be positive and finite");
    }
    if (width < 1 || height < 1) {
      fail(ErrorCode::invalid_argument, "intrinsics: width and height must be >= 1");
    }
  }
};

using Intrinsicsd = Intrinsics<double>;

struct TimedPose {
  double timestamp = 0;
  Posed pose;
};

/// Timestamped poses; timestamps strictly increase and share one convention.
struct Trajectory {
  std::vector<TimedPose> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  const TimedPose& operator[](std::size_t i) const { return entries[i]; }
  TimedPose& operator[](std::size_t i) { return entries[i]; }

  void validate() const {
    for (std::size_t i = 1; i < entries.size(); ++i) {
      if (!(entries[i].timestamp > entries[i - 1].timestamp)) {
        fail(ErrorCode::invalid_argument,
             "trajectory: timestamps not strictly increasing at entry " + std::to_string(i));
      }
      if (entries[i].pose.convention != entries[0].pose.convention) {
        fail(ErrorCode::convention_mismatch, "trajectory: mixed pose conventions");
      }
    }
  }

  std::vector<Eigen::Vector3d> centers() const {
    std::vector<Eigen::Vector3d> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.pose.center());
    return out;
  }
};

}  // namespace geoworld
