#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

#include "dynpoint/errors.hpp"
#include "dynpoint/grid.hpp"

namespace dynpoint {

using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;

/// Points with Z at or below this depth do not project.
inline constexpr double kProjectionEpsilon = 1e-9;

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  void validate() const {
    require(std::isfinite(fx) && std::isfinite(fy) && fx > 0.0 && fy > 0.0,
            "intrinsics: focal lengths must be positive");
    require(std::isfinite(cx) && std::isfinite(cy), "intrinsics: principal point must be finite");
  }

  Vector2d project(const Vector3d& p) const {
    return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
  }
  Vector3d unproject(double x, double y, double depth) const {
    return {(x - cx) / fx * depth, (y - cy) / fy * depth, depth};
  }

  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

/// Rigid transform x ↦ R·x + t. Used both for world-to-camera poses (the
/// default meaning of a frame's `Pose`) and for camera-to-world trajectories.
struct Pose {
  Matrix3d rotation = Matrix3d::Identity();
  Vector3d translation = Vector3d::Zero();

  static Pose identity() { return {}; }

  Vector3d apply(const Vector3d& p) const { return rotation * p + translation; }

  Pose inverse() const {
    Pose out;
    out.rotation = rotation.transpose();
    out.translation = -(out.rotation * translation);
    return out;
  }

  /// Orthonormal with det +1 within `tol`, and finite translation.
  bool is_valid(double tol = 1e-9) const {
    if (!rotation.allFinite() || !translation.allFinite()) return false;
    const double ortho = (rotation.transpose() * rotation - Matrix3d::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
  }

  /// Camera center of a world-to-camera pose.
  Vector3d center() const { return -(rotation.transpose() * translation); }
};

/// (a ∘ b)(x) = a(b(x)).
inline Pose compose_pose(const Pose& a, const Pose& b) {
  Pose out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

inline Pose invert_pose(const Pose& a) { return a.inverse(); }

inline Pose operator*(const Pose& a, const Pose& b) { return compose_pose(a, b); }

inline Matrix3d skew(const Vector3d& v) {
  Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

/// Rodrigues map from exponential coordinates (axis·angle) to a rotation.
inline Matrix3d so3_exp(const Vector3d& omega) {
  const double theta = omega.norm();
  const Matrix3d k = skew(omega);
  if (theta < 1e-8) return Matrix3d::Identity() + k + 0.5 * k * k;
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Matrix3d::Identity() + a * k + b * k * k;
}

inline Vector3d so3_log(const Matrix3d& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.axis() * aa.angle();
}

/// Rotation angle of `r` in radians, in [0, π].
inline double rotation_angle(const Matrix3d& r) {
  const double c = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  return std::acos(c);
}

/// Re-orthonormalize a nearly orthonormal matrix (polar projection).
inline Matrix3d nearest_rotation(const Matrix3d& m) {
  Eigen::JacobiSVD<Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3d d = Matrix3d::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

/// x ↦ s·R·x + t.
struct Similarity {
  double scale = 1.0;
  Matrix3d rotation = Matrix3d::Identity();
  Vector3d translation = Vector3d::Zero();

  Vector3d apply(const Vector3d& p) const { return scale * (rotation * p) + translation; }
};

/// Least-squares similarity (or rigid, without scale) taking `src` onto `dst`.
/// With no spread in `src` the result is the translation between centroids.
inline Similarity umeyama(std::span<const Vector3d> src, std::span<const Vector3d> dst, bool with_scale = true) {
  require(src.size() == dst.size(), "umeyama: point counts differ");
  if (src.empty()) throw EmptyDomainError("umeyama: no points");
  const double n = static_cast<double>(src.size());
  Vector3d mu_s = Vector3d::Zero(), mu_d = Vector3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    mu_s += src[i];
    mu_d += dst[i];
  }
  mu_s /= n;
  mu_d /= n;
  double var_s = 0.0;
  Matrix3d cov = Matrix3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vector3d a = src[i] - mu_s;
    cov += (dst[i] - mu_d) * a.transpose();
    var_s += a.squaredNorm();
  }
  cov /= n;
  var_s /= n;
  Similarity out;
  if (!(var_s > 1e-24)) {
    out.translation = mu_d - mu_s;
    return out;
  }
  Eigen::JacobiSVD<Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3d d = Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  out.rotation = svd.matrixU() * d * svd.matrixV().transpose();
  out.scale = with_scale ? (svd.singularValues().asDiagonal() * d).trace() / var_s : 1.0;
  out.translation = mu_d - out.scale * (out.rotation * mu_s);
  return out;
}

/// Dense H×W field of 3D points with a validity mask. Invalid cells are
/// ignored by every reduction in the library.
struct Pointmap {
  Grid<Vector3d> points;
  Mask valid;

  Pointmap() = default;
  Pointmap(int width, int height)
      : points(width, height, Vector3d::Zero()), valid(width, height, 0) {}

  int width() const { return points.width(); }
  int height() const { return points.height(); }
  std::size_t size() const { return points.size(); }
  bool is_valid(std::size_t i) const { return valid[i] != 0; }

  template <typename U>
  bool same_shape(const Grid<U>& g) const { return points.same_shape(g); }
  bool same_shape(const Pointmap& o) const { return points.same_shape(o.points); }

  /// Every valid cell holds finite coordinates.
  bool check_invariants() const {
    if (!points.same_shape(valid)) return false;
    for (std::size_t i = 0; i < size(); ++i)
      if (valid[i] && !points[i].allFinite()) return false;
    return true;
  }

  Pointmap scaled(double s) const {
    Pointmap out = *this;
    for (auto& p : out.points.values()) p *= s;
    return out;
  }
};

struct DepthMap {
  Grid<double> depth;
  Mask valid;

  DepthMap() = default;
  DepthMap(int width, int height) : depth(width, height, 0.0), valid(width, height, 0) {}

  int width() const { return depth.width(); }
  int height() const { return depth.height(); }

  bool check_invariants() const {
    if (!depth.same_shape(valid)) return false;
    for (std::size_t i = 0; i < depth.size(); ++i)
      if (valid[i] && !(std::isfinite(depth[i]) && depth[i] > 0.0)) return false;
    return true;
  }
};

/// Stores the unconstrained raw value u and exposes C = 1 + exp(u) ≥ 1.
class ConfidenceMap {
 public:
  ConfidenceMap() = default;
  ConfidenceMap(int width, int height, double raw = 0.0) : raw_(width, height, raw) {}

  static ConfidenceMap from_raw(Grid<double> raw) {
    ConfidenceMap c;
    c.raw_ = std::move(raw);
    return c;
  }

  /// Inverse parameterization; C = 1 maps to u = -inf.
  static ConfidenceMap from_confidence(const Grid<double>& conf) {
    Grid<double> raw(conf.width(), conf.height());
    for (std::size_t i = 0; i < conf.size(); ++i) {
      require(conf[i] >= 1.0, "confidence values must be >= 1");
      raw[i] = conf[i] == 1.0 ? -std::numeric_limits<double>::infinity() : std::log(conf[i] - 1.0);
    }
    return from_raw(std::move(raw));
  }

  int width() const { return raw_.width(); }
  int height() const { return raw_.height(); }
  std::size_t size() const { return raw_.size(); }

  double raw(std::size_t i) const { return raw_[i]; }
  double operator[](std::size_t i) const { return 1.0 + std::exp(raw_[i]); }
  double operator()(int y, int x) const { return 1.0 + std::exp(raw_(y, x)); }
  const Grid<double>& raw_grid() const { return raw_; }

  Grid<double> values() const {
    Grid<double> out(width(), height());
    for (std::size_t i = 0; i < size(); ++i) out[i] = (*this)[i];
    return out;
  }

 private:
  Grid<double> raw_;
};

/// Per-pixel 2D coordinates with validity.
struct PixelField {
  Grid<Vector2d> pixels;
  Mask valid;
};

inline Pointmap unproject(const DepthMap& d, const Intrinsics& k) {
  k.validate();
  require(d.depth.same_shape(d.valid), "unproject: depth/validity dimension mismatch");
  Pointmap out(d.width(), d.height());
  for (int y = 0; y < d.height(); ++y) {
    for (int x = 0; x < d.width(); ++x) {
      if (!d.valid(y, x)) continue;
      out.points(y, x) = k.unproject(x, y, d.depth(y, x));
      out.valid(y, x) = 1;
    }
  }
  return out;
}

inline PixelField project(const Pointmap& pm, const Intrinsics& k) {
  k.validate();
  PixelField out{Grid<Vector2d>(pm.width(), pm.height(), Vector2d::Zero()),
                 Mask(pm.width(), pm.height(), 0)};
  for (std::size_t i = 0; i < pm.size(); ++i) {
    const Vector3d& p = pm.points[i];
    if (!pm.valid[i] || !(p.z() > kProjectionEpsilon)) continue;
    out.pixels[i] = k.project(p);
    out.valid[i] = 1;
  }
  return out;
}

/// Relative transform taking camera `src` coordinates to camera `dst`
/// coordinates, for world-to-camera poses.
inline Pose relative_pose(const Pose& src, const Pose& dst) {
  return compose_pose(dst, src.inverse());
}

/// Re-express a pointmap from camera `src` into camera `dst` (world-to-camera
/// poses): x ↦ P_dst · P_src⁻¹ · h(x).
inline Pointmap transform_pointmap(const Pointmap& pm, const Pose& src, const Pose& dst) {
  require(src.is_valid(1e-6) && dst.is_valid(1e-6), "transform_pointmap: invalid pose");
  const Pose rel = relative_pose(src, dst);
  Pointmap out = pm;
  for (std::size_t i = 0; i < pm.size(); ++i)
    if (pm.valid[i]) out.points[i] = rel.apply(pm.points[i]);
  return out;
}

inline DepthMap depth_from_pointmap(const Pointmap& pm) {
  DepthMap d(pm.width(), pm.height());
  for (std::size_t i = 0; i < pm.size(); ++i) {
    if (pm.valid[i] && pm.points[i].z() > 0.0) {
      d.depth[i] = pm.points[i].z();
      d.valid[i] = 1;
    }
  }
  return d;
}

}  // namespace dynpoint
