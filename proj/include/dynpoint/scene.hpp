#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dynpoint/geometry.hpp"
#include "dynpoint/random.hpp"

namespace dynpoint {

// Synthetic dynamic scenes. World frame is y-up; cameras follow the pinhole
// convention x right, y down, z forward. Content: a sinusoidal height-field
// ground, an enclosing dome, and rigid spheres/boxes translating at constant
// velocity. Everything is ray-cast analytically (the ground by bracketed
// bisection), so depths and correspondences carry no interpolation error.

enum class CameraPath { kOrbit, kLinear, kRandomSmooth };

inline std::string_view to_string(CameraPath p) {
  switch (p) {
    case CameraPath::kOrbit: return "orbit";
    case CameraPath::kLinear: return "linear";
    case CameraPath::kRandomSmooth: return "random-smooth";
  }
  return "orbit";
}

inline CameraPath camera_path_from_string(std::string_view s) {
  if (s == "orbit") return CameraPath::kOrbit;
  if (s == "linear") return CameraPath::kLinear;
  if (s == "random-smooth") return CameraPath::kRandomSmooth;
  throw ContractViolation("unknown camera path: " + std::string(s));
}

struct SceneConfig {
  int frame_count = 8;
  int height = 48;
  int width = 64;
  int object_count = 2;
  CameraPath camera_path = CameraPath::kOrbit;
  double motion_magnitude = 0.1;  // object displacement per frame (scene units)
  std::uint64_t seed = 0;
  double object_scale = 1.0;  // multiplies the sampled object radii
  int query_count = 64;
  // Heading override for every object; magnitude is still motion_magnitude.
  std::optional<Vector3d> object_direction;

  void validate() const {
    require(frame_count >= 2, "scene: frame_count must be >= 2");
    require(height >= 8 && width >= 8, "scene: resolution must be at least 8x8");
    require(object_count >= 0, "scene: object_count must be >= 0");
    require(std::isfinite(motion_magnitude) && motion_magnitude >= 0.0,
            "scene: motion_magnitude must be >= 0");
    require(std::isfinite(object_scale) && object_scale > 0.0, "scene: object_scale must be > 0");
    require(query_count >= 0, "scene: query_count must be >= 0");
    if (object_direction)
      require(object_direction->allFinite() && object_direction->norm() > 0.0,
              "scene: object_direction must be a nonzero vector");
  }
};

enum class ShapeKind { kSphere, kBox };

struct SceneObject {
  ShapeKind shape = ShapeKind::kSphere;
  Vector3d half_extents = Vector3d::Constant(0.5);  // sphere radius in x()
  Matrix3d orientation = Matrix3d::Identity();      // local-to-world
  Vector3d start_center = Vector3d::Zero();
  Vector3d velocity = Vector3d::Zero();  // world units per frame

  Vector3d center_at(double t) const { return start_center + t * velocity; }
  bool is_moving() const { return velocity.squaredNorm() > 0.0; }
};

struct Terrain {
  double base = -1.0;
  double amplitude = 0.12;
  double freq_x = 0.9;
  double freq_z = 0.7;
  double phase_x = 0.0;
  double phase_z = 0.0;

  double height(double x, double z) const {
    return base + amplitude * std::sin(freq_x * x + phase_x) * std::cos(freq_z * z + phase_z);
  }
};

/// Surface ids stored per pixel: objects are >= 0.
inline constexpr int kSurfaceNone = -3;
inline constexpr int kSurfaceDome = -2;
inline constexpr int kSurfaceGround = -1;

struct RayHit {
  double t = std::numeric_limits<double>::infinity();
  int surface = kSurfaceNone;
  bool hit() const { return surface != kSurfaceNone; }
};

struct SceneFrame {
  DepthMap depth;
  Intrinsics intrinsics;
  Pose pose;       // world-to-camera
  Mask dynamic;    // pixel shows an object with nonzero motion
  Grid<int> surface;
};

struct TrackQuery {
  int frame = 0;
  int x = 0;
  int y = 0;
  friend bool operator==(const TrackQuery&, const TrackQuery&) = default;
};

struct TrackPoint {
  Vector3d world = Vector3d::Zero();
  Vector3d camera = Vector3d::Zero();
  Vector2d pixel = Vector2d::Zero();
  bool visible = false;
};

struct TrackSet {
  std::vector<TrackQuery> queries;
  std::vector<std::vector<TrackPoint>> points;  // [query][frame]
  std::vector<std::uint8_t> query_dynamic;      // query starts on a moving object
};

/// Absolute tolerance of the z-buffer visibility test (scene units).
inline constexpr double kVisibilityTolerance = 1e-6;

class SceneSequence {
 public:
  SceneConfig config;
  std::vector<SceneFrame> frames;
  std::vector<SceneObject> objects;
  Terrain terrain;
  double dome_radius = 14.0;
  TrackSet tracks;

  int frame_count() const { return static_cast<int>(frames.size()); }
  int width() const { return config.width; }
  int height() const { return config.height; }

  /// World-space ray through a (sub)pixel of a frame.
  void pixel_ray(int frame, const Vector2d& pixel, Vector3d& origin, Vector3d& dir) const {
    const SceneFrame& f = frames.at(static_cast<std::size_t>(frame));
    const Vector3d cam_dir = f.intrinsics.unproject(pixel.x(), pixel.y(), 1.0);
    const Matrix3d r_c2w = f.pose.rotation.transpose();
    origin = f.pose.center();
    dir = r_c2w * cam_dir;  // camera-z component of dir is exactly 1 in camera frame
  }

  /// Nearest surface along origin + t·dir at time `time` (t > 0).
  RayHit raycast(const Vector3d& origin, const Vector3d& dir, double time) const {
    RayHit best;
    const auto consider = [&](double t, int id) {
      if (t > 1e-9 && t < best.t) {
        best.t = t;
        best.surface = id;
      }
    };
    // Dome, seen from the inside: larger root of |o + t d|² = R².
    {
      const double a = dir.squaredNorm();
      const double b = 2.0 * origin.dot(dir);
      const double c = origin.squaredNorm() - dome_radius * dome_radius;
      const double disc = b * b - 4.0 * a * c;
      if (disc >= 0.0) consider((-b + std::sqrt(disc)) / (2.0 * a), kSurfaceDome);
    }
    for (std::size_t k = 0; k < objects.size(); ++k) {
      const double t = intersect_object(objects[k], origin, dir, time);
      consider(t, static_cast<int>(k));
    }
    const double tg = intersect_ground(origin, dir, best.t);
    consider(tg, kSurfaceGround);
    return best;
  }

  /// Ray-cast a (sub)pixel of `frame`; returns camera-z depth (inf if nothing hit).
  RayHit render_pixel(int frame, const Vector2d& pixel, double& depth) const {
    Vector3d o, d;
    pixel_ray(frame, pixel, o, d);
    const RayHit h = raycast(o, d, frame);
    depth = h.hit() ? h.t : std::numeric_limits<double>::infinity();  // camera-z of dir is 1
    return h;
  }

  /// Point given in camera `frame` coordinates is the nearest surface along its ray.
  bool visible_in(int frame, const Vector3d& cam_point) const {
    const SceneFrame& f = frames.at(static_cast<std::size_t>(frame));
    if (!(cam_point.z() > kProjectionEpsilon)) return false;
    const Vector2d px = f.intrinsics.project(cam_point);
    if (!(px.x() >= -0.5 && px.x() < width() - 0.5 && px.y() >= -0.5 && px.y() < height() - 0.5))
      return false;
    double depth = 0.0;
    render_pixel(frame, px, depth);
    return std::abs(depth - cam_point.z()) <= kVisibilityTolerance;
  }

  /// World displacement of a surface's material between two times.
  Vector3d displacement(int surface, int from, int to) const {
    if (surface < 0) return Vector3d::Zero();
    const SceneObject& o = objects.at(static_cast<std::size_t>(surface));
    return o.center_at(to) - o.center_at(from);
  }

  bool surface_moving(int surface) const {
    return surface >= 0 && objects.at(static_cast<std::size_t>(surface)).is_moving();
  }

 private:
  static double intersect_object(const SceneObject& obj, const Vector3d& origin, const Vector3d& dir,
                                 double time) {
    const Vector3d c = obj.center_at(time);
    if (obj.shape == ShapeKind::kSphere) {
      const double r = obj.half_extents.x();
      const Vector3d oc = origin - c;
      const double a = dir.squaredNorm();
      const double b = 2.0 * oc.dot(dir);
      const double cc = oc.squaredNorm() - r * r;
      const double disc = b * b - 4.0 * a * cc;
      if (disc < 0.0) return std::numeric_limits<double>::infinity();
      const double sq = std::sqrt(disc);
      const double t0 = (-b - sq) / (2.0 * a);
      if (t0 > 1e-9) return t0;
      return std::numeric_limits<double>::infinity();  // cameras never start inside objects
    }
    const Vector3d lo = obj.orientation.transpose() * (origin - c);
    const Vector3d ld = obj.orientation.transpose() * dir;
    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      const double h = obj.half_extents[a];
      if (std::abs(ld[a]) < 1e-15) {
        if (lo[a] < -h || lo[a] > h) return std::numeric_limits<double>::infinity();
        continue;
      }
      double t1 = (-h - lo[a]) / ld[a];
      double t2 = (h - lo[a]) / ld[a];
      if (t1 > t2) std::swap(t1, t2);
      tmin = std::max(tmin, t1);
      tmax = std::min(tmax, t2);
    }
    if (tmax < tmin || tmin <= 1e-9) return std::numeric_limits<double>::infinity();
    return tmin;
  }

  double ground_gap(const Vector3d& origin, const Vector3d& dir, double t) const {
    const Vector3d p = origin + t * dir;
    return p.y() - terrain.height(p.x(), p.z());
  }

  /// First crossing of the height field before `t_limit`.
  double intersect_ground(const Vector3d& origin, const Vector3d& dir, double t_limit) const {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    const double top = terrain.base + std::abs(terrain.amplitude);
    const double bottom = terrain.base - std::abs(terrain.amplitude);
    if (dir.y() >= 0.0 && origin.y() >= top) return kInf;
    double t_enter = 0.0;
    if (origin.y() > top) t_enter = (top - origin.y()) / dir.y();
    double t_exit = t_limit;
    if (dir.y() < 0.0) t_exit = std::min(t_exit, (bottom - origin.y()) / dir.y() + 1e-9);
    if (!(t_enter < t_exit) || !std::isfinite(t_exit)) return kInf;
    if (ground_gap(origin, dir, t_enter) <= 0.0) return t_enter > 1e-9 ? t_enter : kInf;
    constexpr double kStep = 0.02;
    double t0 = t_enter;
    while (t0 < t_exit) {
      const double t1 = std::min(t0 + kStep, t_exit);
      if (ground_gap(origin, dir, t1) <= 0.0) {
        double lo = t0, hi = t1;
        for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
          const double mid = 0.5 * (lo + hi);
          if (ground_gap(origin, dir, mid) > 0.0) lo = mid;
          else hi = mid;
        }
        return 0.5 * (lo + hi);
      }
      t0 = t1;
    }
    return kInf;
  }
};

namespace detail {

inline Pose look_at(const Vector3d& eye, const Vector3d& target) {
  const Vector3d up(0.0, 1.0, 0.0);
  const Vector3d z = (target - eye).normalized();
  const Vector3d y = (-(up - up.dot(z) * z)).normalized();
  const Vector3d x = y.cross(z);
  Matrix3d r_c2w;
  r_c2w.col(0) = x;
  r_c2w.col(1) = y;
  r_c2w.col(2) = z;
  Pose p;
  p.rotation = r_c2w.transpose();
  p.translation = -(p.rotation * eye);
  return p;
}

enum StreamTag : std::uint64_t {
  kTagLayout = 1,
  kTagObjects = 2,
  kTagCamera = 3,
  kTagQueries = 4,
};

inline std::vector<Pose> camera_trajectory(const SceneConfig& cfg) {
  CounterRng rng(CounterRng::stream_key(cfg.seed, kTagCamera));
  const Vector3d target(0.0, -0.5, 0.0);
  std::vector<Pose> poses;
  poses.reserve(static_cast<std::size_t>(cfg.frame_count));
  const double theta0 = rng.uniform(-0.6, 0.6);
  const double radius = rng.uniform(5.0, 6.0);
  const double height = rng.uniform(0.6, 1.2);
  const double omega = rng.uniform(0.03, 0.05) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  switch (cfg.camera_path) {
    case CameraPath::kOrbit:
      for (int t = 0; t < cfg.frame_count; ++t) {
        const double th = theta0 + omega * t;
        poses.push_back(look_at({radius * std::sin(th), height, radius * std::cos(th)}, target));
      }
      break;
    case CameraPath::kLinear: {
      const Vector3d eye0(radius * std::sin(theta0), height, radius * std::cos(theta0));
      const Pose p0 = look_at(eye0, target);
      const Vector3d right = p0.rotation.row(0).transpose();
      const double speed = rng.uniform(0.05, 0.1) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
      for (int t = 0; t < cfg.frame_count; ++t) {
        Pose p = p0;
        const Vector3d eye = eye0 + speed * t * right;
        p.translation = -(p.rotation * eye);
        poses.push_back(p);
      }
      break;
    }
    case CameraPath::kRandomSmooth: {
      std::array<double, 6> amp{}, freq{}, phase{};
      for (int k = 0; k < 6; ++k) {
        amp[k] = rng.uniform(0.05, 0.25);
        freq[k] = rng.uniform(0.1, 0.4);
        phase[k] = rng.uniform(0.0, 6.283185307179586);
      }
      for (int t = 0; t < cfg.frame_count; ++t) {
        const double th = theta0 + omega * t;
        Vector3d eye(radius * std::sin(th), height, radius * std::cos(th));
        Vector3d tgt = target;
        for (int a = 0; a < 3; ++a) {
          eye[a] += amp[a] * std::sin(freq[a] * t + phase[a]);
          tgt[a] += amp[3 + a] * std::sin(freq[3 + a] * t + phase[3 + a]);
        }
        poses.push_back(look_at(eye, tgt));
      }
      break;
    }
  }
  return poses;
}

inline Intrinsics default_intrinsics(int width, int height) {
  const double f = 0.9 * width;
  return {f, f, 0.5 * (width - 1), 0.5 * (height - 1)};
}

}  // namespace detail

/// Camera-frame point of pixel (x, y) of `frame`, from the rendered depth.
inline Vector3d pixel_point(const SceneSequence& s, int frame, int x, int y) {
  const SceneFrame& f = s.frames.at(static_cast<std::size_t>(frame));
  return f.intrinsics.unproject(x, y, f.depth.depth(y, x));
}

/// Frame j's depth moved into camera i by camera motion only.
inline Pointmap gt_rigid_pointmap(const SceneSequence& s, int i, int j) {
  const SceneFrame& fi = s.frames.at(static_cast<std::size_t>(i));
  const SceneFrame& fj = s.frames.at(static_cast<std::size_t>(j));
  return transform_pointmap(unproject(fj.depth, fj.intrinsics), fj.pose, fi.pose);
}

/// Indexed by pixels of frame j; each value is the camera-i
/// position at time i of the scene point seen at that pixel at time j.
/// Correspondences not visible in frame i are invalid.
inline Pointmap gt_pointmap_matching(const SceneSequence& s, int i, int j) {
  const SceneFrame& fi = s.frames.at(static_cast<std::size_t>(i));
  const SceneFrame& fj = s.frames.at(static_cast<std::size_t>(j));
  const Pose rel = relative_pose(fj.pose, fi.pose);
  Pointmap out(s.width(), s.height());
  for (int y = 0; y < s.height(); ++y) {
    for (int x = 0; x < s.width(); ++x) {
      if (!fj.depth.valid(y, x)) continue;
      const int surface = fj.surface(y, x);
      Vector3d p = rel.apply(fj.intrinsics.unproject(x, y, fj.depth.depth(y, x)));
      if (s.surface_moving(surface) && i != j) p += fi.pose.rotation * s.displacement(surface, j, i);
      if (i != j && !s.visible_in(i, p)) continue;
      out.points(y, x) = p;
      out.valid(y, x) = 1;
    }
  }
  return out;
}

/// Deterministic scene generation; identical (cfg) give bit-identical output.
inline SceneSequence generate_scene(const SceneConfig& cfg) {
  cfg.validate();
  SceneSequence s;
  s.config = cfg;

  CounterRng layout(CounterRng::stream_key(cfg.seed, detail::kTagLayout));
  s.terrain.amplitude = layout.uniform(0.06, 0.15);
  s.terrain.freq_x = layout.uniform(0.6, 1.2);
  s.terrain.freq_z = layout.uniform(0.6, 1.2);
  s.terrain.phase_x = layout.uniform(0.0, 6.283185307179586);
  s.terrain.phase_z = layout.uniform(0.0, 6.283185307179586);

  CounterRng orng(CounterRng::stream_key(cfg.seed, detail::kTagObjects));
  for (int k = 0; k < cfg.object_count; ++k) {
    SceneObject o;
    o.shape = orng.uniform() < 0.5 ? ShapeKind::kSphere : ShapeKind::kBox;
    const double r = orng.uniform(0.35, 0.6) * cfg.object_scale;
    if (o.shape == ShapeKind::kSphere) {
      o.half_extents = Vector3d::Constant(r);
    } else {
      o.half_extents = Vector3d(r, r * orng.uniform(0.7, 1.0), r * orng.uniform(0.7, 1.0));
      o.orientation = Eigen::AngleAxisd(orng.uniform(0.0, 3.141592653589793), Vector3d::UnitY())
                          .toRotationMatrix();
    }
    const double ang = orng.uniform(0.0, 6.283185307179586);
    const double rad = std::sqrt(orng.uniform()) * 1.2;
    const double lift = o.shape == ShapeKind::kSphere ? r : o.half_extents.y();
    o.start_center = Vector3d(rad * std::cos(ang), s.terrain.base + s.terrain.amplitude + lift + 0.05,
                              rad * std::sin(ang));
    const double heading = orng.uniform(0.0, 6.283185307179586);
    Vector3d dir = cfg.object_direction ? cfg.object_direction->normalized()
                                        : Vector3d(std::cos(heading), 0.0, std::sin(heading));
    o.velocity = cfg.motion_magnitude * dir;
    s.objects.push_back(o);
  }

  const std::vector<Pose> poses = detail::camera_trajectory(cfg);
  const Intrinsics k = detail::default_intrinsics(cfg.width, cfg.height);
  s.frames.resize(static_cast<std::size_t>(cfg.frame_count));
  for (int t = 0; t < cfg.frame_count; ++t) {
    SceneFrame& f = s.frames[static_cast<std::size_t>(t)];
    f.intrinsics = k;
    f.pose = poses[static_cast<std::size_t>(t)];
    f.depth = DepthMap(cfg.width, cfg.height);
    f.dynamic = Mask(cfg.width, cfg.height, 0);
    f.surface = Grid<int>(cfg.width, cfg.height, kSurfaceNone);
  }
  for (int t = 0; t < cfg.frame_count; ++t) {
    SceneFrame& f = s.frames[static_cast<std::size_t>(t)];
    for (int y = 0; y < cfg.height; ++y) {
      for (int x = 0; x < cfg.width; ++x) {
        double depth = 0.0;
        const RayHit h = s.render_pixel(t, Vector2d(x, y), depth);
        if (!h.hit()) continue;
        f.depth.depth(y, x) = depth;
        f.depth.valid(y, x) = 1;
        f.surface(y, x) = h.surface;
        f.dynamic(y, x) = s.surface_moving(h.surface) ? 1 : 0;
      }
    }
  }

  // Queries on frame 0, half on moving surfaces when there are any.
  CounterRng qrng(CounterRng::stream_key(cfg.seed, detail::kTagQueries));
  const SceneFrame& f0 = s.frames.front();
  std::vector<TrackQuery> dynamic_px, static_px;
  for (int y = 0; y < cfg.height; ++y)
    for (int x = 0; x < cfg.width; ++x)
      if (f0.depth.valid(y, x)) (f0.dynamic(y, x) ? dynamic_px : static_px).push_back({0, x, y});
  const auto draw = [&](std::vector<TrackQuery>& pool, int n) {
    for (int q = 0; q < n && !pool.empty(); ++q) {
      const std::size_t idx = qrng.below(pool.size());
      s.tracks.queries.push_back(pool[idx]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(idx));
    }
  };
  const int n_dyn = std::min<int>(cfg.query_count / 2, static_cast<int>(dynamic_px.size()));
  draw(dynamic_px, n_dyn);
  draw(static_px, cfg.query_count - n_dyn);

  for (const TrackQuery& q : s.tracks.queries) {
    const SceneFrame& fq = s.frames[static_cast<std::size_t>(q.frame)];
    const int surface = fq.surface(q.y, q.x);
    const Vector3d world0 = fq.pose.inverse().apply(pixel_point(s, q.frame, q.x, q.y));
    std::vector<TrackPoint> row;
    for (int t = 0; t < cfg.frame_count; ++t) {
      const SceneFrame& ft = s.frames[static_cast<std::size_t>(t)];
      TrackPoint tp;
      tp.world = world0 + s.displacement(surface, q.frame, t);
      tp.camera = ft.pose.apply(tp.world);
      tp.pixel = tp.camera.z() > kProjectionEpsilon ? ft.intrinsics.project(tp.camera) : Vector2d::Zero();
      tp.visible = t == q.frame || s.visible_in(t, tp.camera);
      row.push_back(tp);
    }
    s.tracks.points.push_back(std::move(row));
    s.tracks.query_dynamic.push_back(s.surface_moving(surface) ? 1 : 0);
  }
  return s;
}

/// Fraction of valid pixels labelled dynamic, over all frames.
inline double dynamic_fraction(const SceneSequence& s) {
  std::size_t dyn = 0, valid = 0;
  for (const SceneFrame& f : s.frames) {
    dyn += count_set(f.dynamic);
    valid += count_set(f.depth.valid);
  }
  return valid == 0 ? 0.0 : static_cast<double>(dyn) / static_cast<double>(valid);
}

}  // namespace dynpoint
