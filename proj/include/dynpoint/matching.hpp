#pragma once

#include <span>
#include <vector>

#include "dynpoint/geometry.hpp"
#include "dynpoint/scene.hpp"
#include "dynpoint/stats.hpp"

namespace dynpoint {

/// Multiplier on the median residual that separates moving pixels.
inline constexpr double kDynamicThresholdFactor = 3.0;

struct DynamicMask {
  Mask mask;
  double threshold_used = 0.0;  // scene units
  Grid<double> residual;        // ‖x_m − x_rigid‖ on jointly valid pixels, else 0
  Mask domain;                  // jointly valid pixels
};

/// Pixels whose residual ‖x_m − x_rigid‖ exceeds 3× the median residual over
/// jointly valid pixels.
inline DynamicMask dynamic_mask(const Pointmap& matched, const Pointmap& rigid) {
  require(matched.same_shape(rigid), "dynamic_mask: pointmap dimensions differ");
  const int w = matched.width(), h = matched.height();
  DynamicMask out{Mask(w, h, 0), 0.0, Grid<double>(w, h, 0.0), Mask(w, h, 0)};
  std::vector<double> residuals;
  residuals.reserve(matched.size());
  for (std::size_t i = 0; i < matched.size(); ++i) {
    if (!matched.valid[i] || !rigid.valid[i]) continue;
    const double r = (matched.points[i] - rigid.points[i]).norm();
    out.residual[i] = r;
    out.domain[i] = 1;
    residuals.push_back(r);
  }
  if (residuals.empty()) throw EmptyDomainError("dynamic_mask: no jointly valid pixels");
  out.threshold_used = kDynamicThresholdFactor * median(std::move(residuals));
  for (std::size_t i = 0; i < matched.size(); ++i)
    out.mask[i] = out.domain[i] && out.residual[i] > out.threshold_used ? 1 : 0;
  return out;
}

/// F = p(K·X_m): pixel coordinates of matched points in the first view.
inline PixelField matching_to_pixels(const Pointmap& matched, const Intrinsics& k) {
  return project(matched, k);
}

/// Q×T array of 3D track positions with per-entry validity.
struct TrackArray {
  int queries = 0;
  int frames = 0;
  std::vector<Vector3d> points;   // row-major [query][frame]
  std::vector<std::uint8_t> valid;

  TrackArray() = default;
  TrackArray(int q, int t)
      : queries(q), frames(t),
        points(static_cast<std::size_t>(q) * static_cast<std::size_t>(t), Vector3d::Zero()),
        valid(static_cast<std::size_t>(q) * static_cast<std::size_t>(t), 0) {}

  std::size_t index(int q, int t) const {
    return static_cast<std::size_t>(q) * static_cast<std::size_t>(frames) + static_cast<std::size_t>(t);
  }
  Vector3d& at(int q, int t) { return points[index(q, t)]; }
  const Vector3d& at(int q, int t) const { return points[index(q, t)]; }
  bool is_valid(int q, int t) const { return valid[index(q, t)] != 0; }
  void set(int q, int t, const Vector3d& p, bool ok) {
    points[index(q, t)] = p;
    valid[index(q, t)] = ok ? 1 : 0;
  }
};

struct PixelQuery {
  int x = 0;
  int y = 0;
};

/// track[q][t] = matched[t](query_q); every matched map is indexed by
/// keyframe pixels.
inline TrackArray sparsify_tracks(std::span<const Pointmap> matched, std::span<const PixelQuery> queries) {
  const int frames = static_cast<int>(matched.size());
  TrackArray out(static_cast<int>(queries.size()), frames);
  if (queries.empty()) return out;
  require(frames > 0, "sparsify_tracks: no matched pointmaps");
  for (const Pointmap& m : matched)
    require(m.same_shape(matched.front()), "sparsify_tracks: matched pointmaps differ in size");
  const Pointmap& first = matched.front();
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const PixelQuery& p = queries[q];
    require(first.points.contains(p.y, p.x), "sparsify_tracks: query outside keyframe bounds");
    for (int t = 0; t < frames; ++t) {
      const Pointmap& m = matched[static_cast<std::size_t>(t)];
      out.set(static_cast<int>(q), t, m.points(p.y, p.x), m.valid(p.y, p.x) != 0);
    }
  }
  return out;
}

/// Ground-truth camera-space tracks of a scene as a TrackArray.
inline TrackArray camera_tracks(const TrackSet& tracks) {
  const int q = static_cast<int>(tracks.queries.size());
  const int t = q == 0 ? 0 : static_cast<int>(tracks.points.front().size());
  TrackArray out(q, t);
  for (int i = 0; i < q; ++i)
    for (int f = 0; f < t; ++f) {
      const TrackPoint& p = tracks.points[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)];
      out.set(i, f, p.camera, p.visible);
    }
  return out;
}

}  // namespace dynpoint
