#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string_view>
#include <vector>

#include "dynpoint/geometry.hpp"
#include "dynpoint/matching.hpp"
#include "dynpoint/stats.hpp"

namespace dynpoint {

enum class DepthAlignment { kNone, kScale, kScaleShift };

inline std::string_view to_string(DepthAlignment a) {
  switch (a) {
    case DepthAlignment::kNone: return "none";
    case DepthAlignment::kScale: return "scale";
    case DepthAlignment::kScaleShift: return "scale_shift";
  }
  return "none";
}

struct DepthEvalReport {
  double abs_rel = 0.0;
  double delta_125 = 0.0;  // percent
  DepthAlignment alignment = DepthAlignment::kScale;
  double scale = 1.0;
  double shift = 0.0;
  std::size_t pixels = 0;
};

namespace detail {

/// Calls f(pred, gt) for pixels valid in both with positive ground truth.
template <typename F>
void for_each_depth_pair(std::span<const DepthMap> pred, std::span<const DepthMap> gt, F&& f) {
  require(pred.size() == gt.size(), "depth metrics: frame counts differ");
  for (std::size_t t = 0; t < pred.size(); ++t) {
    const DepthMap& p = pred[t];
    const DepthMap& g = gt[t];
    require(p.depth.same_shape(g.depth), "depth metrics: resolutions differ");
    for (std::size_t k = 0; k < p.depth.size(); ++k)
      if (p.valid[k] && g.valid[k] && g.depth[k] > 0.0) f(p.depth[k], g.depth[k]);
  }
}

}  // namespace detail

/// Median of gt/pred over the whole sequence.
inline double fit_scale(std::span<const DepthMap> pred, std::span<const DepthMap> gt) {
  std::vector<double> ratios;
  detail::for_each_depth_pair(pred, gt, [&](double p, double g) {
    if (p > 0.0) ratios.push_back(g / p);
  });
  if (ratios.empty()) throw EmptyDomainError("fit_scale: no valid pixels");
  return median(std::move(ratios));
}

/// Least-squares (s, b) of s·pred + b ≈ gt; shift only if pred is constant.
inline std::pair<double, double> fit_scale_shift(std::span<const DepthMap> pred, std::span<const DepthMap> gt) {
  double sp = 0.0, sg = 0.0;
  std::size_t n = 0;
  detail::for_each_depth_pair(pred, gt, [&](double p, double g) {
    sp += p;
    sg += g;
    ++n;
  });
  if (n == 0) throw EmptyDomainError("fit_scale_shift: no valid pixels");
  const double mp = sp / static_cast<double>(n), mg = sg / static_cast<double>(n);
  double spp = 0.0, spg = 0.0;
  detail::for_each_depth_pair(pred, gt, [&](double p, double g) {
    spp += (p - mp) * (p - mp);
    spg += (p - mp) * (g - mg);
  });
  if (!(spp > 1e-24 * static_cast<double>(n) * std::max(1.0, mp * mp))) return {1.0, mg - mp};
  const double s = spg / spp;
  return {s, mg - s * mp};
}

/// abs_rel = mean |d̂−d|/d and δ<1.25 (percent) after a per-sequence fit.
inline DepthEvalReport depth_metrics(std::span<const DepthMap> pred, std::span<const DepthMap> gt,
                                     DepthAlignment alignment) {
  DepthEvalReport r;
  r.alignment = alignment;
  if (alignment == DepthAlignment::kScale) r.scale = fit_scale(pred, gt);
  if (alignment == DepthAlignment::kScaleShift) std::tie(r.scale, r.shift) = fit_scale_shift(pred, gt);
  double rel = 0.0;
  std::size_t inliers = 0;
  detail::for_each_depth_pair(pred, gt, [&](double p, double g) {
    const double d = alignment == DepthAlignment::kNone ? p : r.scale * p + r.shift;
    rel += std::abs(d - g) / g;
    if (d > 0.0 && std::max(d / g, g / d) < 1.25) ++inliers;
    ++r.pixels;
  });
  if (r.pixels == 0) throw EmptyDomainError("depth_metrics: no valid pixels");
  r.abs_rel = rel / static_cast<double>(r.pixels);
  r.delta_125 = 100.0 * static_cast<double>(inliers) / static_cast<double>(r.pixels);
  return r;
}

inline DepthEvalReport depth_metrics(const DepthMap& pred, const DepthMap& gt, DepthAlignment alignment) {
  return depth_metrics(std::span<const DepthMap>(&pred, 1), std::span<const DepthMap>(&gt, 1), alignment);
}

/// Error thresholds as fractions of ground-truth depth.
inline constexpr std::array<double, 5> kApdLevels{0.01, 0.02, 0.04, 0.08, 0.16};

struct TrackEvalReport {
  double apd = 0.0;                        // percent
  std::array<double, 5> accuracy{};        // percent, per level
  int horizon = 0;                         // frames
  double scale = 1.0;                      // applied to predictions
  std::size_t points = 0;                  // visible (query, frame) entries
};

/// Both arrays hold per-frame camera coordinates. Invisible ground truth is
/// skipped; invalid predictions count as misses. Predictions are first scaled
/// by the median of gt_z/pred_z.
inline TrackEvalReport apd(const TrackArray& pred, const TrackArray& gt, bool align_scale = true) {
  require(pred.queries == gt.queries && pred.frames == gt.frames, "apd: track array shapes differ");
  TrackEvalReport r;
  r.horizon = gt.frames;
  std::vector<double> ratios;
  for (int q = 0; q < gt.queries; ++q)
    for (int t = 0; t < gt.frames; ++t) {
      if (!gt.is_valid(q, t)) continue;
      ++r.points;
      if (pred.is_valid(q, t) && pred.at(q, t).z() > 0.0) ratios.push_back(gt.at(q, t).z() / pred.at(q, t).z());
    }
  if (r.points == 0) throw EmptyDomainError("apd: no visible ground-truth points");
  if (align_scale && !ratios.empty()) r.scale = median(std::move(ratios));
  std::array<std::size_t, 5> hits{};
  for (int q = 0; q < gt.queries; ++q)
    for (int t = 0; t < gt.frames; ++t) {
      if (!gt.is_valid(q, t) || !pred.is_valid(q, t)) continue;
      const double err = (r.scale * pred.at(q, t) - gt.at(q, t)).norm();
      const double depth = gt.at(q, t).z();
      for (std::size_t l = 0; l < kApdLevels.size(); ++l)
        if (err < kApdLevels[l] * depth) ++hits[l];
    }
  double sum = 0.0;
  for (std::size_t l = 0; l < kApdLevels.size(); ++l) {
    r.accuracy[l] = 100.0 * static_cast<double>(hits[l]) / static_cast<double>(r.points);
    sum += r.accuracy[l];
  }
  r.apd = sum / static_cast<double>(kApdLevels.size());
  return r;
}

struct PoseEvalReport {
  double ate = 0.0;        // scene units
  double rpe_trans = 0.0;  // scene units
  double rpe_rot = 0.0;    // degrees
  double scale = 1.0;      // similarity fitted to the predicted centers
};

/// Inputs are camera-to-world. ATE: RMSE of camera centers after a
/// similarity fit of prediction onto ground truth (identity scale and
/// rotation, centroid shift only, when either side has no spread). RPE: RMSE
/// over consecutive frames of the relative-motion error, with predicted
/// translations multiplied by the fitted scale.
inline PoseEvalReport trajectory_metrics(std::span<const Pose> pred, std::span<const Pose> gt) {
  require(pred.size() == gt.size(), "trajectory_metrics: length mismatch");
  if (pred.empty()) throw EmptyDomainError("trajectory_metrics: empty trajectory");
  std::vector<Vector3d> pc, gc;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    pc.push_back(pred[k].translation);
    gc.push_back(gt[k].translation);
  }
  const auto spread = [](const std::vector<Vector3d>& pts) {
    Vector3d mu = Vector3d::Zero();
    for (const Vector3d& p : pts) mu += p;
    mu /= static_cast<double>(pts.size());
    double v = 0.0;
    for (const Vector3d& p : pts) v += (p - mu).squaredNorm();
    return v / static_cast<double>(pts.size());
  };
  Similarity sim;
  if (spread(gc) > 1e-24 && spread(pc) > 1e-24) {
    sim = umeyama(pc, gc, true);
  } else {
    Vector3d mp = Vector3d::Zero(), mg = Vector3d::Zero();
    for (std::size_t k = 0; k < pc.size(); ++k) {
      mp += pc[k];
      mg += gc[k];
    }
    sim.translation = (mg - mp) / static_cast<double>(pc.size());
  }
  PoseEvalReport r;
  r.scale = sim.scale;
  double ate = 0.0;
  for (std::size_t k = 0; k < pc.size(); ++k) ate += (sim.apply(pc[k]) - gc[k]).squaredNorm();
  r.ate = std::sqrt(ate / static_cast<double>(pc.size()));
  if (pred.size() < 2) return r;
  double st = 0.0, sr = 0.0;
  for (std::size_t k = 0; k + 1 < pred.size(); ++k) {
    Pose dp = compose_pose(pred[k].inverse(), pred[k + 1]);
    dp.translation *= sim.scale;
    const Pose dg = compose_pose(gt[k].inverse(), gt[k + 1]);
    const Pose err = compose_pose(dg.inverse(), dp);
    st += err.translation.squaredNorm();
    const double ang = rotation_angle(err.rotation) * 180.0 / std::numbers::pi;
    sr += ang * ang;
  }
  const double m = static_cast<double>(pred.size() - 1);
  r.rpe_trans = std::sqrt(st / m);
  r.rpe_rot = std::sqrt(sr / m);
  return r;
}

}  // namespace dynpoint
