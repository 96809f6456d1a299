#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dynpoint/denoiser.hpp"
#include "dynpoint/geometry.hpp"
#include "dynpoint/matching.hpp"
#include "dynpoint/predictor.hpp"
#include "dynpoint/stats.hpp"

namespace dynpoint {

enum class Task { kTracking, kVideoDepth, kReconstruction };

inline std::string_view to_string(Task t) {
  switch (t) {
    case Task::kTracking: return "tracking";
    case Task::kVideoDepth: return "video_depth";
    case Task::kReconstruction: return "reconstruction";
  }
  return "tracking";
}

/// Which output of a pair a task consumes.
enum class HeadRole { kSelf, kRigid, kMatched };

struct PlannedPair {
  int view1 = 0;
  int view2 = 0;
  std::vector<HeadRole> consumes;
};

struct TaskPlan {
  Task task = Task::kTracking;
  int window = 0;
  int overlap = 0;
  int keyframe = 0;
  std::vector<PlannedPair> pairs;
};

inline constexpr int kDefaultWindow = 12;
inline constexpr int kDefaultOverlap = 4;

/// One pair per window frame. Tracking: (tᵢ, key), key defaulting to the
/// first window frame; video depth: (tᵢ, tᵢ); reconstruction: (t_T, tᵢ).
inline TaskPlan plan_pairs(Task task, std::span<const int> frames, int overlap = 0,
                           std::optional<int> keyframe = std::nullopt) {
  require(!frames.empty(), "plan_pairs: empty window");
  require(overlap >= 0 && (overlap == 0 || overlap < static_cast<int>(frames.size())),
          "plan_pairs: overlap must be smaller than the window");
  TaskPlan plan;
  plan.task = task;
  plan.window = static_cast<int>(frames.size());
  plan.overlap = overlap;
  switch (task) {
    case Task::kTracking:
      plan.keyframe = keyframe.value_or(frames.front());
      for (int t : frames) plan.pairs.push_back({t, plan.keyframe, {HeadRole::kMatched, HeadRole::kSelf}});
      break;
    case Task::kVideoDepth:
      plan.keyframe = frames.front();
      for (int t : frames) plan.pairs.push_back({t, t, {HeadRole::kSelf}});
      break;
    case Task::kReconstruction:
      plan.keyframe = keyframe.value_or(frames.back());
      for (int t : frames) plan.pairs.push_back({plan.keyframe, t, {HeadRole::kRigid}});
      break;
  }
  return plan;
}

/// Starts k·(T−O) while the window fits, then one window ending at L.
/// Sequences shorter than T get the single start 0.
inline std::vector<int> window_starts(int length, int window, int overlap) {
  require(length >= 1, "window_starts: empty sequence");
  require(window >= 1, "window_starts: window must be >= 1");
  require(overlap >= 0, "window_starts: overlap must be >= 0");
  if (length <= window) return {0};
  require(overlap < window, "window_starts: overlap must be smaller than the window");
  std::vector<int> starts;
  const int step = window - overlap;
  int s = 0;
  for (; s + window <= length; s += step) starts.push_back(s);
  if (starts.back() + window < length) starts.push_back(length - window);
  return starts;
}

struct TrackOptions {
  int window = kDefaultWindow;
  int overlap = kDefaultOverlap;
  HeadRole head = HeadRole::kMatched;         // kRigid tracks without the matching head
  const TemporalRefiner* refiner = nullptr;  // per-frame scale correction inside each window
};

struct TrackResult {
  TrackArray tracks;  // per-frame camera coordinates
  std::vector<double> window_scales;  // harmonization factor of each window
  int lost_queries = 0;               // queries never valid
  bool all_lost = false;
};

namespace detail {

inline void apply_factors(std::vector<Pointmap>& maps, std::span<const double> factors) {
  for (std::size_t t = 0; t < maps.size(); ++t)
    if (factors[t] != 1.0)
      for (auto& p : maps[t].points.values()) p *= factors[t];
}

}  // namespace detail

/// Queries live on pixels of frame 0, which is the keyframe of every window:
/// window frames tᵢ are paired as (tᵢ, 0). Each new window is scaled onto the
/// previous one by the median norm ratio of tracks on their shared frames,
/// and the later window's values are kept there.
inline TrackResult track_3d(const Predictor& predictor, std::span<const PixelQuery> queries,
                            const TrackOptions& opt = {}) {
  const int length = predictor.frame_count();
  require(length >= 1, "track_3d: empty sequence");
  require(opt.head != HeadRole::kSelf, "track_3d: tracking needs the rigid or matched output");
  const int window = std::min(opt.window, length);
  if (opt.refiner) require(window <= opt.refiner->max_window(), "track_3d: window exceeds the refiner");
  TrackResult out;
  out.tracks = TrackArray(static_cast<int>(queries.size()), length);
  int filled_end = 0;
  for (int start : window_starts(length, window, opt.overlap)) {
    std::vector<int> frames;
    for (int t = start; t < start + window; ++t) frames.push_back(t);
    const TaskPlan plan = plan_pairs(Task::kTracking, frames, 0, 0);
    std::vector<Pointmap> stream, ego;
    for (const PlannedPair& p : plan.pairs) {
      PairPrediction pred = predictor.predict(p.view1, p.view2);
      stream.push_back(opt.head == HeadRole::kMatched ? std::move(pred.matched_points) : std::move(pred.rigid_points));
      ego.push_back(std::move(pred.self_points));
    }
    if (opt.refiner && window >= 2) detail::apply_factors(stream, opt.refiner->frame_factors(ego));
    const TrackArray local = sparsify_tracks(stream, queries);

    double scale = 1.0;
    std::vector<double> ratios;
    for (int q = 0; q < local.queries; ++q)
      for (int t = start; t < filled_end; ++t) {
        if (!out.tracks.is_valid(q, t) || !local.is_valid(q, t - start)) continue;
        const double n = local.at(q, t - start).norm();
        if (n > 0.0) ratios.push_back(out.tracks.at(q, t).norm() / n);
      }
    if (!ratios.empty()) scale = median(std::move(ratios));
    out.window_scales.push_back(scale);
    for (int q = 0; q < local.queries; ++q)
      for (int t = 0; t < window; ++t)
        out.tracks.set(q, start + t, scale * local.at(q, t), local.is_valid(q, t));
    filled_end = start + window;
  }
  for (int q = 0; q < out.tracks.queries; ++q) {
    bool any = false;
    for (int t = 0; t < length && !any; ++t) any = out.tracks.is_valid(q, t);
    if (!any) ++out.lost_queries;
  }
  out.all_lost = out.tracks.queries > 0 && out.lost_queries == out.tracks.queries;
  return out;
}

struct DepthOptions {
  int window = kDefaultWindow;
  int overlap = kDefaultOverlap;
  const TemporalRefiner* refiner = nullptr;
};

/// Depth channel of the self pointmap of each identical pair (tᵢ, tᵢ).
inline std::vector<DepthMap> video_depth(const Predictor& predictor, const DepthOptions& opt = {}) {
  const int length = predictor.frame_count();
  require(length >= 1, "video_depth: empty sequence");
  const int window = std::min(opt.window, length);
  if (opt.refiner) require(window <= opt.refiner->max_window(), "video_depth: window exceeds the refiner");
  std::vector<DepthMap> out(static_cast<std::size_t>(length));
  int filled_end = 0;
  for (int start : window_starts(length, window, opt.overlap)) {
    std::vector<int> frames;
    for (int t = start; t < start + window; ++t) frames.push_back(t);
    std::vector<Pointmap> maps;
    for (const PlannedPair& p : plan_pairs(Task::kVideoDepth, frames).pairs)
      maps.push_back(predictor.predict(p.view1, p.view2).self_points);
    if (opt.refiner && window >= 2) detail::apply_factors(maps, opt.refiner->frame_factors(maps));
    std::vector<double> ratios;
    for (int t = start; t < filled_end; ++t) {
      const DepthMap& old = out[static_cast<std::size_t>(t)];
      const Pointmap& now = maps[static_cast<std::size_t>(t - start)];
      for (std::size_t k = 0; k < now.size(); ++k)
        if (old.valid[k] && now.valid[k] && now.points[k].z() > 0.0) ratios.push_back(old.depth[k] / now.points[k].z());
    }
    const double scale = ratios.empty() ? 1.0 : median(std::move(ratios));
    for (int t = 0; t < window; ++t) {
      DepthMap d = depth_from_pointmap(maps[static_cast<std::size_t>(t)]);
      if (scale != 1.0)
        for (double& z : d.depth.values()) z *= scale;
      out[static_cast<std::size_t>(start + t)] = std::move(d);
    }
    filled_end = start + window;
  }
  return out;
}

/// Points of every window frame in the keyframe's camera, with provenance.
struct PointCloud {
  std::vector<Vector3d> points;
  std::vector<int> frame;
  std::vector<int> pixel;  // row-major index into the source frame
};

/// Feed-forward reconstruction of one window: the rigid outputs of pairs
/// (t_T, tᵢ) concatenated, keyframe t_T last in the window.
inline PointCloud feedforward_recon(const Predictor& predictor, std::span<const int> frames) {
  const TaskPlan plan = plan_pairs(Task::kReconstruction, frames);
  PointCloud cloud;
  for (const PlannedPair& p : plan.pairs) {
    const PairPrediction pred = predictor.predict(p.view1, p.view2);
    const Pointmap& pm = pred.rigid_points;
    for (std::size_t k = 0; k < pm.size(); ++k) {
      if (!pm.valid[k]) continue;
      cloud.points.push_back(pm.points[k]);
      cloud.frame.push_back(p.view2);
      cloud.pixel.push_back(static_cast<int>(k));
    }
  }
  return cloud;
}

}  // namespace dynpoint
