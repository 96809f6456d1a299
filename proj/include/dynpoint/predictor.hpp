#pragma once

#include <cmath>
#include <string_view>

#include "dynpoint/geometry.hpp"
#include "dynpoint/random.hpp"
#include "dynpoint/scene.hpp"

namespace dynpoint {

enum class PredictionSource { kOracle, kCheckpoint };

inline std::string_view to_string(PredictionSource s) {
  return s == PredictionSource::kOracle ? "oracle" : "checkpoint";
}

/// Outputs of one forward pass on the ordered pair (view1, view2). All three
/// pointmaps are in view1's camera frame; the rigid and matched maps are
/// indexed by view2's pixels.
struct PairPrediction {
  int view1 = 0;
  int view2 = 0;
  Pointmap self_points;     // view1 in its own camera
  Pointmap rigid_points;    // view2 pixels in view1's camera, camera motion only
  Pointmap matched_points;  // view2 pixels at view1's time, in view1's camera
  ConfidenceMap self_confidence;
  ConfidenceMap rigid_confidence;
  ConfidenceMap matched_confidence;
  PredictionSource source = PredictionSource::kOracle;

  void validate() const {
    const Pointmap& a = self_points;
    require(a.same_shape(rigid_points) && a.same_shape(matched_points), "prediction: pointmap dimensions differ");
    require(self_confidence.width() == a.width() && self_confidence.height() == a.height() &&
                rigid_confidence.width() == a.width() && rigid_confidence.height() == a.height() &&
                matched_confidence.width() == a.width() && matched_confidence.height() == a.height(),
            "prediction: confidence dimensions differ");
    require(a.check_invariants() && rigid_points.check_invariants() && matched_points.check_invariants(),
            "prediction: non-finite points");
  }
};

/// Stands in for the frozen network: (view1, view2) → PairPrediction.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual PairPrediction predict(int view1, int view2) const = 0;
  virtual int frame_count() const = 0;
  virtual int width() const = 0;
  virtual int height() const = 0;
  virtual Intrinsics intrinsics(int frame) const = 0;
};

struct OracleSettings {
  double point_noise = 0.0;   // σ relative to depth, per coordinate
  double scale_jitter = 0.0;  // σ of the log-scale applied per pair
  std::uint64_t seed = 0;
  bool confidence_aware = false;  // confidence drops with the drawn noise

  void validate() const {
    require(std::isfinite(point_noise) && point_noise >= 0.0, "oracle: point noise must be >= 0");
    require(std::isfinite(scale_jitter) && scale_jitter >= 0.0, "oracle: scale jitter must be >= 0");
  }
};

/// Ground-truth pointmaps of a synthetic scene, optionally corrupted.
class OraclePredictor : public Predictor {
 public:
  OraclePredictor(const SceneSequence& scene, OracleSettings settings) : scene_(scene), settings_(settings) {
    settings_.validate();
  }

  int frame_count() const override { return scene_.frame_count(); }
  int width() const override { return scene_.width(); }
  int height() const override { return scene_.height(); }
  Intrinsics intrinsics(int frame) const override {
    return scene_.frames.at(static_cast<std::size_t>(frame)).intrinsics;
  }
  const SceneSequence& scene() const { return scene_; }
  const OracleSettings& settings() const { return settings_; }

  /// exp(ε) shared by the three outputs of the pair; 1 when jitter is off.
  double pair_scale(int view1, int view2) const {
    if (settings_.scale_jitter == 0.0) return 1.0;
    CounterRng rng(CounterRng::stream_key(settings_.seed, kJitterTag, view1, view2));
    return std::exp(settings_.scale_jitter * rng.normal());
  }

  PairPrediction predict(int view1, int view2) const override {
    require(view1 >= 0 && view1 < frame_count() && view2 >= 0 && view2 < frame_count(),
            "oracle: frame index out of range");
    const SceneFrame& f1 = scene_.frames[static_cast<std::size_t>(view1)];
    PairPrediction p;
    p.view1 = view1;
    p.view2 = view2;
    p.self_points = unproject(f1.depth, f1.intrinsics);
    p.rigid_points = gt_rigid_pointmap(scene_, view1, view2);
    p.matched_points = gt_pointmap_matching(scene_, view1, view2);
    const double s = pair_scale(view1, view2);
    p.self_confidence = corrupt(p.self_points, s, view1, view2, 0);
    p.rigid_confidence = corrupt(p.rigid_points, s, view1, view2, 1);
    p.matched_confidence = corrupt(p.matched_points, s, view1, view2, 2);
    p.source = PredictionSource::kOracle;
    return p;
  }

 private:
  static constexpr std::uint64_t kJitterTag = 0x4a4954ULL;
  static constexpr std::uint64_t kNoiseTag = 0x4e4f49ULL;
  static constexpr double kRawConfidence = 1.0;  // C = 1 + e

  ConfidenceMap corrupt(Pointmap& pm, double scale, int view1, int view2, int head) const {
    Grid<double> raw(pm.width(), pm.height(), kRawConfidence);
    const double sigma = settings_.point_noise;
    CounterRng rng(CounterRng::stream_key(settings_.seed, kNoiseTag, view1, view2, head));
    for (std::size_t i = 0; i < pm.size(); ++i) {
      if (!pm.valid[i]) continue;
      Vector3d& p = pm.points[i];
      if (sigma > 0.0) {
        const double sd = sigma * std::abs(p.z());
        const Vector3d n(rng.normal(0.0, sd), rng.normal(0.0, sd), rng.normal(0.0, sd));
        p += n;
        if (settings_.confidence_aware && sd > 0.0) raw[i] = kRawConfidence - n.norm() / sd;
      }
      if (scale != 1.0) p *= scale;
    }
    return ConfidenceMap::from_raw(std::move(raw));
  }

  const SceneSequence& scene_;
  OracleSettings settings_;
};

}  // namespace dynpoint
