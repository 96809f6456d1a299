#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "dynpoint/geometry.hpp"

namespace dynpoint {

/// Default weight of the −log C term in the confidence loss.
inline constexpr double kDefaultConfidenceWeight = 0.2;

/// Mean distance to the origin of valid points; always > 0.
struct NormFactor {
  double value = 1.0;
};

namespace detail {

inline NormFactor norm_from_sum(double sum, std::size_t count) {
  if (count == 0) throw EmptyDomainError("norm_factor: no valid points");
  const double v = sum / static_cast<double>(count);
  return {v > 0.0 ? v : 1.0};
}

/// Sum of ‖p‖ over cells valid in both `a` and `mask`.
inline void accumulate_norms(const Pointmap& a, const Mask& mask, double& sum, std::size_t& count) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a.valid[i] || !mask[i]) continue;
    sum += a.points[i].norm();
    ++count;
  }
}

inline Mask joint_valid(const Pointmap& a, const Pointmap& b) {
  require(a.same_shape(b), "loss: pointmap dimensions differ");
  Mask m(a.width(), a.height(), 0);
  for (std::size_t i = 0; i < a.size(); ++i) m[i] = a.valid[i] && b.valid[i];
  return m;
}

}  // namespace detail

inline NormFactor norm_factor(const Pointmap& x) {
  double sum = 0.0;
  std::size_t count = 0;
  detail::accumulate_norms(x, x.valid, sum, count);
  return detail::norm_from_sum(sum, count);
}

/// Pools the valid points of every frame into one mean.
inline NormFactor norm_factor_window(std::span<const Pointmap> xs) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const Pointmap& x : xs) detail::accumulate_norms(x, x.valid, sum, count);
  return detail::norm_from_sum(sum, count);
}

/// Per-frame pointmaps of one head role over a window, with ground truth.
struct WindowPredictions {
  std::vector<Pointmap> predicted;
  std::vector<Pointmap> ground_truth;

  std::size_t length() const { return predicted.size(); }
  void validate() const {
    require(predicted.size() == ground_truth.size(), "window: prediction/ground-truth length mismatch");
    require(!predicted.empty(), "window: empty");
    for (std::size_t t = 0; t < predicted.size(); ++t) {
      require(predicted[t].same_shape(predicted.front()), "window: frames differ in resolution");
      require(ground_truth[t].same_shape(predicted.front()), "window: frames differ in resolution");
    }
  }
};

struct RegressionLoss {
  Grid<double> per_pixel;
  Mask valid;
  double mean = 0.0;
};

/// ‖pred/z − gt/z̄‖ per jointly valid pixel, z and z̄ the norm factors of each
/// side over that same domain.
inline RegressionLoss regression_loss(const Pointmap& pred, const Pointmap& gt) {
  const Mask joint = detail::joint_valid(pred, gt);
  double sp = 0.0, sg = 0.0;
  std::size_t np = 0, ng = 0;
  detail::accumulate_norms(pred, joint, sp, np);
  detail::accumulate_norms(gt, joint, sg, ng);
  const double z = detail::norm_from_sum(sp, np).value;
  const double zbar = detail::norm_from_sum(sg, ng).value;
  RegressionLoss out{Grid<double>(pred.width(), pred.height(), 0.0), joint, 0.0};
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!joint[i]) continue;
    out.per_pixel[i] = (pred.points[i] / z - gt.points[i] / zbar).norm();
    total += out.per_pixel[i];
  }
  out.mean = total / static_cast<double>(np);
  return out;
}

/// mean over valid pixels of C·ℓ − α·log C.
inline double confidence_loss(const Grid<double>& confidence, const Grid<double>& per_pixel_loss,
                              const Mask& valid, double alpha = kDefaultConfidenceWeight) {
  require(alpha > 0.0, "confidence_loss: alpha must be positive");
  require(confidence.same_shape(per_pixel_loss) && confidence.same_shape(valid),
          "confidence_loss: dimension mismatch");
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < confidence.size(); ++i) {
    if (!valid[i]) continue;
    require(confidence[i] > 0.0, "confidence_loss: confidence must be positive");
    total += confidence[i] * per_pixel_loss[i] - alpha * std::log(confidence[i]);
    ++n;
  }
  if (n == 0) throw EmptyDomainError("confidence_loss: no valid pixels");
  return total / static_cast<double>(n);
}

inline double confidence_loss(const ConfidenceMap& conf, const RegressionLoss& loss,
                              double alpha = kDefaultConfidenceWeight) {
  return confidence_loss(conf.values(), loss.per_pixel, loss.valid, alpha);
}

/// Minimizer of C·r − α·log C subject to C ≥ 1.
inline double optimal_confidence(double residual, double alpha = kDefaultConfidenceWeight) {
  if (residual <= 0.0) return std::numeric_limits<double>::infinity();
  return std::max(1.0, alpha / residual);
}

/// (1/T) Σ_t mean_p ‖X_t/z − G_t/ḡ‖, prediction X against ground truth G, with
/// the normalizers z and ḡ pooled over the whole window.
inline double window_stream_loss(const WindowPredictions& w) {
  w.validate();
  std::vector<Mask> joint;
  joint.reserve(w.length());
  double sp = 0.0, sg = 0.0;
  std::size_t np = 0, ng = 0;
  for (std::size_t t = 0; t < w.length(); ++t) {
    joint.push_back(detail::joint_valid(w.predicted[t], w.ground_truth[t]));
    detail::accumulate_norms(w.predicted[t], joint.back(), sp, np);
    detail::accumulate_norms(w.ground_truth[t], joint.back(), sg, ng);
  }
  const double z = detail::norm_from_sum(sp, np).value;
  const double zbar = detail::norm_from_sum(sg, ng).value;
  double total = 0.0;
  for (std::size_t t = 0; t < w.length(); ++t) {
    const Pointmap& p = w.predicted[t];
    const Pointmap& g = w.ground_truth[t];
    double frame = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!joint[t][i]) continue;
      frame += (p.points[i] / z - g.points[i] / zbar).norm();
      ++n;
    }
    if (n > 0) total += frame / static_cast<double>(n);
  }
  return total / static_cast<double>(w.length());
}

/// Tracking: matched stream (every frame at the keyframe time) plus ego stream.
inline double temporal_tracking_loss(const WindowPredictions& matched, const WindowPredictions& ego) {
  require(matched.length() == ego.length(), "temporal_tracking_loss: stream lengths differ");
  return window_stream_loss(matched) + window_stream_loss(ego);
}

/// Video depth: the self and rigid outputs of identical pairs, both against
/// the frame's own ground truth.
inline double temporal_depth_loss(const WindowPredictions& head1, const WindowPredictions& head2) {
  require(head1.length() == head2.length(), "temporal_depth_loss: stream lengths differ");
  return window_stream_loss(head1) + window_stream_loss(head2);
}

/// Reconstruction: the keyframe's own map repeated, plus every reference frame
/// seen from the keyframe.
inline double temporal_recon_loss(const WindowPredictions& key, const WindowPredictions& refs) {
  require(key.length() == refs.length(), "temporal_recon_loss: stream lengths differ");
  return window_stream_loss(key) + window_stream_loss(refs);
}

}  // namespace dynpoint
