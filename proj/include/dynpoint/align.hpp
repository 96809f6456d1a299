#pragma once

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <queue>
#include <utility>
#include <vector>

#include "dynpoint/geometry.hpp"
#include "dynpoint/matching.hpp"
#include "dynpoint/predictor.hpp"

namespace dynpoint {

/// Weight of the reprojection term against the 3D consistency term.
inline constexpr double kDefaultPixelWeight = 0.01;

/// Unordered frame pairs: every (a, a+1), plus (a, a+k·stride) for k = 1, 2.
/// Sorted, without duplicates.
inline std::vector<std::pair<int, int>> pair_graph_edges(int frames, int stride) {
  require(frames >= 1, "pair graph: need at least one frame");
  require(stride >= 1, "pair graph: stride must be >= 1");
  std::vector<std::pair<int, int>> edges;
  for (int a = 0; a < frames; ++a) {
    if (a + 1 < frames) edges.emplace_back(a, a + 1);
    for (int k = 1; k <= 2; ++k)
      if (a + k * stride < frames) edges.emplace_back(a, a + k * stride);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

/// One directed pair with its derived dynamic mask and 2D correspondences.
struct AlignEdge {
  PairPrediction prediction;
  DynamicMask dynamic;  // over view2's pixels
  PixelField flow;      // matched points projected into view1
  Grid<double> self_weight;   // confidences of the self pointmap
  Grid<double> rigid_weight;  // confidences of the rigid pointmap

  int view1() const { return prediction.view1; }
  int view2() const { return prediction.view2; }
};

struct AlignmentProblem {
  int frame_count = 0;
  int width = 0;
  int height = 0;
  std::vector<Intrinsics> intrinsics;  // per frame, held fixed
  std::vector<AlignEdge> edges;        // sorted by (view1, view2)
  std::vector<Mask> world_valid;       // pixels of each frame covered by some prediction

  void validate() const;
};

namespace detail {

inline bool graph_connected(int frames, const std::vector<AlignEdge>& edges) {
  if (frames <= 1) return true;
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(frames));
  for (const AlignEdge& e : edges) {
    adj[static_cast<std::size_t>(e.view1())].push_back(e.view2());
    adj[static_cast<std::size_t>(e.view2())].push_back(e.view1());
  }
  std::vector<char> seen(static_cast<std::size_t>(frames), 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  int count = 1;
  while (!q.empty()) {
    const int f = q.front();
    q.pop();
    for (int g : adj[static_cast<std::size_t>(f)])
      if (!seen[static_cast<std::size_t>(g)]) {
        seen[static_cast<std::size_t>(g)] = 1;
        ++count;
        q.push(g);
      }
  }
  return count == frames;
}

}  // namespace detail

inline void AlignmentProblem::validate() const {
  require(frame_count >= 1, "alignment: no frames");
  require(static_cast<int>(intrinsics.size()) == frame_count, "alignment: one intrinsics entry per frame");
  require(static_cast<int>(world_valid.size()) == frame_count, "alignment: one validity mask per frame");
  for (const AlignEdge& e : edges) {
    require(e.view1() >= 0 && e.view1() < frame_count && e.view2() >= 0 && e.view2() < frame_count,
            "alignment: edge frame out of range");
    require(e.view1() != e.view2(), "alignment: self edge");
    require(e.prediction.self_points.width() == width && e.prediction.self_points.height() == height,
            "alignment: prediction resolution mismatch");
  }
  require(detail::graph_connected(frame_count, edges), "alignment: pair graph is disconnected");
  if (frame_count > 1) {
    std::vector<char> has_self(static_cast<std::size_t>(frame_count), 0);
    for (const AlignEdge& e : edges) has_self[static_cast<std::size_t>(e.view1())] = 1;
    for (char c : has_self) require(c != 0, "alignment: every frame needs an edge where it is view1");
  }
}

/// Derives dynamic masks, flows and coverage from pair predictions.
inline AlignmentProblem make_alignment_problem(std::vector<PairPrediction> predictions,
                                               std::vector<Intrinsics> intrinsics) {
  AlignmentProblem pb;
  pb.frame_count = static_cast<int>(intrinsics.size());
  require(pb.frame_count >= 1, "alignment: no frames");
  std::sort(predictions.begin(), predictions.end(), [](const PairPrediction& a, const PairPrediction& b) {
    return std::pair(a.view1, a.view2) < std::pair(b.view1, b.view2);
  });
  pb.intrinsics = std::move(intrinsics);
  if (!predictions.empty()) {
    pb.width = predictions.front().self_points.width();
    pb.height = predictions.front().self_points.height();
  }
  for (PairPrediction& p : predictions) {
    p.validate();
    require(p.view1 >= 0 && p.view1 < pb.frame_count && p.view2 >= 0 && p.view2 < pb.frame_count,
            "alignment: edge frame out of range");
    AlignEdge e;
    e.dynamic = dynamic_mask(p.matched_points, p.rigid_points);
    e.flow = matching_to_pixels(p.matched_points, pb.intrinsics[static_cast<std::size_t>(p.view1)]);
    e.self_weight = p.self_confidence.values();
    e.rigid_weight = p.rigid_confidence.values();
    e.prediction = std::move(p);
    pb.edges.push_back(std::move(e));
  }
  pb.world_valid.assign(static_cast<std::size_t>(pb.frame_count), Mask(pb.width, pb.height, 0));
  for (const AlignEdge& e : pb.edges) {
    Mask& a = pb.world_valid[static_cast<std::size_t>(e.view1())];
    Mask& b = pb.world_valid[static_cast<std::size_t>(e.view2())];
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (e.prediction.self_points.valid[k]) a[k] = 1;
      if (e.prediction.rigid_points.valid[k]) b[k] = 1;
    }
  }
  pb.validate();
  return pb;
}

/// Both directions of every pair_graph_edges edge over the predictor's frames.
inline AlignmentProblem build_pair_graph(const Predictor& predictor, int stride) {
  const int n = predictor.frame_count();
  require(n >= 2, "build_pair_graph: need at least two frames");
  std::vector<PairPrediction> preds;
  for (const auto& [a, b] : pair_graph_edges(n, stride)) {
    preds.push_back(predictor.predict(a, b));
    preds.push_back(predictor.predict(b, a));
  }
  std::vector<Intrinsics> k;
  for (int f = 0; f < n; ++f) k.push_back(predictor.intrinsics(f));
  return make_alignment_problem(std::move(preds), std::move(k));
}

enum class ResidualNorm { kSquared, kEuclidean };

struct AlignOptions {
  int max_iters = 200;
  double tol = 1e-6;            // relative energy improvement that counts as converged
  double energy_floor = 1e-20;  // absolute energy at which to stop
  double pixel_weight = kDefaultPixelWeight;
  bool use_dynamic_mask = true;
  ResidualNorm norm = ResidualNorm::kSquared;
};

/// Camera-to-world pose per frame, log-scale per edge, world pointmap per frame.
struct AlignmentVariables {
  std::vector<Pose> cam_to_world;
  std::vector<double> log_scales;
  std::vector<Grid<Vector3d>> world;
};

struct AlignmentResult {
  std::vector<Pose> cam_to_world;
  std::vector<Pointmap> world;
  std::vector<double> scales;
  double energy = 0.0;
  std::vector<double> energy_trace;  // accepted energies, starting with the initial one
  int iterations = 0;
  bool converged = false;
};

namespace detail {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

struct AlignGradient {
  std::vector<Vector6d> frame_g;  // rotation increment, then translation
  std::vector<Matrix6d> frame_h;
  std::vector<double> scale_g, scale_h;
  std::vector<std::vector<Vector3d>> point_g;
  std::vector<std::vector<Matrix3d>> point_h;

  void reset(const AlignmentProblem& pb) {
    const std::size_t f = static_cast<std::size_t>(pb.frame_count);
    const std::size_t px = static_cast<std::size_t>(pb.width) * static_cast<std::size_t>(pb.height);
    frame_g.assign(f, Vector6d::Zero());
    frame_h.assign(f, Matrix6d::Zero());
    scale_g.assign(pb.edges.size(), 0.0);
    scale_h.assign(pb.edges.size(), 0.0);
    point_g.assign(f, std::vector<Vector3d>(px, Vector3d::Zero()));
    point_h.assign(f, std::vector<Matrix3d>(px, Matrix3d::Zero()));
  }
};

/// Energy contribution of a residual of norm `r` with weight `w`, and the
/// factor a such that its gradient is 2a·rᵀ·J.
inline std::pair<double, double> residual_cost(double w, double r_norm, ResidualNorm norm) {
  if (norm == ResidualNorm::kSquared) return {w * r_norm * r_norm, w};
  return {w * r_norm, r_norm > 1e-12 ? 0.5 * w / r_norm : 0.0};
}

inline double alignment_energy_impl(const AlignmentProblem& pb, const AlignmentVariables& v, double pixel_weight,
                                    bool use_dynamic_mask, ResidualNorm norm, AlignGradient* g) {
  if (g) g->reset(pb);
  double energy = 0.0;
  for (std::size_t ei = 0; ei < pb.edges.size(); ++ei) {
    const AlignEdge& e = pb.edges[ei];
    const std::size_t fi = static_cast<std::size_t>(e.view1());
    const std::size_t fj = static_cast<std::size_t>(e.view2());
    const Pose& pose = v.cam_to_world[fi];
    const double s = std::exp(v.log_scales[ei]);

    const auto point_term = [&](const Pointmap& pm, const Grid<double>& conf, std::size_t frame) {
      const Grid<Vector3d>& chi = v.world[frame];
      // Curvature sums: Σa, Σa·w, Σa·w·wᵀ.
      double a0 = 0.0;
      Vector3d a1 = Vector3d::Zero();
      Matrix3d a2 = Matrix3d::Zero();
      for (std::size_t k = 0; k < pm.size(); ++k) {
        if (!pm.valid[k]) continue;
        const Vector3d w = pose.rotation * (s * pm.points[k]);
        const Vector3d r = chi[k] - w - pose.translation;
        const auto [cost, a] = residual_cost(conf[k], r.norm(), norm);
        energy += cost;
        if (!g) continue;
        g->point_g[frame][k] += 2.0 * a * r;
        g->point_h[frame][k].diagonal().array() += 2.0 * a;
        g->frame_g[fi].head<3>() += 2.0 * a * r.cross(w);
        g->frame_g[fi].tail<3>() -= 2.0 * a * r;
        a0 += a;
        a1 += a * w;
        a2 += a * w * w.transpose();
        g->scale_g[ei] += -2.0 * a * r.dot(w);
        g->scale_h[ei] += 2.0 * a * w.squaredNorm();
      }
      if (!g) return;
      // JᵀJ with J = [[w]×, −I]: [[|w|²I − wwᵀ, [w]×], [[w]×ᵀ, I]].
      Matrix6d h;
      h.topLeftCorner<3, 3>() = a2.trace() * Matrix3d::Identity() - a2;
      h.topRightCorner<3, 3>() = skew(a1);
      h.bottomLeftCorner<3, 3>() = skew(a1).transpose();
      h.bottomRightCorner<3, 3>() = a0 * Matrix3d::Identity();
      g->frame_h[fi] += 2.0 * h;
    };
    point_term(e.prediction.self_points, e.self_weight, fi);
    point_term(e.prediction.rigid_points, e.rigid_weight, fj);

    if (pixel_weight <= 0.0) continue;
    const Intrinsics& kin = pb.intrinsics[fi];
    const Grid<Vector3d>& chi = v.world[fj];
    const Mask& covered = pb.world_valid[fj];
    const Matrix3d rt = pose.rotation.transpose();
    for (std::size_t k = 0; k < chi.size(); ++k) {
      if (!e.flow.valid[k] || !covered[k]) continue;
      if (use_dynamic_mask && e.dynamic.mask[k]) continue;
      const Vector3d vv = chi[k] - pose.translation;
      const Vector3d q = rt * vv;
      if (!(q.z() > kProjectionEpsilon)) continue;
      const Vector2d res = kin.project(q) - e.flow.pixels[k];
      const auto [cost, a] = residual_cost(pixel_weight, res.norm(), norm);
      energy += cost;
      if (!g) continue;
      Eigen::Matrix<double, 2, 3> p;
      p << kin.fx / q.z(), 0.0, -kin.fx * q.x() / (q.z() * q.z()), 0.0, kin.fy / q.z(),
          -kin.fy * q.y() / (q.z() * q.z());
      const Eigen::Matrix<double, 2, 3> da = p * rt;
      g->point_g[fj][k] += 2.0 * a * (da.transpose() * res);
      g->point_h[fj][k] += 2.0 * a * (da.transpose() * da);
      const Matrix3d sv = skew(vv);
      const Vector3d gq = 2.0 * a * (da.transpose() * res);
      g->frame_g[fi].head<3>() += sv.transpose() * gq;
      g->frame_g[fi].tail<3>() -= gq;
      const Matrix3d m = 2.0 * a * (da.transpose() * da);
      const Matrix3d msv = m * sv;
      g->frame_h[fi].topLeftCorner<3, 3>() += sv.transpose() * msv;
      g->frame_h[fi].topRightCorner<3, 3>() -= sv.transpose() * m;
      g->frame_h[fi].bottomLeftCorner<3, 3>() -= msv;
      g->frame_h[fi].bottomRightCorner<3, 3>() += m;
    }
  }
  return energy;
}

/// Confidence-weighted mean of every point-term target of each world pixel.
inline void fit_world_points(const AlignmentProblem& pb, AlignmentVariables& v) {
  const std::size_t px = static_cast<std::size_t>(pb.width) * static_cast<std::size_t>(pb.height);
  std::vector<std::vector<double>> weight(static_cast<std::size_t>(pb.frame_count), std::vector<double>(px, 0.0));
  for (auto& w : v.world)
    for (auto& p : w.values()) p = Vector3d::Zero();
  for (std::size_t ei = 0; ei < pb.edges.size(); ++ei) {
    const AlignEdge& e = pb.edges[ei];
    const Pose& pose = v.cam_to_world[static_cast<std::size_t>(e.view1())];
    const double s = std::exp(v.log_scales[ei]);
    const auto add = [&](const Pointmap& pm, const Grid<double>& conf, std::size_t frame) {
      for (std::size_t k = 0; k < px; ++k) {
        if (!pm.valid[k]) continue;
        v.world[frame][k] += conf[k] * (pose.rotation * (s * pm.points[k]) + pose.translation);
        weight[frame][k] += conf[k];
      }
    };
    add(e.prediction.self_points, e.self_weight, static_cast<std::size_t>(e.view1()));
    add(e.prediction.rigid_points, e.rigid_weight, static_cast<std::size_t>(e.view2()));
  }
  for (std::size_t f = 0; f < v.world.size(); ++f)
    for (std::size_t k = 0; k < px; ++k)
      if (weight[f][k] > 0.0) v.world[f][k] /= weight[f][k];
}

}  // namespace detail

inline double alignment_energy(const AlignmentProblem& pb, const AlignmentVariables& v,
                               double pixel_weight = kDefaultPixelWeight, bool use_dynamic_mask = true,
                               ResidualNorm norm = ResidualNorm::kSquared) {
  return detail::alignment_energy_impl(pb, v, pixel_weight, use_dynamic_mask, norm, nullptr);
}

/// Spanning-tree start: each newly reached frame is placed by a similarity
/// fit of its own pointmap onto its prediction from an already placed frame.
/// Edge scales come from a least-squares ratio of the edge's view1 pointmap
/// against the reference pointmap of that frame.
inline AlignmentVariables initialize_variables(const AlignmentProblem& pb) {
  AlignmentVariables v;
  v.cam_to_world.assign(static_cast<std::size_t>(pb.frame_count), Pose::identity());
  v.world.assign(static_cast<std::size_t>(pb.frame_count), Grid<Vector3d>(pb.width, pb.height, Vector3d::Zero()));
  std::vector<double> frame_scale(static_cast<std::size_t>(pb.frame_count), 1.0);
  std::vector<int> self_edge(static_cast<std::size_t>(pb.frame_count), -1);
  for (std::size_t ei = 0; ei < pb.edges.size(); ++ei) {
    int& s = self_edge[static_cast<std::size_t>(pb.edges[ei].view1())];
    if (s < 0) s = static_cast<int>(ei);
  }
  // c with reference ≈ c·edge.self_points
  std::vector<double> relative(pb.edges.size(), 1.0);
  for (std::size_t ei = 0; ei < pb.edges.size(); ++ei) {
    const Pointmap& ref = pb.edges[static_cast<std::size_t>(self_edge[static_cast<std::size_t>(pb.edges[ei].view1())])]
                              .prediction.self_points;
    const Pointmap& own = pb.edges[ei].prediction.self_points;
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < own.size(); ++k)
      if (own.valid[k] && ref.valid[k]) {
        num += ref.points[k].dot(own.points[k]);
        den += own.points[k].squaredNorm();
      }
    if (den > 0.0 && num > 0.0) relative[ei] = num / den;
  }
  std::vector<char> placed(static_cast<std::size_t>(pb.frame_count), 0);
  placed[0] = 1;
  std::queue<int> q;
  q.push(0);
  while (!q.empty()) {
    const int i = q.front();
    q.pop();
    for (std::size_t ei = 0; ei < pb.edges.size(); ++ei) {
      const AlignEdge& e = pb.edges[ei];
      if (e.view1() != i || placed[static_cast<std::size_t>(e.view2())]) continue;
      const int j = e.view2();
      const int se = self_edge[static_cast<std::size_t>(j)];
      if (se < 0) continue;
      const Pointmap& own = pb.edges[static_cast<std::size_t>(se)].prediction.self_points;
      const Pointmap& seen = e.prediction.rigid_points;
      const double to_world = frame_scale[static_cast<std::size_t>(i)] * relative[ei];
      std::vector<Vector3d> src, dst;
      for (std::size_t k = 0; k < own.size(); ++k)
        if (own.valid[k] && seen.valid[k]) {
          src.push_back(own.points[k]);
          dst.push_back(to_world * seen.points[k]);
        }
      if (src.size() < 3) continue;
      const Similarity sim = umeyama(src, dst, true);
      const Pose& pi = v.cam_to_world[static_cast<std::size_t>(i)];
      Pose& pj = v.cam_to_world[static_cast<std::size_t>(j)];
      pj.rotation = nearest_rotation(pi.rotation * sim.rotation);
      pj.translation = pi.rotation * sim.translation + pi.translation;
      frame_scale[static_cast<std::size_t>(j)] = sim.scale;
      placed[static_cast<std::size_t>(j)] = 1;
      q.push(j);
    }
  }
  for (char p : placed) require(p != 0, "alignment: could not place every frame");
  for (std::size_t ei = 0; ei < pb.edges.size(); ++ei)
    v.log_scales.push_back(std::log(frame_scale[static_cast<std::size_t>(pb.edges[ei].view1())] * relative[ei]));
  detail::fit_world_points(pb, v);
  return v;
}

namespace detail {

inline AlignmentResult package_result(const AlignmentProblem& pb, const AlignmentVariables& v) {
  AlignmentResult r;
  r.cam_to_world = v.cam_to_world;
  for (double ls : v.log_scales) r.scales.push_back(std::exp(ls));
  for (int f = 0; f < pb.frame_count; ++f) {
    Pointmap pm(pb.width, pb.height);
    pm.points = v.world[static_cast<std::size_t>(f)];
    pm.valid = pb.world_valid[static_cast<std::size_t>(f)];
    for (std::size_t k = 0; k < pm.size(); ++k)
      if (!pm.valid[k]) pm.points[k] = Vector3d::Zero();
    r.world.push_back(std::move(pm));
  }
  return r;
}

}  // namespace detail

/// Alternates a world-point step and a pose/scale step, each a gradient step
/// preconditioned by block-diagonal Gauss-Newton curvature and accepted by
/// Armijo backtracking. Frame 0 stays at the identity and the first edge's
/// scale at 1.
inline AlignmentResult global_align(const AlignmentProblem& pb, const AlignOptions& opt,
                                    const AlignmentVariables* start = nullptr) {
  pb.validate();
  require(opt.max_iters >= 0 && opt.tol >= 0.0 && opt.pixel_weight >= 0.0, "global_align: invalid options");
  if (pb.frame_count == 1 || pb.edges.empty()) {
    AlignmentVariables v;
    v.cam_to_world.assign(static_cast<std::size_t>(pb.frame_count), Pose::identity());
    v.log_scales.assign(pb.edges.size(), 0.0);
    v.world.assign(static_cast<std::size_t>(pb.frame_count), Grid<Vector3d>(pb.width, pb.height, Vector3d::Zero()));
    if (!pb.edges.empty()) detail::fit_world_points(pb, v);
    AlignmentResult r = detail::package_result(pb, v);
    r.energy = alignment_energy(pb, v, opt.pixel_weight, opt.use_dynamic_mask, opt.norm);
    r.energy_trace = {r.energy};
    r.converged = true;
    return r;
  }

  AlignmentVariables v = start ? *start : initialize_variables(pb);
  require(v.cam_to_world.size() == static_cast<std::size_t>(pb.frame_count) &&
              v.log_scales.size() == pb.edges.size() && v.world.size() == v.cam_to_world.size(),
          "global_align: starting variables do not match the problem");
  v.cam_to_world[0] = Pose::identity();
  v.log_scales[0] = 0.0;

  const auto energy_of = [&](const AlignmentVariables& x, detail::AlignGradient* g) {
    return detail::alignment_energy_impl(pb, x, opt.pixel_weight, opt.use_dynamic_mask, opt.norm, g);
  };
  detail::AlignGradient grad;
  double energy = energy_of(v, nullptr);
  if (!std::isfinite(energy)) throw DivergenceError("global_align: initial energy is not finite", 0);

  AlignmentResult out;
  out.energy_trace.push_back(energy);
  constexpr double kArmijo = 1e-4;
  constexpr int kMaxHalvings = 40;

  // Tries x + α·d for α = 1, 1/2, ...; returns whether a step was accepted.
  const auto line_search = [&](const auto& apply, double slope) {
    if (!(slope < 0.0)) return false;
    double alpha = 1.0;
    for (int h = 0; h < kMaxHalvings; ++h, alpha *= 0.5) {
      AlignmentVariables trial = v;
      apply(trial, alpha);
      const double e = energy_of(trial, nullptr);
      if (std::isfinite(e) && e <= energy + kArmijo * alpha * slope) {
        v = std::move(trial);
        energy = e;
        return true;
      }
    }
    return false;
  };

  int it = 0;
  for (; it < opt.max_iters; ++it) {
    if (energy <= opt.energy_floor) {
      out.converged = true;
      break;
    }
    const double before = energy;

    energy_of(v, &grad);
    std::vector<std::vector<Vector3d>> dpoint(grad.point_g.size());
    double slope = 0.0;
    for (std::size_t f = 0; f < grad.point_g.size(); ++f) {
      dpoint[f].assign(grad.point_g[f].size(), Vector3d::Zero());
      for (std::size_t k = 0; k < grad.point_g[f].size(); ++k) {
        const Matrix3d& h = grad.point_h[f][k];
        if (h.trace() <= 0.0) continue;
        dpoint[f][k] = -h.ldlt().solve(grad.point_g[f][k]);
        slope += grad.point_g[f][k].dot(dpoint[f][k]);
      }
    }
    line_search(
        [&](AlignmentVariables& x, double a) {
          for (std::size_t f = 0; f < dpoint.size(); ++f)
            for (std::size_t k = 0; k < dpoint[f].size(); ++k) x.world[f][k] += a * dpoint[f][k];
        },
        slope);

    energy_of(v, &grad);
    std::vector<detail::Vector6d> dframe(grad.frame_g.size(), detail::Vector6d::Zero());
    std::vector<double> dscale(grad.scale_g.size(), 0.0);
    slope = 0.0;
    for (std::size_t f = 1; f < dframe.size(); ++f) {
      const detail::Matrix6d h = grad.frame_h[f] + 1e-12 * (grad.frame_h[f].trace() + 1.0) * detail::Matrix6d::Identity();
      dframe[f] = -h.ldlt().solve(grad.frame_g[f]);
      slope += grad.frame_g[f].dot(dframe[f]);
    }
    for (std::size_t e = 1; e < dscale.size(); ++e) {
      if (grad.scale_h[e] <= 0.0) continue;
      dscale[e] = -grad.scale_g[e] / grad.scale_h[e];
      slope += grad.scale_g[e] * dscale[e];
    }
    line_search(
        [&](AlignmentVariables& x, double a) {
          for (std::size_t f = 1; f < dframe.size(); ++f) {
            Pose& p = x.cam_to_world[f];
            p.rotation = nearest_rotation(so3_exp(a * dframe[f].head<3>()) * p.rotation);
            p.translation += a * dframe[f].tail<3>();
          }
          for (std::size_t e = 1; e < dscale.size(); ++e) x.log_scales[e] += a * dscale[e];
        },
        slope);

    if (!std::isfinite(energy)) throw DivergenceError("global_align: energy is not finite", it + 1);
    out.energy_trace.push_back(energy);
    const double gain = before - energy;
    if (gain <= opt.tol * std::max(before, 1e-300)) {
      out.converged = true;
      ++it;
      break;
    }
  }
  AlignmentResult r = detail::package_result(pb, v);
  r.energy = energy;
  r.energy_trace = std::move(out.energy_trace);
  r.iterations = it;
  r.converged = out.converged || energy <= opt.energy_floor;
  return r;
}

/// Camera-to-world poses in frame order.
inline std::vector<Pose> extract_trajectory(const AlignmentResult& r) { return r.cam_to_world; }

}  // namespace dynpoint
