#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "dynpoint/attention.hpp"
#include "dynpoint/geometry.hpp"
#include "dynpoint/random.hpp"
#include "dynpoint/scene.hpp"
#include "dynpoint/stats.hpp"

namespace dynpoint {

/// Side of the square pixel cell averaged into one token.
inline constexpr int kTokenCell = 8;

/// A pointmap average-pooled to one 3D point per cell.
struct PooledFrame {
  std::vector<Vector3d> points;
  std::vector<std::uint8_t> valid;
};

inline int token_count(int width, int height, int cell = kTokenCell) {
  return ((width + cell - 1) / cell) * ((height + cell - 1) / cell);
}

/// Mean of the valid points of each cell; cells without valid points are invalid.
inline PooledFrame pool_pointmap(const Pointmap& pm, int cell = kTokenCell) {
  require(cell >= 1, "pool_pointmap: cell must be positive");
  const int cols = (pm.width() + cell - 1) / cell;
  const int rows = (pm.height() + cell - 1) / cell;
  PooledFrame out{std::vector<Vector3d>(static_cast<std::size_t>(rows * cols), Vector3d::Zero()),
                  std::vector<std::uint8_t>(static_cast<std::size_t>(rows * cols), 0)};
  std::vector<int> counts(out.points.size(), 0);
  for (int y = 0; y < pm.height(); ++y)
    for (int x = 0; x < pm.width(); ++x) {
      if (!pm.valid(y, x)) continue;
      const std::size_t k = static_cast<std::size_t>((y / cell) * cols + x / cell);
      out.points[k] += pm.points(y, x);
      ++counts[k];
    }
  for (std::size_t k = 0; k < counts.size(); ++k)
    if (counts[k] > 0) {
      out.points[k] /= counts[k];
      out.valid[k] = 1;
    }
  return out;
}

/// Writes frames × per-frame scale into batch slot `b` of `g`: channels are
/// [x, y, z] over the window's mean token norm, then a constant 1 on valid
/// tokens, remaining channels zero.
inline void encode_window(std::span<const PooledFrame> frames, std::span<const double> scales, TokenGrid& g,
                          int b) {
  require(static_cast<int>(frames.size()) == g.time && scales.size() == frames.size(),
          "encode_window: window length mismatch");
  require(g.channels >= 4, "encode_window: need at least 4 channels");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    require(static_cast<int>(frames[t].points.size()) == g.tokens, "encode_window: token count mismatch");
    for (std::size_t k = 0; k < frames[t].points.size(); ++k)
      if (frames[t].valid[k]) {
        sum += scales[t] * frames[t].points[k].norm();
        ++n;
      }
  }
  if (n == 0) throw EmptyDomainError("encode_window: no valid tokens");
  const double z = sum > 0.0 ? sum / static_cast<double>(n) : 1.0;
  for (int t = 0; t < g.time; ++t) {
    const PooledFrame& f = frames[static_cast<std::size_t>(t)];
    for (int k = 0; k < g.tokens; ++k) {
      for (int c = 0; c < g.channels; ++c) g(b, t, k, c) = 0.0;
      if (!f.valid[static_cast<std::size_t>(k)]) continue;
      const Vector3d p = f.points[static_cast<std::size_t>(k)] * (scales[static_cast<std::size_t>(t)] / z);
      g(b, t, k, 0) = p.x();
      g(b, t, k, 1) = p.y();
      g(b, t, k, 2) = p.z();
      g(b, t, k, 3) = 1.0;
    }
  }
}

struct DenoiserOptions {
  int steps = 500;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;
  double jitter = 0.2;  // σ of the per-frame log-scale
  int batch = 8;
  int channels = 8;
  int heads = kDefaultHeads;
  int max_time = kDefaultMaxTime;
  int min_time = 2;
  int eval_windows = 16;
  int log_every = 10;
};

struct DenoiserFit {
  MotionModuleParams params;
  std::vector<int> curve_steps;
  std::vector<double> curve;  // held-out loss at curve_steps, first entry at step 0
};

namespace detail {

struct WindowSample {
  std::size_t scene = 0;
  int start = 0;
  std::vector<double> scales;
};

struct DenoiserData {
  std::vector<std::vector<PooledFrame>> scenes;
  int tokens = 0;
};

inline DenoiserData pooled_scenes(std::span<const SceneSequence> scenes) {
  DenoiserData d;
  for (const SceneSequence& s : scenes) {
    std::vector<PooledFrame> frames;
    for (const SceneFrame& f : s.frames) frames.push_back(pool_pointmap(unproject(f.depth, f.intrinsics)));
    const int n = static_cast<int>(frames.front().points.size());
    require(d.scenes.empty() || n == d.tokens, "fit_denoiser: scenes differ in resolution");
    d.tokens = n;
    d.scenes.push_back(std::move(frames));
  }
  return d;
}

inline WindowSample draw_window(const DenoiserData& d, int length, double jitter, CounterRng& rng) {
  WindowSample w;
  w.scene = static_cast<std::size_t>(rng.below(d.scenes.size()));
  const int frames = static_cast<int>(d.scenes[w.scene].size());
  w.start = static_cast<int>(rng.below(static_cast<std::uint64_t>(frames - length + 1)));
  for (int t = 0; t < length; ++t) w.scales.push_back(std::exp(jitter * rng.normal()));
  return w;
}

/// Jittered inputs and clean targets for a batch of equal-length windows.
inline void build_batch(const DenoiserData& d, std::span<const WindowSample> batch, int length, int channels,
                        TokenGrid& input, TokenGrid& target, std::vector<std::uint8_t>& token_valid) {
  const int b = static_cast<int>(batch.size());
  input = TokenGrid(b, length, d.tokens, channels);
  target = TokenGrid(b, length, d.tokens, channels);
  token_valid.assign(static_cast<std::size_t>(b) * length * d.tokens, 0);
  const std::vector<double> ones(static_cast<std::size_t>(length), 1.0);
  for (int i = 0; i < b; ++i) {
    const WindowSample& w = batch[static_cast<std::size_t>(i)];
    const std::span<const PooledFrame> frames(d.scenes[w.scene].data() + w.start, static_cast<std::size_t>(length));
    encode_window(frames, w.scales, input, i);
    encode_window(frames, ones, target, i);
    for (int t = 0; t < length; ++t)
      for (int k = 0; k < d.tokens; ++k)
        token_valid[(static_cast<std::size_t>(i) * length + t) * d.tokens + k] =
            frames[static_cast<std::size_t>(t)].valid[static_cast<std::size_t>(k)];
  }
}

/// Mean squared error over valid tokens; fills dL/d(output) when `dout` is set.
inline double masked_mse(const TokenGrid& out, const TokenGrid& target, const std::vector<std::uint8_t>& valid,
                         TokenGrid* dout) {
  std::size_t n = 0;
  for (std::uint8_t v : valid) n += v;
  if (n == 0) throw EmptyDomainError("denoiser loss: no valid tokens");
  const double inv = 1.0 / static_cast<double>(n * static_cast<std::size_t>(out.channels));
  double loss = 0.0;
  if (dout) *dout = TokenGrid(out.batch, out.time, out.tokens, out.channels);
  for (std::size_t k = 0; k < valid.size(); ++k) {
    if (!valid[k]) continue;
    for (int c = 0; c < out.channels; ++c) {
      const std::size_t i = k * static_cast<std::size_t>(out.channels) + static_cast<std::size_t>(c);
      const double r = out.values[i] - target.values[i];
      loss += r * r;
      if (dout) dout->values[i] = 2.0 * r * inv;
    }
  }
  return loss * inv;
}

struct AdamState {
  MotionModuleParams m, v;
  int step = 0;
};

inline void adam_update(MotionModuleParams& p, const MotionModuleParams& g, AdamState& s, double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++s.step;
  const double c1 = 1.0 - std::pow(b1, s.step);
  const double c2 = 1.0 - std::pow(b2, s.step);
  // Tensors are visited in the same order for all four structures.
  std::vector<double*> pp, mp, vp;
  std::vector<const double*> gp;
  std::vector<Eigen::Index> sizes;
  visit_tensors(p, [&](const std::string&, auto& t) {
    pp.push_back(t.data());
    sizes.push_back(t.size());
  });
  visit_tensors(g, [&](const std::string&, const auto& t) { gp.push_back(t.data()); });
  visit_tensors(s.m, [&](const std::string&, auto& t) { mp.push_back(t.data()); });
  visit_tensors(s.v, [&](const std::string&, auto& t) { vp.push_back(t.data()); });
  for (std::size_t k = 0; k < pp.size(); ++k)
    for (Eigen::Index i = 0; i < sizes[k]; ++i) {
      const double grad = gp[k][i];
      mp[k][i] = b1 * mp[k][i] + (1.0 - b1) * grad;
      vp[k][i] = b2 * vp[k][i] + (1.0 - b2) * grad * grad;
      pp[k][i] -= lr * (mp[k][i] / c1) / (std::sqrt(vp[k][i] / c2) + eps);
    }
}

}  // namespace detail

/// Trains the motion module to undo per-frame scale jitter on pooled
/// self-pointmap windows (window-normalized inputs and targets, Adam).
inline DenoiserFit fit_denoiser(std::span<const SceneSequence> scenes, const DenoiserOptions& opt) {
  require(!scenes.empty(), "fit_denoiser: no scenes");
  require(opt.steps >= 0 && opt.batch >= 1 && opt.eval_windows >= 1 && opt.log_every >= 1,
          "fit_denoiser: invalid step/batch settings");
  require(opt.learning_rate > 0.0 && std::isfinite(opt.learning_rate), "fit_denoiser: learning rate must be positive");
  require(opt.jitter >= 0.0, "fit_denoiser: jitter must be >= 0");
  require(opt.min_time >= 1 && opt.min_time <= opt.max_time, "fit_denoiser: invalid window range");
  for (const SceneSequence& s : scenes)
    require(s.frame_count() >= opt.max_time, "fit_denoiser: scenes shorter than the maximum window");

  const detail::DenoiserData data = detail::pooled_scenes(scenes);
  DenoiserFit fit;
  fit.params = init_params(opt.channels, opt.heads, opt.max_time, opt.seed);

  CounterRng eval_rng(CounterRng::stream_key(opt.seed, 0x4556414cULL));
  std::vector<detail::WindowSample> eval;
  for (int i = 0; i < opt.eval_windows; ++i)
    eval.push_back(detail::draw_window(data, opt.max_time, opt.jitter, eval_rng));
  TokenGrid eval_in, eval_target;
  std::vector<std::uint8_t> eval_valid;
  detail::build_batch(data, eval, opt.max_time, opt.channels, eval_in, eval_target, eval_valid);

  const auto log_eval = [&](int step) {
    const double loss = detail::masked_mse(forward(eval_in, fit.params), eval_target, eval_valid, nullptr);
    if (!std::isfinite(loss)) throw DivergenceError("fit_denoiser: held-out loss is not finite", step);
    fit.curve_steps.push_back(step);
    fit.curve.push_back(loss);
  };
  log_eval(0);

  detail::AdamState adam{zeros_like(fit.params), zeros_like(fit.params), 0};
  CounterRng rng(CounterRng::stream_key(opt.seed, 0x5452414eULL));
  for (int step = 1; step <= opt.steps; ++step) {
    const int length = opt.min_time + static_cast<int>(rng.below(static_cast<std::uint64_t>(opt.max_time - opt.min_time + 1)));
    std::vector<detail::WindowSample> batch;
    for (int i = 0; i < opt.batch; ++i) batch.push_back(detail::draw_window(data, length, opt.jitter, rng));
    TokenGrid in, target, dout;
    std::vector<std::uint8_t> valid;
    detail::build_batch(data, batch, length, opt.channels, in, target, valid);
    ForwardTrace trace;
    const TokenGrid out = forward(in, fit.params, &trace);
    const double loss = detail::masked_mse(out, target, valid, &dout);
    if (!std::isfinite(loss)) throw DivergenceError("fit_denoiser: training loss is not finite", step);
    const MotionModuleParams grad = backward(trace, fit.params, dout);
    detail::adam_update(fit.params, grad, adam, opt.learning_rate);
    if (step % opt.log_every == 0 || step == opt.steps) log_eval(step);
  }
  return fit;
}

/// Applies a trained motion module to a window of pointmaps and reads off one
/// multiplicative scale correction per frame.
class TemporalRefiner {
 public:
  explicit TemporalRefiner(MotionModuleParams params) : params_(std::move(params)) {
    require(params_.channels >= 4, "TemporalRefiner: need at least 4 channels");
  }

  const MotionModuleParams& params() const { return params_; }
  int max_window() const { return params_.max_time; }

  /// Median over valid tokens of ‖out‖/‖in‖ (xyz channels). Windows of one
  /// frame get factor 1.
  std::vector<double> frame_factors(std::span<const Pointmap> window) const {
    const int t_len = static_cast<int>(window.size());
    require(t_len >= 1, "TemporalRefiner: empty window");
    require(t_len <= params_.max_time, "TemporalRefiner: window longer than the module supports");
    std::vector<double> factors(static_cast<std::size_t>(t_len), 1.0);
    if (t_len < 2) return factors;
    std::vector<PooledFrame> frames;
    for (const Pointmap& pm : window) frames.push_back(pool_pointmap(pm));
    const int n = static_cast<int>(frames.front().points.size());
    TokenGrid in(1, t_len, n, params_.channels);
    const std::vector<double> ones(static_cast<std::size_t>(t_len), 1.0);
    encode_window(frames, ones, in, 0);
    const TokenGrid out = forward(in, params_);
    for (int t = 0; t < t_len; ++t) {
      std::vector<double> ratios;
      for (int k = 0; k < n; ++k) {
        if (!frames[static_cast<std::size_t>(t)].valid[static_cast<std::size_t>(k)]) continue;
        const Vector3d a(in(0, t, k, 0), in(0, t, k, 1), in(0, t, k, 2));
        const Vector3d b(out(0, t, k, 0), out(0, t, k, 1), out(0, t, k, 2));
        if (a.norm() > 0.0) ratios.push_back(b.norm() / a.norm());
      }
      if (!ratios.empty()) factors[static_cast<std::size_t>(t)] = median(std::move(ratios));
    }
    return factors;
  }

 private:
  MotionModuleParams params_;
};

}  // namespace dynpoint
