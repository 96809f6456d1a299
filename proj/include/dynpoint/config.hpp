#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "dynpoint/align.hpp"
#include "dynpoint/denoiser.hpp"
#include "dynpoint/io.hpp"
#include "dynpoint/metrics.hpp"
#include "dynpoint/pipelines.hpp"
#include "dynpoint/scene.hpp"

namespace dynpoint {

inline DepthAlignment depth_alignment_from_string(const std::string& s) {
  if (s == "none") return DepthAlignment::kNone;
  if (s == "scale") return DepthAlignment::kScale;
  if (s == "scale_shift") return DepthAlignment::kScaleShift;
  throw ContractViolation("unknown depth alignment: " + s);
}

/// Settings of the ablation command.
struct AblationSettings {
  int scenes = 12;             // window study
  int frames = 40;
  double jitter = 0.2;
  double noise = 0.0;
  int head_seeds = 50;         // matched vs rigid study
  int head_frames = 24;
  double head_object_scale = 1.8;
  int head_object_count = 3;
};

/// Settings for training the motion module from synthetic scenes.
struct FitSettings {
  DenoiserOptions options;
  int scenes = 4;
  int frames = 16;
};

/// Every command reads one of these. Precedence: defaults < config file < flags.
/// One seed drives scene synthesis, oracle corruption and training.
struct RunConfig {
  std::uint64_t seed = 0;
  int window = kDefaultWindow;
  int overlap = kDefaultOverlap;
  int stride = 1;
  double noise = 0.0;   // per-coordinate point noise relative to depth
  double jitter = 0.0;  // σ of the per-pair log-scale
  bool confidence_aware = false;
  bool use_dynamic_mask = true;
  double pixel_weight = kDefaultPixelWeight;
  int max_iters = 200;
  double tol = 1e-6;
  DepthAlignment depth_alignment = DepthAlignment::kScale;
  std::optional<std::string> checkpoint;
  SceneConfig scene;
  FitSettings fit;
  AblationSettings ablation;

  void validate() const {
    require(window >= 1, "config: window must be >= 1");
    require(overlap >= 0, "config: overlap must be >= 0");
    require(stride >= 1, "config: stride must be >= 1");
    require(std::isfinite(noise) && noise >= 0.0, "config: noise must be >= 0");
    require(std::isfinite(jitter) && jitter >= 0.0, "config: jitter must be >= 0");
    require(std::isfinite(pixel_weight) && pixel_weight >= 0.0, "config: pixel_weight must be >= 0");
    require(max_iters >= 0, "config: max_iters must be >= 0");
    require(std::isfinite(tol) && tol >= 0.0, "config: tol must be >= 0");
    scene.validate();
    require(fit.scenes >= 1 && fit.frames >= fit.options.max_time, "config: fit needs scenes of at least max_time frames");
    require(fit.options.steps >= 0 && fit.options.batch >= 1, "config: invalid fit steps or batch");
    require(fit.options.learning_rate > 0.0, "config: learning_rate must be > 0");
    require(ablation.scenes >= 1 && ablation.frames >= 2, "config: invalid ablation scenes");
    require(ablation.head_seeds >= 1 && ablation.head_frames >= 2, "config: invalid ablation head study");
  }

  /// Overlap clamped below the window; pairwise runs have none.
  int effective_overlap(int w) const { return w <= 1 ? 0 : std::min(overlap, w - 1); }

  OracleSettings oracle() const { return {noise, jitter, seed, confidence_aware}; }

  AlignOptions align_options() const {
    AlignOptions o;
    o.max_iters = max_iters;
    o.tol = tol;
    o.pixel_weight = pixel_weight;
    o.use_dynamic_mask = use_dynamic_mask;
    return o;
  }

  SceneConfig scene_config() const {
    SceneConfig c = scene;
    c.seed = seed;
    return c;
  }
};

namespace detail {

template <typename F>
void for_keys(const Json& j, const char* section, F&& f) {
  if (!j.is_object()) throw ContractViolation(std::string("config: ") + section + " must be a JSON object");
  for (const auto& [key, v] : j.items())
    if (!f(key, v)) throw ContractViolation(std::string("config: unknown key ") + section + "." + key);
}

}  // namespace detail

/// Reads the keys present in `j` over `cfg`. Type errors and unknown keys throw.
inline RunConfig apply_config_json(const Json& j, RunConfig cfg = {}) {
  try {
    detail::for_keys(j, "root", [&](const std::string& k, const Json& v) {
      if (k == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (k == "window") cfg.window = v.get<int>();
      else if (k == "overlap") cfg.overlap = v.get<int>();
      else if (k == "stride") cfg.stride = v.get<int>();
      else if (k == "noise") cfg.noise = v.get<double>();
      else if (k == "jitter") cfg.jitter = v.get<double>();
      else if (k == "confidence_aware") cfg.confidence_aware = v.get<bool>();
      else if (k == "use_dynamic_mask") cfg.use_dynamic_mask = v.get<bool>();
      else if (k == "pixel_weight") cfg.pixel_weight = v.get<double>();
      else if (k == "max_iters") cfg.max_iters = v.get<int>();
      else if (k == "tol") cfg.tol = v.get<double>();
      else if (k == "depth_alignment") cfg.depth_alignment = depth_alignment_from_string(v.get<std::string>());
      else if (k == "checkpoint") cfg.checkpoint = v.get<std::string>();
      else if (k == "scene") {
        if (v.contains("seed")) throw ContractViolation("config: the scene seed is the top-level seed");
        cfg.scene = scene_config_from_json(v, cfg.scene);
      } else if (k == "fit") {
        detail::for_keys(v, "fit", [&](const std::string& fk, const Json& fv) {
          DenoiserOptions& o = cfg.fit.options;
          if (fk == "steps") o.steps = fv.get<int>();
          else if (fk == "learning_rate") o.learning_rate = fv.get<double>();
          else if (fk == "jitter") o.jitter = fv.get<double>();
          else if (fk == "batch") o.batch = fv.get<int>();
          else if (fk == "eval_windows") o.eval_windows = fv.get<int>();
          else if (fk == "log_every") o.log_every = fv.get<int>();
          else if (fk == "scenes") cfg.fit.scenes = fv.get<int>();
          else if (fk == "frames") cfg.fit.frames = fv.get<int>();
          else return false;
          return true;
        });
      } else if (k == "ablation") {
        detail::for_keys(v, "ablation", [&](const std::string& ak, const Json& av) {
          AblationSettings& a = cfg.ablation;
          if (ak == "scenes") a.scenes = av.get<int>();
          else if (ak == "frames") a.frames = av.get<int>();
          else if (ak == "jitter") a.jitter = av.get<double>();
          else if (ak == "noise") a.noise = av.get<double>();
          else if (ak == "head_seeds") a.head_seeds = av.get<int>();
          else if (ak == "head_frames") a.head_frames = av.get<int>();
          else if (ak == "head_object_scale") a.head_object_scale = av.get<double>();
          else if (ak == "head_object_count") a.head_object_count = av.get<int>();
          else return false;
          return true;
        });
      } else {
        return false;
      }
      return true;
    });
  } catch (const Json::exception& e) {
    throw ContractViolation(std::string("config: wrong value type: ") + e.what());
  }
  return cfg;
}

inline Json config_to_json(const RunConfig& c) {
  Json scene = scene_config_to_json(c.scene);
  scene.erase("seed");
  Json j = {{"seed", c.seed},
            {"window", c.window},
            {"overlap", c.overlap},
            {"stride", c.stride},
            {"noise", c.noise},
            {"jitter", c.jitter},
            {"confidence_aware", c.confidence_aware},
            {"use_dynamic_mask", c.use_dynamic_mask},
            {"pixel_weight", c.pixel_weight},
            {"max_iters", c.max_iters},
            {"tol", c.tol},
            {"depth_alignment", std::string(to_string(c.depth_alignment))},
            {"scene", scene},
            {"fit",
             {{"steps", c.fit.options.steps},
              {"learning_rate", c.fit.options.learning_rate},
              {"jitter", c.fit.options.jitter},
              {"batch", c.fit.options.batch},
              {"eval_windows", c.fit.options.eval_windows},
              {"log_every", c.fit.options.log_every},
              {"scenes", c.fit.scenes},
              {"frames", c.fit.frames}}},
            {"ablation",
             {{"scenes", c.ablation.scenes},
              {"frames", c.ablation.frames},
              {"jitter", c.ablation.jitter},
              {"noise", c.ablation.noise},
              {"head_seeds", c.ablation.head_seeds},
              {"head_frames", c.ablation.head_frames},
              {"head_object_scale", c.ablation.head_object_scale},
              {"head_object_count", c.ablation.head_object_count}}}};
  if (c.checkpoint) j["checkpoint"] = *c.checkpoint;
  return j;
}

}  // namespace dynpoint
