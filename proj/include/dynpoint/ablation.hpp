#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "dynpoint/config.hpp"
#include "dynpoint/denoiser.hpp"
#include "dynpoint/io.hpp"
#include "dynpoint/metrics.hpp"
#include "dynpoint/pipelines.hpp"
#include "dynpoint/predictor.hpp"
#include "dynpoint/random.hpp"
#include "dynpoint/scene.hpp"

namespace dynpoint {

inline std::vector<PixelQuery> pixel_queries(const SceneSequence& s) {
  std::vector<PixelQuery> out;
  for (const TrackQuery& q : s.tracks.queries) {
    require(q.frame == 0, "queries must start on frame 0");
    out.push_back({q.x, q.y});
  }
  return out;
}

inline TrackArray select_queries(const TrackArray& a, const std::vector<int>& rows) {
  TrackArray out(static_cast<int>(rows.size()), a.frames);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int t = 0; t < a.frames; ++t) out.set(static_cast<int>(r), t, a.at(rows[r], t), a.is_valid(rows[r], t));
  return out;
}

enum AblationTag : std::uint64_t { kTagFitScenes = 0xF17, kTagWindowScenes = 0xAB1, kTagHeadScenes = 0xAB2 };

/// Training scenes for the motion module, derived from the run seed.
inline std::vector<SceneSequence> fit_scenes(const RunConfig& cfg) {
  std::vector<SceneSequence> out;
  for (int i = 0; i < cfg.fit.scenes; ++i) {
    SceneConfig c = cfg.scene;
    c.frame_count = cfg.fit.frames;
    c.seed = CounterRng::stream_key(cfg.seed, kTagFitScenes, i);
    out.push_back(generate_scene(c));
  }
  return out;
}

inline DenoiserFit fit_from_config(const RunConfig& cfg) {
  DenoiserOptions o = cfg.fit.options;
  o.seed = cfg.seed;
  const std::vector<SceneSequence> scenes = fit_scenes(cfg);
  return fit_denoiser(scenes, o);
}

struct WindowAblationRow {
  int window = 1;
  int overlap = 0;
  bool refined = false;
  std::vector<double> apd;  // per scene
  double mean = 0.0;
};

struct HeadAblation {
  int seeds = 0;
  int matched_wins = 0;
  int without_dynamic = 0;  // seeds whose first frame shows no moving object
  std::vector<double> matched;  // APD on dynamic queries, NaN when absent
  std::vector<double> rigid;
};

struct AblationReport {
  std::vector<WindowAblationRow> windows;
  HeadAblation heads;
};

/// Tracking APD over `windows`, each on the same jittered-oracle scenes.
/// Window 1 is plain pairwise tracking; longer windows use the refiner.
inline std::vector<WindowAblationRow> window_ablation(const RunConfig& cfg, const TemporalRefiner& refiner,
                                                      const std::vector<int>& windows = {1, 6, 12}) {
  std::vector<WindowAblationRow> rows;
  for (int w : windows) {
    WindowAblationRow r;
    r.window = w;
    r.overlap = w == 1 ? 0 : std::min(cfg.overlap, w - 1);
    r.refined = w > 1;
    rows.push_back(r);
  }
  for (int k = 0; k < cfg.ablation.scenes; ++k) {
    SceneConfig c = cfg.scene;
    c.frame_count = cfg.ablation.frames;
    c.seed = CounterRng::stream_key(cfg.seed, kTagWindowScenes, k);
    const SceneSequence s = generate_scene(c);
    const OraclePredictor oracle(s, {cfg.ablation.noise, cfg.ablation.jitter, c.seed, false});
    const std::vector<PixelQuery> queries = pixel_queries(s);
    const TrackArray gt = camera_tracks(s.tracks);
    for (WindowAblationRow& r : rows) {
      TrackOptions o;
      o.window = r.window;
      o.overlap = r.overlap;
      o.refiner = r.refined ? &refiner : nullptr;
      r.apd.push_back(apd(track_3d(oracle, queries, o).tracks, gt).apd);
    }
    std::fprintf(stderr, "ablate: window scene %d/%d\n", k + 1, cfg.ablation.scenes);
  }
  for (WindowAblationRow& r : rows) r.mean = mean(r.apd);
  return rows;
}

/// Matched vs rigid tracking outputs on queries that start on moving objects.
inline HeadAblation head_ablation(const RunConfig& cfg, const TemporalRefiner* refiner) {
  HeadAblation h;
  h.seeds = cfg.ablation.head_seeds;
  for (int k = 0; k < h.seeds; ++k) {
    SceneConfig c = cfg.scene;
    c.frame_count = cfg.ablation.head_frames;
    c.object_scale = cfg.ablation.head_object_scale;
    c.object_count = cfg.ablation.head_object_count;
    c.seed = CounterRng::stream_key(cfg.seed, kTagHeadScenes, k);
    const SceneSequence s = generate_scene(c);
    std::vector<int> dynamic_rows;
    for (std::size_t q = 0; q < s.tracks.query_dynamic.size(); ++q)
      if (s.tracks.query_dynamic[q]) dynamic_rows.push_back(static_cast<int>(q));
    if (dynamic_rows.empty()) {
      ++h.without_dynamic;
      h.matched.push_back(std::nan(""));
      h.rigid.push_back(std::nan(""));
      continue;
    }
    const OraclePredictor oracle(s, {cfg.ablation.noise, cfg.ablation.jitter, c.seed, false});
    const std::vector<PixelQuery> queries = pixel_queries(s);
    const TrackArray gt = select_queries(camera_tracks(s.tracks), dynamic_rows);
    TrackOptions o;
    o.window = std::min(cfg.window, refiner ? refiner->max_window() : cfg.window);
    o.overlap = o.window == 1 ? 0 : std::min(cfg.overlap, o.window - 1);
    o.refiner = refiner;
    const double m = apd(select_queries(track_3d(oracle, queries, o).tracks, dynamic_rows), gt).apd;
    o.head = HeadRole::kRigid;
    const double r = apd(select_queries(track_3d(oracle, queries, o).tracks, dynamic_rows), gt).apd;
    h.matched.push_back(m);
    h.rigid.push_back(r);
    if (m > r) ++h.matched_wins;
  }
  return h;
}

inline Json ablation_to_json(const AblationReport& r) {
  const auto nullable = [](const std::vector<double>& v) {
    Json a = Json::array();
    for (double x : v) a.push_back(std::isnan(x) ? Json(nullptr) : Json(x));
    return a;
  };
  Json rows = Json::array();
  for (const WindowAblationRow& w : r.windows)
    rows.push_back({{"window", w.window}, {"overlap", w.overlap}, {"refined", w.refined}, {"apd", w.apd}, {"mean_apd", w.mean}});
  return {{"windows", rows},
          {"heads",
           {{"seeds", r.heads.seeds},
            {"matched_wins", r.heads.matched_wins},
            {"without_dynamic", r.heads.without_dynamic},
            {"matched_apd", nullable(r.heads.matched)},
            {"rigid_apd", nullable(r.heads.rigid)}}}};
}

inline std::string ablation_markdown(const AblationReport& r) {
  std::string md = "| window | overlap | refined | mean APD |\n|---|---|---|---|\n";
  char buf[128];
  for (const WindowAblationRow& w : r.windows) {
    std::snprintf(buf, sizeof buf, "| %d | %d | %s | %.2f |\n", w.window, w.overlap, w.refined ? "yes" : "no", w.mean);
    md += buf;
  }
  std::vector<double> m, g;
  for (std::size_t k = 0; k < r.heads.matched.size(); ++k)
    if (!std::isnan(r.heads.matched[k])) {
      m.push_back(r.heads.matched[k]);
      g.push_back(r.heads.rigid[k]);
    }
  md += "\n| tracking output | mean APD (dynamic queries) |\n|---|---|\n";
  std::snprintf(buf, sizeof buf, "| matched | %.2f |\n| rigid | %.2f |\n", m.empty() ? 0.0 : mean(m), g.empty() ? 0.0 : mean(g));
  md += buf;
  std::snprintf(buf, sizeof buf, "\nmatched beats rigid on %d of %d seeds\n", r.heads.matched_wins, r.heads.seeds);
  md += buf;
  return md;
}

}  // namespace dynpoint
