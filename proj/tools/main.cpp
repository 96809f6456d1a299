// dynpoint command-line front end. Machine output goes to files under --out,
// progress to stderr, and failures to stdout as {"error": {...}}.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dynpoint/dynpoint.hpp"

namespace fs = std::filesystem;
using namespace dynpoint;

namespace {

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  int window = 0, overlap = 0, stride = 0;
  double noise = 0.0, jitter = 0.0;
  bool use_dynamic_mask = true;
  std::string checkpoint;
  CLI::Option *o_seed, *o_window, *o_overlap, *o_stride, *o_noise, *o_jitter, *o_mask, *o_checkpoint;
};

RunConfig resolve_config(const Flags& f) {
  RunConfig cfg;
  if (!f.config.empty()) cfg = apply_config_json(read_json(f.config));
  if (f.o_seed->count()) cfg.seed = f.seed;
  if (f.o_window->count()) cfg.window = f.window;
  if (f.o_overlap->count()) cfg.overlap = f.overlap;
  if (f.o_stride->count()) cfg.stride = f.stride;
  if (f.o_noise->count()) cfg.noise = f.noise;
  if (f.o_jitter->count()) cfg.jitter = f.jitter;
  if (f.o_mask->count()) cfg.use_dynamic_mask = f.use_dynamic_mask;
  if (f.o_checkpoint->count()) cfg.checkpoint = f.checkpoint;
  cfg.validate();
  return cfg;
}

fs::path out_dir(const Flags& f) {
  if (f.out.empty()) throw ContractViolation("--out is required");
  fs::create_directories(f.out);
  return f.out;
}

Json report_json(const TrackEvalReport& r) {
  return {{"apd", r.apd}, {"accuracy", r.accuracy}, {"levels", kApdLevels}, {"horizon", r.horizon},
          {"scale", r.scale}, {"points", r.points}};
}

Json report_json(const DepthEvalReport& r) {
  return {{"abs_rel", r.abs_rel}, {"delta_125", r.delta_125}, {"alignment", std::string(to_string(r.alignment))},
          {"scale", r.scale}, {"shift", r.shift}, {"pixels", r.pixels}};
}

Json report_json(const PoseEvalReport& r) {
  return {{"ate", r.ate}, {"rpe_trans", r.rpe_trans}, {"rpe_rot_deg", r.rpe_rot}, {"scale", r.scale}};
}

std::vector<DepthMap> scene_depths(const SceneSequence& s) {
  std::vector<DepthMap> d;
  for (const SceneFrame& f : s.frames) d.push_back(f.depth);
  return d;
}

std::vector<Pose> scene_trajectory(const SceneSequence& s) {
  std::vector<Pose> c2w;
  for (const SceneFrame& f : s.frames) c2w.push_back(f.pose.inverse());
  return c2w;
}

std::optional<TemporalRefiner> load_refiner(const RunConfig& cfg) {
  if (!cfg.checkpoint) return std::nullopt;
  return TemporalRefiner(load_checkpoint(*cfg.checkpoint));
}

void cmd_synth(const RunConfig& cfg, const fs::path& out) {
  const SceneSequence s = generate_scene(cfg.scene_config());
  write_scene_dir(out, s);
  std::fprintf(stderr, "synth: %d frames, dynamic fraction %.3f -> %s\n", s.frame_count(), dynamic_fraction(s),
               out.string().c_str());
}

void cmd_track(const RunConfig& cfg, const fs::path& scene_dir, const fs::path& out) {
  const SceneSequence s = load_scene_dir(scene_dir);
  const OraclePredictor oracle(s, cfg.oracle());
  const std::optional<TemporalRefiner> refiner = load_refiner(cfg);
  TrackOptions o;
  o.window = cfg.window;
  o.overlap = cfg.effective_overlap(std::min(cfg.window, s.frame_count()));
  o.refiner = refiner && cfg.window > 1 ? &*refiner : nullptr;
  const TrackResult r = track_3d(oracle, pixel_queries(s), o);
  write_json(out / "tracks.json", tracks_to_json(r.tracks, s.tracks.queries));
  Json rep = {{"command", "track"},
              {"config", config_to_json(cfg)},
              {"refined", o.refiner != nullptr},
              {"window_scales", r.window_scales},
              {"lost_queries", r.lost_queries}};
  if (s.tracks.queries.empty()) {
    rep["metrics"] = nullptr;
  } else {
    rep["metrics"] = report_json(apd(r.tracks, camera_tracks(s.tracks)));
  }
  write_json(out / "report.json", rep);
  std::fprintf(stderr, "track: %d queries over %d frames\n", r.tracks.queries, r.tracks.frames);
}

void cmd_depth(const RunConfig& cfg, const fs::path& scene_dir, const fs::path& out) {
  const SceneSequence s = load_scene_dir(scene_dir);
  const OraclePredictor oracle(s, cfg.oracle());
  const std::optional<TemporalRefiner> refiner = load_refiner(cfg);
  DepthOptions o;
  o.window = cfg.window;
  o.overlap = cfg.effective_overlap(std::min(cfg.window, s.frame_count()));
  o.refiner = refiner && cfg.window > 1 ? &*refiner : nullptr;
  const std::vector<DepthMap> depths = video_depth(oracle, o);
  write_json(out / "meta.json", {{"tensors", write_depth_tensors(out, depths)}});
  const std::vector<DepthMap> gt = scene_depths(s);
  write_json(out / "report.json", {{"command", "depth"},
                                   {"config", config_to_json(cfg)},
                                   {"refined", o.refiner != nullptr},
                                   {"scale", report_json(depth_metrics(depths, gt, DepthAlignment::kScale))},
                                   {"scale_shift", report_json(depth_metrics(depths, gt, DepthAlignment::kScaleShift))}});
  std::fprintf(stderr, "depth: %zu frames\n", depths.size());
}

void cmd_recon(const RunConfig& cfg, const fs::path& scene_dir, const fs::path& out) {
  const SceneSequence s = load_scene_dir(scene_dir);
  const OraclePredictor oracle(s, cfg.oracle());
  const int length = s.frame_count();
  const int window = std::min(cfg.window, length);
  std::vector<int> frames;
  for (int t = length - window; t < length; ++t) frames.push_back(t);
  const PointCloud cloud = feedforward_recon(oracle, frames);
  std::vector<float> pts, src;
  for (std::size_t k = 0; k < cloud.points.size(); ++k) {
    for (int c = 0; c < 3; ++c) pts.push_back(static_cast<float>(cloud.points[k][c]));
    src.push_back(static_cast<float>(cloud.frame[k]));
  }
  const TensorEntry points{"points", {cloud.points.size(), 3}};
  const TensorEntry frame{"frame", {cloud.points.size()}};
  write_tensor(out / "points.bin", pts);
  write_tensor(out / "frame.bin", src);
  write_json(out / "meta.json", {{"tensors", {points.to_json(), frame.to_json()}}, {"keyframe", frames.back()}});

  // Error against the noiseless rigid cloud of the same pixels.
  double se = 0.0;
  std::size_t n = 0;
  for (int t : frames) {
    const Pointmap gt = gt_rigid_pointmap(s, frames.back(), t);
    for (std::size_t k = 0; k < cloud.points.size(); ++k)
      if (cloud.frame[k] == t && gt.valid[static_cast<std::size_t>(cloud.pixel[k])]) {
        se += (cloud.points[k] - gt.points[static_cast<std::size_t>(cloud.pixel[k])]).squaredNorm();
        ++n;
      }
  }
  write_json(out / "report.json", {{"command", "recon"},
                                   {"config", config_to_json(cfg)},
                                   {"keyframe", frames.back()},
                                   {"frames", frames},
                                   {"points", cloud.points.size()},
                                   {"rmse", n == 0 ? Json(nullptr) : Json(std::sqrt(se / static_cast<double>(n)))}});
  std::fprintf(stderr, "recon: %zu points from %zu frames\n", cloud.points.size(), frames.size());
}

void cmd_align(const RunConfig& cfg, const fs::path& scene_dir, const fs::path& out) {
  const SceneSequence s = load_scene_dir(scene_dir);
  const OraclePredictor oracle(s, cfg.oracle());
  const AlignmentProblem pb = build_pair_graph(oracle, cfg.stride);
  const AlignmentResult r = global_align(pb, cfg.align_options());
  write_trajectory(out / "trajectory.txt", r.cam_to_world);
  const std::vector<Pose> gt = scene_trajectory(s);
  write_json(out / "report.json", {{"command", "align"},
                                   {"config", config_to_json(cfg)},
                                   {"edges", pb.edges.size()},
                                   {"iterations", r.iterations},
                                   {"converged", r.converged},
                                   {"energy", r.energy},
                                   {"energy_trace", r.energy_trace},
                                   {"scales", r.scales},
                                   {"metrics", report_json(trajectory_metrics(r.cam_to_world, gt))}});
  std::fprintf(stderr, "align: %zu edges, %d iterations, energy %.6g\n", pb.edges.size(), r.iterations, r.energy);
}

fs::path in_dir_or_file(const fs::path& p, const char* file) { return fs::is_directory(p) ? p / file : p; }

void cmd_eval(const RunConfig& cfg, const std::string& kind, const fs::path& pred, const fs::path& gt,
              const fs::path& out_file) {
  Json rep = {{"command", "eval"}, {"kind", kind}};
  if (kind == "depth") {
    const std::vector<DepthMap> p = read_depth_tensors(pred), g = read_depth_tensors(gt);
    rep["metrics"] = report_json(depth_metrics(p, g, cfg.depth_alignment));
  } else if (kind == "tracks") {
    const TrackFile p = tracks_from_json(read_json(in_dir_or_file(pred, "tracks.json")));
    const TrackFile g = tracks_from_json(read_json(in_dir_or_file(gt, "tracks.json")));
    if (p.queries != g.queries) throw ContractViolation("eval tracks: query lists differ");
    rep["metrics"] = report_json(apd(p.tracks, g.tracks));
  } else if (kind == "poses") {
    const std::vector<Pose> p = read_trajectory(in_dir_or_file(pred, "trajectory.txt"));
    const std::vector<Pose> g = read_trajectory(in_dir_or_file(gt, "poses.txt"));
    rep["metrics"] = report_json(trajectory_metrics(p, g));
  } else {
    throw ContractViolation("eval: kind must be depth, tracks or poses");
  }
  if (out_file.has_parent_path()) fs::create_directories(out_file.parent_path());
  write_json(out_file, rep);
}

void cmd_fit(const RunConfig& cfg, const fs::path& out) {
  const DenoiserFit fit = fit_from_config(cfg);
  save_checkpoint(out / "motion", fit.params);
  write_json(out / "curve.json", {{"config", config_to_json(cfg)}, {"steps", fit.curve_steps}, {"loss", fit.curve}});
  std::fprintf(stderr, "fit: held-out loss %.6g -> %.6g\n", fit.curve.front(), fit.curve.back());
}

void cmd_ablate(const RunConfig& cfg, const fs::path& out) {
  MotionModuleParams params;
  if (cfg.checkpoint) {
    params = load_checkpoint(*cfg.checkpoint);
  } else {
    std::fprintf(stderr, "ablate: training the motion module\n");
    params = fit_from_config(cfg).params;
  }
  const TemporalRefiner refiner(params);
  AblationReport r;
  r.windows = window_ablation(cfg, refiner);
  r.heads = head_ablation(cfg, &refiner);
  Json j = ablation_to_json(r);
  j["config"] = config_to_json(cfg);
  write_json(out / "ablation.json", j);
  write_text(out / "ablation.md", ablation_markdown(r));
  std::fprintf(stderr, "%s", ablation_markdown(r).c_str());
}

int fail(const std::string& type, const std::string& message, int code, std::optional<int> iteration = std::nullopt) {
  Json e = {{"type", type}, {"message", message}};
  if (iteration) e["iteration"] = *iteration;
  std::cout << Json{{"error", e}}.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynpoint: dynamic pointmap toolkit on synthetic scenes"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON run config (defaults < config < flags)");
  f.o_seed = app.add_option("--seed", f.seed, "run seed");
  app.add_option("--out", f.out, "output directory (eval: report file)");
  f.o_window = app.add_option("--window", f.window, "temporal window length");
  f.o_overlap = app.add_option("--overlap", f.overlap, "overlap between windows");
  f.o_stride = app.add_option("--stride", f.stride, "alignment pair-graph stride");
  f.o_noise = app.add_option("--noise", f.noise, "oracle point noise relative to depth");
  f.o_jitter = app.add_option("--jitter", f.jitter, "oracle per-pair log-scale sigma");
  f.o_mask = app.add_option("--use-dynamic-mask", f.use_dynamic_mask, "mask moving pixels in alignment (true/false)");
  f.o_checkpoint = app.add_option("--checkpoint", f.checkpoint, "motion module checkpoint stem");

  std::string scene, kind, pred, gt;
  app.add_subcommand("synth", "generate a scene directory");
  for (const char* name : {"track", "depth", "recon", "align"})
    app.add_subcommand(name, std::string("run ") + name + " on a scene directory")->add_option("scene", scene)->required();
  CLI::App* eval = app.add_subcommand("eval", "score predictions against ground truth");
  eval->add_option("kind", kind)->required()->check(CLI::IsMember({"depth", "tracks", "poses"}));
  eval->add_option("pred", pred)->required();
  eval->add_option("gt", gt)->required();
  app.add_subcommand("fit", "train the motion module on synthetic scenes");
  app.add_subcommand("ablate", "window and tracking-output ablations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    const RunConfig cfg = resolve_config(f);
    if (cmd == "eval") {
      if (f.out.empty()) throw ContractViolation("--out is required");
      cmd_eval(cfg, kind, pred, gt, f.out);
      return 0;
    }
    if (cmd != "synth" && cmd != "fit" && cmd != "ablate" && !fs::exists(scene))
      throw FormatError("scene directory does not exist: " + scene);
    const fs::path out = out_dir(f);
    if (cmd == "synth") cmd_synth(cfg, out);
    else if (cmd == "track") cmd_track(cfg, scene, out);
    else if (cmd == "depth") cmd_depth(cfg, scene, out);
    else if (cmd == "recon") cmd_recon(cfg, scene, out);
    else if (cmd == "align") cmd_align(cfg, scene, out);
    else if (cmd == "fit") cmd_fit(cfg, out);
    else if (cmd == "ablate") cmd_ablate(cfg, out);
  } catch (const DivergenceError& e) {
    return fail("divergence", e.what(), 1, e.iteration());
  } catch (const EmptyDomainError& e) {
    return fail("empty_domain", e.what(), 1);
  } catch (const FormatError& e) {
    return fail("format", e.what(), 1);
  } catch (const ContractViolation& e) {
    return fail("invalid_argument", e.what(), 1);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
