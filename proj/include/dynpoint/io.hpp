#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dynpoint/attention.hpp"
#include "dynpoint/geometry.hpp"
#include "dynpoint/matching.hpp"
#include "dynpoint/scene.hpp"
#include "json.hpp"

namespace dynpoint {

using Json = nlohmann::json;

/// Raised for unreadable, missing or inconsistent files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace fs = std::filesystem;

struct TensorEntry {
  std::string name;
  std::vector<std::size_t> dims;

  std::size_t count() const {
    std::size_t n = 1;
    for (std::size_t d : dims) n *= d;
    return n;
  }
  Json to_json() const { return {{"name", name}, {"dims", dims}, {"dtype", "f32"}, {"order", "row-major"}}; }
  static TensorEntry from_json(const Json& j) {
    if (j.value("dtype", "") != "f32" || j.value("order", "") != "row-major")
      throw FormatError("tensor entry: only row-major f32 is supported");
    return {j.at("name").get<std::string>(), j.at("dims").get<std::vector<std::size_t>>()};
  }
};

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("write failed: " + path.string());
}

inline Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw FormatError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

/// Little-endian f32, independent of host byte order.
inline void write_tensor(const fs::path& path, const std::vector<float>& values) {
  std::string bytes(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint32_t u = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[4 * i + static_cast<std::size_t>(b)] = static_cast<char>((u >> (8 * b)) & 0xFFu);
  }
  write_text(path, bytes);
}

inline std::vector<float> read_tensor(const fs::path& path, const TensorEntry& entry) {
  const std::string bytes = read_text(path);
  if (bytes.size() != 4 * entry.count())
    throw FormatError("tensor " + entry.name + ": expected " + std::to_string(4 * entry.count()) + " bytes, found " +
                      std::to_string(bytes.size()));
  std::vector<float> values(entry.count());
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b)
      u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + static_cast<std::size_t>(b)])) << (8 * b);
    values[i] = std::bit_cast<float>(u);
  }
  return values;
}

/// Tensors listed in a directory's meta.json, stored as <name>.bin.
inline const Json& find_tensor_entry(const Json& meta, const std::string& name) {
  for (const Json& t : meta.at("tensors"))
    if (t.at("name") == name) return t;
  throw FormatError("meta.json lists no tensor named " + name);
}

inline std::vector<float> load_listed_tensor(const fs::path& dir, const Json& meta, const std::string& name) {
  return read_tensor(dir / (name + ".bin"), TensorEntry::from_json(find_tensor_entry(meta, name)));
}

inline std::string frame_name(const char* stem, int frame) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04d", stem, frame);
  return buf;
}

inline std::vector<float> depth_values(const DepthMap& d) {
  std::vector<float> v(d.depth.size(), 0.0f);
  for (std::size_t k = 0; k < v.size(); ++k)
    if (d.valid[k]) v[k] = static_cast<float>(d.depth[k]);
  return v;
}

inline DepthMap depth_from_values(const std::vector<float>& v, int width, int height) {
  DepthMap d(width, height);
  require(v.size() == d.depth.size(), "depth tensor size mismatch");
  for (std::size_t k = 0; k < v.size(); ++k)
    if (v[k] > 0.0f && std::isfinite(v[k])) {
      d.depth[k] = v[k];
      d.valid[k] = 1;
    }
  return d;
}

/// Writes depth_%04d.bin per frame and returns their meta entries.
inline Json write_depth_tensors(const fs::path& dir, const std::vector<DepthMap>& depths) {
  Json entries = Json::array();
  for (std::size_t t = 0; t < depths.size(); ++t) {
    const DepthMap& d = depths[t];
    const TensorEntry e{frame_name("depth", static_cast<int>(t)),
                        {static_cast<std::size_t>(d.height()), static_cast<std::size_t>(d.width())}};
    write_tensor(dir / (e.name + ".bin"), depth_values(d));
    entries.push_back(e.to_json());
  }
  return entries;
}

inline std::vector<DepthMap> read_depth_tensors(const fs::path& dir) {
  const Json meta = read_json(dir / "meta.json");
  std::vector<DepthMap> out;
  for (const Json& t : meta.at("tensors")) {
    const TensorEntry e = TensorEntry::from_json(t);
    if (e.name.rfind("depth_", 0) != 0) continue;
    if (e.dims.size() != 2) throw FormatError("depth tensor " + e.name + " must be 2-D");
    out.push_back(depth_from_values(read_tensor(dir / (e.name + ".bin"), e), static_cast<int>(e.dims[1]),
                                    static_cast<int>(e.dims[0])));
  }
  if (out.empty()) throw FormatError("no depth tensors in " + dir.string());
  return out;
}

// Trajectories: one line per frame, "frame tx ty tz qw qx qy qz", camera-to-world.

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_trajectory(const fs::path& path, const std::vector<Pose>& cam_to_world) {
  std::string text;
  for (std::size_t f = 0; f < cam_to_world.size(); ++f) {
    const Pose& p = cam_to_world[f];
    const Eigen::Quaterniond q(p.rotation);
    text += std::to_string(f);
    for (double v : {p.translation.x(), p.translation.y(), p.translation.z(), q.w(), q.x(), q.y(), q.z()})
      text += " " + format_double(v);
    text += "\n";
  }
  write_text(path, text);
}

inline std::vector<Pose> read_trajectory(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<Pose> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int frame = 0;
    double tx, ty, tz, qw, qx, qy, qz;
    if (!(ls >> frame >> tx >> ty >> tz >> qw >> qx >> qy >> qz))
      throw FormatError("malformed trajectory line in " + path.string() + ": " + line);
    if (frame != static_cast<int>(out.size())) throw FormatError("trajectory frames must be consecutive from 0");
    Pose p;
    p.rotation = Eigen::Quaterniond(qw, qx, qy, qz).normalized().toRotationMatrix();
    p.translation = Vector3d(tx, ty, tz);
    out.push_back(p);
  }
  return out;
}

// Tracks: [{query: {frame, x, y}, frames: [[x, y, z, valid], ...]}, ...]

inline Json tracks_to_json(const TrackArray& tracks, const std::vector<TrackQuery>& queries) {
  require(static_cast<int>(queries.size()) == tracks.queries, "tracks_to_json: query count mismatch");
  Json arr = Json::array();
  for (int q = 0; q < tracks.queries; ++q) {
    const TrackQuery& tq = queries[static_cast<std::size_t>(q)];
    Json frames = Json::array();
    for (int t = 0; t < tracks.frames; ++t) {
      const Vector3d& p = tracks.at(q, t);
      const bool ok = tracks.is_valid(q, t);
      frames.push_back({ok ? p.x() : 0.0, ok ? p.y() : 0.0, ok ? p.z() : 0.0, ok ? 1 : 0});
    }
    arr.push_back({{"query", {{"frame", tq.frame}, {"x", tq.x}, {"y", tq.y}}}, {"frames", frames}});
  }
  return arr;
}

struct TrackFile {
  std::vector<TrackQuery> queries;
  TrackArray tracks;
};

inline TrackFile tracks_from_json(const Json& arr) {
  if (!arr.is_array()) throw FormatError("track file must be a JSON array");
  TrackFile out;
  const int q = static_cast<int>(arr.size());
  const int t = q == 0 ? 0 : static_cast<int>(arr.front().at("frames").size());
  out.tracks = TrackArray(q, t);
  for (int i = 0; i < q; ++i) {
    const Json& e = arr[static_cast<std::size_t>(i)];
    const Json& qj = e.at("query");
    out.queries.push_back({qj.at("frame").get<int>(), qj.at("x").get<int>(), qj.at("y").get<int>()});
    const Json& frames = e.at("frames");
    if (static_cast<int>(frames.size()) != t) throw FormatError("tracks differ in length");
    for (int f = 0; f < t; ++f) {
      const Json& v = frames[static_cast<std::size_t>(f)];
      if (!v.is_array() || v.size() != 4) throw FormatError("track entries must be [x, y, z, valid]");
      out.tracks.set(i, f, Vector3d(v[0].get<double>(), v[1].get<double>(), v[2].get<double>()), v[3].get<int>() != 0);
    }
  }
  return out;
}

// Scene directories.

inline Json scene_config_to_json(const SceneConfig& c) {
  Json j = {{"frame_count", c.frame_count},
            {"height", c.height},
            {"width", c.width},
            {"object_count", c.object_count},
            {"camera_path", std::string(to_string(c.camera_path))},
            {"motion_magnitude", c.motion_magnitude},
            {"seed", c.seed},
            {"object_scale", c.object_scale},
            {"query_count", c.query_count}};
  if (c.object_direction) j["object_direction"] = {c.object_direction->x(), c.object_direction->y(), c.object_direction->z()};
  return j;
}

/// Reads the keys present in `j` over `c`; unknown keys are rejected.
inline SceneConfig scene_config_from_json(const Json& j, SceneConfig c = {}) {
  if (!j.is_object()) throw ContractViolation("scene config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "frame_count") c.frame_count = v.get<int>();
    else if (key == "height") c.height = v.get<int>();
    else if (key == "width") c.width = v.get<int>();
    else if (key == "object_count") c.object_count = v.get<int>();
    else if (key == "camera_path") c.camera_path = camera_path_from_string(v.get<std::string>());
    else if (key == "motion_magnitude") c.motion_magnitude = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "object_scale") c.object_scale = v.get<double>();
    else if (key == "query_count") c.query_count = v.get<int>();
    else if (key == "object_direction") {
      const auto d = v.get<std::array<double, 3>>();
      c.object_direction = Vector3d(d[0], d[1], d[2]);
    } else {
      throw ContractViolation("unknown scene config key: " + key);
    }
  }
  c.validate();
  return c;
}

inline std::vector<TrackQuery> scene_queries(const SceneSequence& s) { return s.tracks.queries; }

/// meta.json, depth/dynamic tensors, poses.txt (camera-to-world), tracks.json.
inline void write_scene_dir(const fs::path& dir, const SceneSequence& s) {
  fs::create_directories(dir);
  Json tensors = write_depth_tensors(dir, [&] {
    std::vector<DepthMap> d;
    for (const SceneFrame& f : s.frames) d.push_back(f.depth);
    return d;
  }());
  for (int t = 0; t < s.frame_count(); ++t) {
    const Mask& m = s.frames[static_cast<std::size_t>(t)].dynamic;
    std::vector<float> v(m.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = m[k] ? 1.0f : 0.0f;
    const TensorEntry e{frame_name("dynamic", t), {static_cast<std::size_t>(s.height()), static_cast<std::size_t>(s.width())}};
    write_tensor(dir / (e.name + ".bin"), v);
    tensors.push_back(e.to_json());
  }
  const Intrinsics& k = s.frames.front().intrinsics;
  Json meta = {{"config", scene_config_to_json(s.config)},
               {"intrinsics", {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}}},
               {"width", s.width()},
               {"height", s.height()},
               {"frame_count", s.frame_count()},
               {"tensors", tensors}};
  write_json(dir / "meta.json", meta);
  std::vector<Pose> c2w;
  for (const SceneFrame& f : s.frames) c2w.push_back(f.pose.inverse());
  write_trajectory(dir / "poses.txt", c2w);
  Json tracks = tracks_to_json(camera_tracks(s.tracks), s.tracks.queries);
  for (std::size_t q = 0; q < tracks.size(); ++q) tracks[q]["dynamic"] = s.tracks.query_dynamic[q] != 0;
  write_json(dir / "tracks.json", tracks);
}

/// Regenerates the scene from meta.json and checks it against the stored depths.
inline SceneSequence load_scene_dir(const fs::path& dir) {
  if (!fs::exists(dir / "meta.json")) throw FormatError("not a scene directory: " + dir.string());
  const Json meta = read_json(dir / "meta.json");
  const SceneConfig cfg = scene_config_from_json(meta.at("config"));
  SceneSequence s = generate_scene(cfg);
  const std::vector<DepthMap> stored = read_depth_tensors(dir);
  if (static_cast<int>(stored.size()) != s.frame_count()) throw FormatError("scene directory frame count mismatch");
  for (int t = 0; t < s.frame_count(); ++t)
    if (depth_values(stored[static_cast<std::size_t>(t)]) != depth_values(s.frames[static_cast<std::size_t>(t)].depth))
      throw FormatError("stored depth of frame " + std::to_string(t) + " does not match the scene config");
  return s;
}

// Motion-module checkpoints: <stem>.bin of f32 tensors in visit order plus
// <stem>.json listing names, dims and offsets.

inline void save_checkpoint(const fs::path& stem, const MotionModuleParams& p) {
  std::vector<float> flat;
  Json tensors = Json::array();
  visit_tensors(p, [&](const std::string& name, const auto& t) {
    using Tensor = std::decay_t<decltype(t)>;
    const Json dims = Tensor::ColsAtCompileTime == 1 ? Json::array({t.rows()}) : Json::array({t.rows(), t.cols()});
    tensors.push_back({{"name", name}, {"dims", dims}, {"offset", flat.size()}, {"dtype", "f32"}, {"order", "row-major"}});
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) flat.push_back(static_cast<float>(t(r, c)));
  });
  fs::path bin = stem;
  bin += ".bin";
  fs::path manifest = stem;
  manifest += ".json";
  write_tensor(bin, flat);
  write_json(manifest, {{"channels", p.channels},
                        {"heads", p.heads},
                        {"max_time", p.max_time},
                        {"values", flat.size()},
                        {"file", bin.filename().string()},
                        {"tensors", tensors}});
}

inline MotionModuleParams load_checkpoint(const fs::path& stem) {
  fs::path manifest = stem;
  manifest += ".json";
  const Json m = read_json(manifest);
  MotionModuleParams p = init_params(m.at("channels").get<int>(), m.at("heads").get<int>(), m.at("max_time").get<int>(), 0);
  const fs::path bin = manifest.parent_path() / m.at("file").get<std::string>();
  const std::vector<float> flat = read_tensor(bin, {"checkpoint", {m.at("values").get<std::size_t>()}});
  const Json& tensors = m.at("tensors");
  std::size_t idx = 0;
  visit_tensors(p, [&](const std::string& name, auto& t) {
    if (idx >= tensors.size() || tensors[idx].at("name") != name) throw FormatError("checkpoint tensor order mismatch at " + name);
    std::size_t off = tensors[idx].at("offset").get<std::size_t>();
    if (off + static_cast<std::size_t>(t.size()) > flat.size()) throw FormatError("checkpoint truncated at " + name);
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = flat[off++];
    ++idx;
  });
  return p;
}

}  // namespace dynpoint
