#include <gtest/gtest.h>

#include <random>

#include "dynpoint/config.hpp"
#include "dynpoint/io.hpp"

using namespace dynpoint;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("dynpoint_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Tensor, RoundTripIsBitExactLittleEndian) {
  const fs::path dir = scratch("tensor");
  const std::vector<float> v{1.0f, -0.0f, 3.25e-7f, std::numeric_limits<float>::infinity(), 1e30f, 0.1f};
  write_tensor(dir / "t.bin", v);
  const std::string bytes = read_text(dir / "t.bin");
  ASSERT_EQ(bytes.size(), 24u);
  // 1.0f is 0x3f800000
  EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 0x00);
  EXPECT_EQ(static_cast<unsigned char>(bytes[2]), 0x80);
  EXPECT_EQ(static_cast<unsigned char>(bytes[3]), 0x3f);
  const std::vector<float> back = read_tensor(dir / "t.bin", {"t", {2, 3}});
  for (std::size_t i = 0; i < v.size(); ++i)
    EXPECT_EQ(std::bit_cast<std::uint32_t>(back[i]), std::bit_cast<std::uint32_t>(v[i]));
}

TEST(Tensor, LengthMismatchAndBadEntriesRejected) {
  const fs::path dir = scratch("tensor_bad");
  write_tensor(dir / "t.bin", std::vector<float>(5, 1.0f));
  EXPECT_THROW(read_tensor(dir / "t.bin", {"t", {2, 3}}), FormatError);
  EXPECT_THROW(read_tensor(dir / "missing.bin", {"t", {1}}), FormatError);
  EXPECT_THROW(TensorEntry::from_json({{"name", "t"}, {"dims", {1}}, {"dtype", "f64"}, {"order", "row-major"}}),
               FormatError);
  const TensorEntry e{"x", {4, 2}};
  EXPECT_EQ(TensorEntry::from_json(e.to_json()).dims, e.dims);
}

TEST(Trajectory, RoundTrip) {
  const fs::path dir = scratch("traj");
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<Pose> poses;
  for (int k = 0; k < 5; ++k) poses.push_back({so3_exp(Vector3d(nd(rng), nd(rng), nd(rng))), Vector3d(nd(rng), nd(rng), nd(rng))});
  write_trajectory(dir / "t.txt", poses);
  const std::vector<Pose> back = read_trajectory(dir / "t.txt");
  ASSERT_EQ(back.size(), poses.size());
  for (std::size_t k = 0; k < poses.size(); ++k) {
    EXPECT_EQ(back[k].translation, poses[k].translation);
    EXPECT_LT((back[k].rotation - poses[k].rotation).norm(), 1e-14);
  }
  write_text(dir / "gap.txt", "0 0 0 0 1 0 0 0\n2 0 0 0 1 0 0 0\n");
  EXPECT_THROW(read_trajectory(dir / "gap.txt"), FormatError);
  write_text(dir / "short.txt", "0 0 0 0 1 0 0\n");
  EXPECT_THROW(read_trajectory(dir / "short.txt"), FormatError);
}

TEST(Tracks, JsonRoundTrip) {
  TrackArray t(2, 3);
  t.set(0, 0, Vector3d(0.1, 0.2, 3.0), true);
  t.set(1, 2, Vector3d(-1.0, 0.5, 2.5), true);
  const std::vector<TrackQuery> q{{0, 4, 5}, {0, 7, 1}};
  const TrackFile back = tracks_from_json(Json::parse(tracks_to_json(t, q).dump()));
  ASSERT_EQ(back.tracks.queries, 2);
  ASSERT_EQ(back.tracks.frames, 3);
  EXPECT_EQ(back.queries[1].x, 7);
  EXPECT_EQ(back.queries[1].y, 1);
  for (int i = 0; i < 2; ++i)
    for (int f = 0; f < 3; ++f) {
      EXPECT_EQ(back.tracks.is_valid(i, f), t.is_valid(i, f));
      if (t.is_valid(i, f)) EXPECT_EQ(back.tracks.at(i, f), t.at(i, f));
    }
  EXPECT_THROW(tracks_from_json(Json::object()), FormatError);
  EXPECT_THROW(tracks_from_json(Json::parse(R"([{"query": {"frame": 0, "x": 0, "y": 0}, "frames": [[1, 2, 3]]}])")),
               FormatError);
}

TEST(SceneDir, RoundTripAndTamperDetection) {
  const fs::path dir = scratch("scene");
  SceneConfig c;
  c.frame_count = 3;
  c.width = 24;
  c.height = 18;
  c.seed = 5;
  const SceneSequence s = generate_scene(c);
  write_scene_dir(dir, s);
  const SceneSequence back = load_scene_dir(dir);
  EXPECT_EQ(back.frame_count(), 3);
  const std::vector<DepthMap> d = read_depth_tensors(dir);
  for (int t = 0; t < 3; ++t) EXPECT_EQ(d[t].valid, s.frames[t].depth.valid);
  const std::vector<Pose> c2w = read_trajectory(dir / "poses.txt");
  EXPECT_LT((c2w[2].translation - s.frames[2].pose.inverse().translation).norm(), 1e-15);

  std::vector<float> v = read_tensor(dir / "depth_0001.bin", {"d", {18, 24}});
  v[10] += 1.0f;
  write_tensor(dir / "depth_0001.bin", v);
  EXPECT_THROW(load_scene_dir(dir), FormatError);
  EXPECT_THROW(load_scene_dir(dir / "nothing"), FormatError);
}

TEST(Checkpoint, RoundTripMatchesFloatPrecision) {
  const fs::path dir = scratch("ckpt");
  MotionModuleParams p = init_params(8, 4, 6, 3);
  p.blocks[0].ffn_out.setConstant(0.125);
  p.positional(5, 7) = -2.5;
  save_checkpoint(dir / "m", p);
  const MotionModuleParams q = load_checkpoint(dir / "m");
  EXPECT_EQ(q.channels, 8);
  EXPECT_EQ(q.max_time, 6);
  std::vector<double> a, b;
  visit_tensors(p, [&](const std::string&, const auto& t) {
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index k = 0; k < t.cols(); ++k) a.push_back(static_cast<float>(t(r, k)));
  });
  visit_tensors(q, [&](const std::string&, const auto& t) {
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index k = 0; k < t.cols(); ++k) b.push_back(t(r, k));
  });
  EXPECT_EQ(a, b);
  EXPECT_EQ(q.positional(5, 7), -2.5);
  fs::resize_file(dir / "m.bin", 16);
  EXPECT_THROW(load_checkpoint(dir / "m"), FormatError);
}

TEST(Config, KeysOverrideDefaults) {
  const RunConfig c = apply_config_json(Json::parse(
      R"({"seed": 9, "window": 6, "scene": {"frame_count": 7}, "fit": {"steps": 3}, "ablation": {"head_seeds": 2}})"));
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.window, 6);
  EXPECT_EQ(c.overlap, RunConfig{}.overlap);
  EXPECT_EQ(c.scene.frame_count, 7);
  EXPECT_EQ(c.scene_config().seed, 9u);
  EXPECT_EQ(c.fit.options.steps, 3);
  EXPECT_EQ(c.ablation.head_seeds, 2);
}

TEST(Config, LaterLayersWin) {
  RunConfig c = apply_config_json(Json::parse(R"({"window": 6, "noise": 0.1})"));
  c = apply_config_json(Json::parse(R"({"window": 3})"), c);
  EXPECT_EQ(c.window, 3);
  EXPECT_EQ(c.noise, 0.1);
}

TEST(Config, RoundTripThroughJson) {
  RunConfig c;
  c.seed = 4;
  c.jitter = 0.3;
  c.scene.object_scale = 1.7;
  c.fit.frames = 20;
  const RunConfig back = apply_config_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
}

TEST(Config, UnknownKeysAndWrongTypesRejected) {
  for (const char* bad : {R"({"windw": 3})", R"({"fit": {"stepz": 1}})", R"({"ablation": {"x": 1}})",
                          R"({"scene": {"seed": 1}})", R"({"scene": {"colour": 1}})", R"({"window": "six"})",
                          R"({"fit": 3})", R"([1, 2])", R"({"depth_alignment": "affine"})"})
    EXPECT_THROW(apply_config_json(Json::parse(bad)), ContractViolation) << bad;
}

TEST(Config, ValidationAndOverlapClamp) {
  RunConfig c;
  c.window = 0;
  EXPECT_THROW(c.validate(), ContractViolation);
  c = RunConfig{};
  c.overlap = 20;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.effective_overlap(12), 11);
  EXPECT_EQ(c.effective_overlap(1), 0);
}
