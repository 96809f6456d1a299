#include <gtest/gtest.h>

#include "dynpoint/ablation.hpp"
#include "dynpoint/denoiser.hpp"
#include "dynpoint/io.hpp"

using namespace dynpoint;

TEST(Pooling, CeilGridAveragesValidPoints) {
  Pointmap pm(10, 9);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 10; ++x) {
      pm.points(y, x) = Vector3d(x, y, 1.0);
      pm.valid(y, x) = !(y >= 8 && x < 8);  // bottom-left cell empty
    }
  EXPECT_EQ(token_count(10, 9), 4);
  const PooledFrame f = pool_pointmap(pm);
  ASSERT_EQ(f.points.size(), 4u);
  EXPECT_TRUE(f.valid[0]);
  EXPECT_LT((f.points[0] - Vector3d(3.5, 3.5, 1.0)).norm(), 1e-12);
  EXPECT_TRUE(f.valid[1]);
  EXPECT_LT((f.points[1] - Vector3d(8.5, 3.5, 1.0)).norm(), 1e-12);
  EXPECT_FALSE(f.valid[2]);
  EXPECT_TRUE(f.valid[3]);
  EXPECT_LT((f.points[3] - Vector3d(8.5, 8.0, 1.0)).norm(), 1e-12);
}

TEST(Pooling, WindowEncodingIsScaleNormalized) {
  Pointmap pm(8, 8);
  for (std::size_t k = 0; k < pm.size(); ++k) {
    pm.points[k] = Vector3d(0, 0, 2.0);
    pm.valid[k] = 1;
  }
  const std::vector<PooledFrame> frames{pool_pointmap(pm), pool_pointmap(pm)};
  const std::vector<double> scales{1.0, 3.0};
  TokenGrid g(1, 2, 1, 8);
  encode_window(frames, scales, g, 0);
  // mean norm over the window is (2 + 6) / 2 = 4
  EXPECT_DOUBLE_EQ(g(0, 0, 0, 2), 0.5);
  EXPECT_DOUBLE_EQ(g(0, 1, 0, 2), 1.5);
  EXPECT_DOUBLE_EQ(g(0, 0, 0, 3), 1.0);
  EXPECT_DOUBLE_EQ(g(0, 1, 0, 7), 0.0);
}

TEST(Refiner, FreshModuleGivesUnitFactors) {
  const TemporalRefiner r(init_params(8, 4, 12, 0));
  SceneConfig c;
  c.frame_count = 5;
  const SceneSequence s = generate_scene(c);
  std::vector<Pointmap> window;
  for (const SceneFrame& f : s.frames) window.push_back(unproject(f.depth, f.intrinsics).scaled(1.0 + window.size()));
  for (double f : r.frame_factors(window)) EXPECT_EQ(f, 1.0);
  EXPECT_EQ(r.frame_factors(std::span(window.data(), 1)), std::vector<double>{1.0});
  const std::vector<Pointmap> long_window(13, window.front());
  EXPECT_THROW(r.frame_factors(long_window), ContractViolation);
}

TEST(Denoiser, InvalidOptionsRejected) {
  SceneConfig c;
  c.frame_count = 8;
  const std::vector<SceneSequence> short_scenes{generate_scene(c)};
  EXPECT_THROW(fit_denoiser(short_scenes, DenoiserOptions{}), ContractViolation);
  DenoiserOptions o;
  o.learning_rate = -1.0;
  EXPECT_THROW(fit_denoiser(short_scenes, o), ContractViolation);
  EXPECT_THROW(fit_denoiser(std::span<const SceneSequence>(), DenoiserOptions{}), ContractViolation);
}

TEST(Denoiser, CurvePrefixMatchesCommittedReference) {
  const Json ref = read_json(fs::path(DYNPOINT_TEST_DATA) / "denoiser_curve.json");
  RunConfig cfg = apply_config_json(ref.at("config"));
  cfg.fit.options.steps = 30;
  const DenoiserFit fit = fit_from_config(cfg);
  ASSERT_EQ(fit.curve_steps, (std::vector<int>{0, 10, 20, 30}));
  for (std::size_t k = 0; k < fit.curve.size(); ++k)
    EXPECT_NEAR(fit.curve[k], ref.at("loss")[k].get<double>(), 1e-12 * ref.at("loss")[k].get<double>());
  EXPECT_LT(fit.curve.back(), fit.curve.front());
}

TEST(Denoiser, SameSeedSameParameters) {
  RunConfig cfg;
  cfg.fit.options.steps = 5;
  const DenoiserFit a = fit_from_config(cfg), b = fit_from_config(cfg);
  EXPECT_EQ(a.curve, b.curve);
  EXPECT_TRUE(a.params.blocks[1].ffn_out == b.params.blocks[1].ffn_out);
}
