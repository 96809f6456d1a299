#include <gtest/gtest.h>

#include "dynpoint/ablation.hpp"
#include "dynpoint/metrics.hpp"
#include "dynpoint/pipelines.hpp"

using namespace dynpoint;

namespace {

SceneSequence scene(int frames, std::uint64_t seed, double object_scale = 1.0) {
  SceneConfig c;
  c.frame_count = frames;
  c.width = 48;
  c.height = 36;
  c.seed = seed;
  c.object_scale = object_scale;
  c.query_count = 32;
  return generate_scene(c);
}

std::vector<int> iota(int from, int to) {
  std::vector<int> v;
  for (int t = from; t < to; ++t) v.push_back(t);
  return v;
}

}  // namespace

TEST(PlanPairs, TrackingPairsEveryFrameWithFirst) {
  const std::vector<int> f = iota(4, 8);
  const TaskPlan p = plan_pairs(Task::kTracking, f);
  EXPECT_EQ(p.keyframe, 4);
  ASSERT_EQ(p.pairs.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(p.pairs[k].view1, f[k]);
    EXPECT_EQ(p.pairs[k].view2, 4);
    EXPECT_EQ(p.pairs[k].consumes, (std::vector<HeadRole>{HeadRole::kMatched, HeadRole::kSelf}));
  }
}

TEST(PlanPairs, VideoDepthUsesIdenticalPairs) {
  const std::vector<int> f = iota(0, 5);
  const TaskPlan p = plan_pairs(Task::kVideoDepth, f);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(p.pairs[k].view1, f[k]);
    EXPECT_EQ(p.pairs[k].view2, f[k]);
    EXPECT_EQ(p.pairs[k].consumes, std::vector<HeadRole>{HeadRole::kSelf});
  }
}

TEST(PlanPairs, ReconstructionAnchorsOnLastFrame) {
  const std::vector<int> f = iota(2, 7);
  const TaskPlan p = plan_pairs(Task::kReconstruction, f);
  EXPECT_EQ(p.keyframe, 6);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(p.pairs[k].view1, 6);
    EXPECT_EQ(p.pairs[k].view2, f[k]);
    EXPECT_EQ(p.pairs[k].consumes, std::vector<HeadRole>{HeadRole::kRigid});
  }
}

TEST(PlanPairs, RejectsEmptyWindowAndLargeOverlap) {
  EXPECT_THROW(plan_pairs(Task::kTracking, std::vector<int>{}), ContractViolation);
  const std::vector<int> f = iota(0, 3);
  EXPECT_THROW(plan_pairs(Task::kTracking, f, 3), ContractViolation);
}

TEST(WindowStarts, Cases) {
  EXPECT_EQ(window_starts(24, 12, 4), (std::vector<int>{0, 8, 12}));
  EXPECT_EQ(window_starts(20, 12, 4), (std::vector<int>{0, 8}));
  EXPECT_EQ(window_starts(10, 12, 4), (std::vector<int>{0}));
  EXPECT_EQ(window_starts(5, 1, 0), (std::vector<int>{0, 1, 2, 3, 4}));
  EXPECT_EQ(window_starts(13, 6, 0), (std::vector<int>{0, 6, 7}));
  EXPECT_THROW(window_starts(30, 12, 12), ContractViolation);
  EXPECT_THROW(window_starts(0, 12, 4), ContractViolation);
}

TEST(WindowStarts, CoverEveryFrameProperty) {
  for (int len = 1; len <= 40; ++len)
    for (int w = 1; w <= 12; ++w)
      for (int o = 0; o < w; ++o) {
        const std::vector<int> s = window_starts(len, w, o);
        std::vector<int> covered(static_cast<std::size_t>(len), 0);
        for (int st : s) {
          ASSERT_GE(st, 0);
          for (int t = st; t < std::min(len, st + w); ++t) covered[static_cast<std::size_t>(t)] = 1;
          if (len > w) ASSERT_LE(st + w, len);
        }
        for (int c : covered) ASSERT_EQ(c, 1);
        for (std::size_t k = 1; k < s.size(); ++k) ASSERT_GT(s[k], s[k - 1]);
      }
}

TEST(Tracking, NoiselessOracleReproducesAnalyticTracks) {
  const SceneSequence s = scene(24, 1, 1.5);
  const OraclePredictor oracle(s, {});
  const TrackResult r = track_3d(oracle, pixel_queries(s));
  const TrackArray gt = camera_tracks(s.tracks);
  for (int q = 0; q < gt.queries; ++q)
    for (int t = 0; t < gt.frames; ++t) {
      ASSERT_EQ(r.tracks.is_valid(q, t), gt.is_valid(q, t)) << q << " " << t;
      if (gt.is_valid(q, t)) ASSERT_LT((r.tracks.at(q, t) - gt.at(q, t)).norm(), 1e-6);
    }
  EXPECT_EQ(apd(r.tracks, gt).apd, 100.0);
  EXPECT_EQ(r.window_scales.size(), 3u);
}

TEST(Tracking, RigidOutputMissesObjectMotion) {
  const SceneSequence s = scene(6, 2, 1.8);
  const OraclePredictor oracle(s, {});
  TrackOptions o;
  o.head = HeadRole::kRigid;
  const TrackResult r = track_3d(oracle, pixel_queries(s), o);
  const TrackArray gt = camera_tracks(s.tracks);
  bool saw_dynamic = false;
  for (int q = 0; q < gt.queries; ++q) {
    const TrackQuery& tq = s.tracks.queries[static_cast<std::size_t>(q)];
    const int surface = s.frames[0].surface(tq.y, tq.x);
    for (int t = 0; t < gt.frames; ++t) {
      if (!gt.is_valid(q, t) || !r.tracks.is_valid(q, t)) continue;
      const double err = (r.tracks.at(q, t) - gt.at(q, t)).norm();
      EXPECT_NEAR(err, s.displacement(surface, 0, t).norm(), 1e-9);
      saw_dynamic |= s.tracks.query_dynamic[static_cast<std::size_t>(q)] && t > 0;
    }
  }
  EXPECT_TRUE(saw_dynamic);
  o.head = HeadRole::kSelf;
  EXPECT_THROW(track_3d(oracle, pixel_queries(s), o), ContractViolation);
}

TEST(Tracking, NoiselessWindowsStitchWithUnitScale) {
  const SceneSequence s = scene(20, 3);
  const OraclePredictor oracle(s, {});
  TrackOptions o;
  o.window = 8;
  o.overlap = 3;
  const TrackResult r = track_3d(oracle, pixel_queries(s), o);
  EXPECT_EQ(r.window_scales.size(), window_starts(20, 8, 3).size());
  for (double k : r.window_scales) EXPECT_NEAR(k, 1.0, 1e-12);
}

TEST(Tracking, EmptyQueries) {
  const SceneSequence s = scene(4, 4);
  const OraclePredictor oracle(s, {});
  const TrackResult r = track_3d(oracle, std::vector<PixelQuery>{});
  EXPECT_EQ(r.tracks.queries, 0);
  EXPECT_FALSE(r.all_lost);
}

TEST(VideoDepth, NoiselessOracleIsExact) {
  const SceneSequence s = scene(14, 5);
  const OraclePredictor oracle(s, {});
  const std::vector<DepthMap> d = video_depth(oracle);
  ASSERT_EQ(d.size(), 14u);
  for (int t = 0; t < 14; ++t) {
    EXPECT_EQ(d[t].valid, s.frames[t].depth.valid);
    for (std::size_t k = 0; k < d[t].depth.size(); ++k)
      if (d[t].valid[k]) EXPECT_NEAR(d[t].depth[k], s.frames[t].depth.depth[k], 1e-12);
  }
}

TEST(VideoDepth, PairwiseDepthCarriesPairScale) {
  const SceneSequence s = scene(6, 6);
  const OraclePredictor oracle(s, {0.0, 0.2, 9, false});
  DepthOptions o;
  o.window = 1;
  o.overlap = 0;
  const std::vector<DepthMap> d = video_depth(oracle, o);
  for (int t = 0; t < 6; ++t) {
    const double k = oracle.pair_scale(t, t);
    for (std::size_t i = 0; i < d[t].depth.size(); ++i)
      if (d[t].valid[i]) ASSERT_NEAR(d[t].depth[i], k * s.frames[t].depth.depth[i], 1e-12);
  }
}

TEST(Reconstruction, RigidCloudInKeyframeCamera) {
  const SceneSequence s = scene(6, 7);
  const OraclePredictor oracle(s, {});
  const std::vector<int> frames = iota(2, 6);
  const PointCloud cloud = feedforward_recon(oracle, frames);
  ASSERT_FALSE(cloud.points.empty());
  for (std::size_t k = 0; k < cloud.points.size(); k += 37) {
    const int f = cloud.frame[k];
    const int y = cloud.pixel[k] / s.width(), x = cloud.pixel[k] % s.width();
    const Vector3d world = s.frames[f].pose.inverse().apply(pixel_point(s, f, x, y));
    EXPECT_LT((cloud.points[k] - s.frames[5].pose.apply(world)).norm(), 1e-9);
  }
}
