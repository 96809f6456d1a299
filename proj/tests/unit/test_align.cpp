#include <gtest/gtest.h>

#include "dynpoint/align.hpp"
#include "dynpoint/metrics.hpp"

using namespace dynpoint;

namespace {

SceneSequence scene(std::uint64_t seed, int frames = 5, double object_scale = 1.0, int objects = 2) {
  SceneConfig c;
  c.frame_count = frames;
  c.width = 40;
  c.height = 30;
  c.seed = seed;
  c.object_scale = object_scale;
  c.object_count = objects;
  return generate_scene(c);
}

std::vector<Pose> ground_truth(const SceneSequence& s) {
  std::vector<Pose> c2w;
  for (const SceneFrame& f : s.frames) c2w.push_back(f.pose.inverse());
  return c2w;
}

}  // namespace

TEST(PairGraph, EdgeRule) {
  using E = std::vector<std::pair<int, int>>;
  EXPECT_EQ(pair_graph_edges(5, 1), (E{{0, 1}, {0, 2}, {1, 2}, {1, 3}, {2, 3}, {2, 4}, {3, 4}}));
  EXPECT_EQ(pair_graph_edges(6, 2), (E{{0, 1}, {0, 2}, {0, 4}, {1, 2}, {1, 3}, {1, 5}, {2, 3}, {2, 4}, {3, 4},
                                       {3, 5}, {4, 5}}));
  EXPECT_TRUE(pair_graph_edges(1, 1).empty());
  EXPECT_THROW(pair_graph_edges(4, 0), ContractViolation);
}

TEST(PairGraph, BothDirectionsSorted) {
  const SceneSequence s = scene(1, 4);
  const OraclePredictor oracle(s, {});
  const AlignmentProblem pb = build_pair_graph(oracle, 1);
  ASSERT_EQ(pb.edges.size(), 2 * pair_graph_edges(4, 1).size());
  for (std::size_t k = 1; k < pb.edges.size(); ++k)
    EXPECT_LT(std::pair(pb.edges[k - 1].view1(), pb.edges[k - 1].view2()),
              std::pair(pb.edges[k].view1(), pb.edges[k].view2()));
}

TEST(AlignmentProblem, DisconnectedGraphRejected) {
  const SceneSequence s = scene(2, 4);
  const OraclePredictor oracle(s, {});
  std::vector<PairPrediction> preds{oracle.predict(0, 1), oracle.predict(1, 0), oracle.predict(2, 3),
                                    oracle.predict(3, 2)};
  std::vector<Intrinsics> k(4, s.frames[0].intrinsics);
  EXPECT_THROW(make_alignment_problem(preds, k), ContractViolation);
}

TEST(GlobalAlign, SingleFrameIsIdentity) {
  const SceneSequence s = scene(3, 2);
  const OraclePredictor oracle(s, {});
  EXPECT_THROW(make_alignment_problem({oracle.predict(0, 0)}, {s.frames[0].intrinsics}), ContractViolation);
  const AlignmentProblem pb = make_alignment_problem({}, {s.frames[0].intrinsics});
  const AlignmentResult r = global_align(pb, {});
  ASSERT_EQ(r.cam_to_world.size(), 1u);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.cam_to_world[0].translation, Vector3d::Zero());
}

TEST(GlobalAlign, EnergyVanishesAtTruthAndGrowsWithPerturbation) {
  const SceneSequence s = scene(4);
  const OraclePredictor oracle(s, {});
  const AlignmentProblem pb = build_pair_graph(oracle, 1);
  const AlignmentVariables v0 = initialize_variables(pb);
  const double e0 = alignment_energy(pb, v0);
  EXPECT_LT(e0, 1e-16);
  std::vector<double> energies;
  for (double eps : {1e-4, 1e-3, 1e-2, 1e-1}) {
    AlignmentVariables v = v0;
    v.cam_to_world[2].translation += eps * Vector3d(1.0, -0.5, 0.25);
    v.cam_to_world[3].rotation = so3_exp(eps * Vector3d(0.2, 0.4, -0.1)) * v.cam_to_world[3].rotation;
    v.log_scales[1] += eps;
    energies.push_back(alignment_energy(pb, v));
  }
  for (std::size_t k = 0; k < energies.size(); ++k) EXPECT_GT(energies[k], e0);
  for (std::size_t k = 1; k < energies.size(); ++k) EXPECT_GT(energies[k], energies[k - 1]);
  // Squared residuals: tenfold perturbation, about hundredfold energy.
  EXPECT_NEAR(energies[1] / energies[0], 100.0, 5.0);
}

TEST(GlobalAlign, StaticNoiselessRecoversTrajectory) {
  for (std::uint64_t seed : {5u, 6u}) {
    const SceneSequence s = scene(seed);
    const OraclePredictor oracle(s, {});
    const AlignmentResult r = global_align(build_pair_graph(oracle, 1), {});
    EXPECT_LE(trajectory_metrics(r.cam_to_world, ground_truth(s)).ate, 1e-6);
    EXPECT_EQ(r.cam_to_world[0].translation, Vector3d::Zero());
    EXPECT_EQ(r.scales[0], 1.0);
  }
}

TEST(GlobalAlign, PairScaleJitterIsAbsorbed) {
  const SceneSequence s = scene(7);
  const OraclePredictor oracle(s, {0.0, 0.2, 3, false});
  const AlignmentResult r = global_align(build_pair_graph(oracle, 1), {});
  EXPECT_LE(trajectory_metrics(r.cam_to_world, ground_truth(s)).ate, 1e-6);
}

TEST(GlobalAlign, PerturbedStartDescends) {
  const SceneSequence s = scene(8);
  const OraclePredictor oracle(s, {});
  const AlignmentProblem pb = build_pair_graph(oracle, 1);
  AlignmentVariables start = initialize_variables(pb);
  for (std::size_t f = 1; f < start.cam_to_world.size(); ++f) {
    start.cam_to_world[f].translation += Vector3d(0.02, -0.02, 0.01);
    start.cam_to_world[f].rotation = so3_exp(Vector3d(0.01, 0.0, 0.01)) * start.cam_to_world[f].rotation;
  }
  AlignOptions o;
  o.max_iters = 60;
  const AlignmentResult r = global_align(pb, o, &start);
  ASSERT_GE(r.energy_trace.size(), 2u);
  for (std::size_t k = 1; k < r.energy_trace.size(); ++k) EXPECT_LE(r.energy_trace[k], r.energy_trace[k - 1]);
  EXPECT_LT(r.energy, 1e-3 * r.energy_trace.front());
  const double before = trajectory_metrics(start.cam_to_world, ground_truth(s)).ate;
  EXPECT_LT(trajectory_metrics(r.cam_to_world, ground_truth(s)).ate, 0.1 * before);
}

TEST(GlobalAlign, MaskingMovingPixelsHelps) {
  const SceneSequence s = scene(9, 5, 1.8, 3);
  const OraclePredictor oracle(s, {});
  const AlignmentProblem pb = build_pair_graph(oracle, 1);
  AlignOptions masked, unmasked;
  unmasked.use_dynamic_mask = false;
  const double a = trajectory_metrics(global_align(pb, masked).cam_to_world, ground_truth(s)).ate;
  const double b = trajectory_metrics(global_align(pb, unmasked).cam_to_world, ground_truth(s)).ate;
  EXPECT_LE(a, b);
  EXPECT_LE(a, 1e-6);
}

TEST(GlobalAlign, EuclideanNormAlsoRecovers) {
  const SceneSequence s = scene(10);
  const OraclePredictor oracle(s, {});
  AlignOptions o;
  o.norm = ResidualNorm::kEuclidean;
  const AlignmentResult r = global_align(build_pair_graph(oracle, 1), o);
  EXPECT_LE(trajectory_metrics(r.cam_to_world, ground_truth(s)).ate, 1e-6);
}

TEST(GlobalAlign, InvalidOptionsRejected) {
  const SceneSequence s = scene(11, 3);
  const OraclePredictor oracle(s, {});
  AlignOptions o;
  o.max_iters = -1;
  EXPECT_THROW(global_align(build_pair_graph(oracle, 1), o), ContractViolation);
}

TEST(GlobalAlign, EmptyMasksMakeMaskingIrrelevant) {
  SceneConfig c;
  c.frame_count = 4;
  c.width = 40;
  c.height = 30;
  c.seed = 12;
  c.motion_magnitude = 0.0;
  const SceneSequence s = generate_scene(c);
  const OraclePredictor oracle(s, {});
  const AlignmentProblem pb = build_pair_graph(oracle, 1);
  for (const AlignEdge& e : pb.edges) ASSERT_EQ(count_set(e.dynamic.mask), 0u);
  AlignmentVariables v = initialize_variables(pb);
  v.cam_to_world[1].translation += Vector3d(0.05, 0.0, -0.02);
  v.log_scales[2] += 0.1;
  EXPECT_EQ(alignment_energy(pb, v, kDefaultPixelWeight, true), alignment_energy(pb, v, kDefaultPixelWeight, false));
}

TEST(GlobalAlign, AteIndependentOfWorldGauge) {
  const SceneSequence s = scene(13);
  const OraclePredictor oracle(s, {0.003, 0.1, 13, false});
  const AlignmentResult r = global_align(build_pair_graph(oracle, 1), {});
  const std::vector<Pose> gt = ground_truth(s);
  const Pose g{so3_exp(Vector3d(0.4, -1.1, 0.3)), Vector3d(3.0, -2.0, 5.0)};
  std::vector<Pose> moved;
  for (const Pose& p : gt) moved.push_back(compose_pose(g, p));
  const double a = trajectory_metrics(r.cam_to_world, gt).ate;
  EXPECT_GT(a, 0.0);
  EXPECT_NEAR(trajectory_metrics(r.cam_to_world, moved).ate, a, 1e-6);
}
