#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "segsplat/optimizer.hpp"
#include "segsplat/synthetic.hpp"

using namespace segsplat;

namespace {

TrackedMasks masks_from(const std::array<std::vector<IdMap>, 3>& gt) {
  const auto& first = gt[0].front();
  TrackedMasks t(static_cast<int>(first.cols()), static_cast<int>(first.rows()), static_cast<int>(gt[0].size()));
  for (Granularity g : kAllLevels)
    for (std::size_t f = 0; f < gt[0].size(); ++f) t.map(g, static_cast<int>(f)) = gt[level_index(g)][f];
  t.refresh_tracks();
  return t;
}

SceneModel scene_from(const SyntheticScene& s) {
  SceneModel scene;
  scene.gaussians = s.truth;
  scene.cameras = s.cameras;
  scene.images = s.images;
  scene.masks = masks_from(s.gt_masks);
  scene.rebuild_objects();
  return scene;
}

Gaussian<double> with_ids(ObjectIds ids, double opacity) {
  Gaussian<double> g;
  g.ids = ids;
  g.opacity_logit = std::log(opacity / (1 - opacity));
  return g;
}

}  // namespace

TEST(Schedule, StageBoundaries) {
  TrainConfig c;
  c.stage1_end = 10;
  c.stage2_end = 20;
  EXPECT_EQ(stage_of(0, c), 1);
  EXPECT_EQ(stage_of(9, c), 1);
  EXPECT_EQ(stage_of(10, c), 2);
  EXPECT_EQ(stage_of(19, c), 2);
  EXPECT_EQ(stage_of(20, c), 3);
}

TEST(Schedule, ActiveLevelsPerOrder) {
  using G = Granularity;
  EXPECT_EQ(active_levels(1, StageOrder::SmallFirst), (std::vector<G>{G::Small}));
  EXPECT_EQ(active_levels(2, StageOrder::SmallFirst), (std::vector<G>{G::Small, G::Middle}));
  EXPECT_EQ(active_levels(3, StageOrder::SmallFirst), (std::vector<G>{G::Small, G::Middle, G::Large}));
  EXPECT_EQ(active_levels(1, StageOrder::LargeFirst), (std::vector<G>{G::Large}));
  EXPECT_EQ(active_levels(2, StageOrder::LargeFirst), (std::vector<G>{G::Large, G::Middle}));
}

TEST(Schedule, StagedLossSumsActiveLevels) {
  TrainConfig c;
  c.stage1_end = 10;
  c.stage2_end = 20;
  const std::array<std::optional<double>, 3> means{0.5, 0.25, 0.125};
  EXPECT_DOUBLE_EQ(staged_object_loss(0, c, means), 0.5);
  EXPECT_DOUBLE_EQ(staged_object_loss(10, c, means), 0.75);
  EXPECT_DOUBLE_EQ(staged_object_loss(25, c, means), 0.875);
  c.stage_order = StageOrder::LargeFirst;
  EXPECT_DOUBLE_EQ(staged_object_loss(0, c, means), 0.125);
  EXPECT_DOUBLE_EQ(staged_object_loss(25, c, {std::nullopt, 0.25, std::nullopt}), 0.25);
}

TEST(Sampling, DistinctSubsetOfCandidates) {
  std::mt19937_64 rng(1);
  const std::array<std::vector<ObjectId>, 3> cand{{{1, 2, 3, 4, 5}, {7, 8}, {9}}};
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = sample_objects(rng, cand, 3, {Granularity::Small, Granularity::Middle});
    EXPECT_EQ(s[0].size(), 3u);
    EXPECT_EQ(s[1].size(), 2u);
    EXPECT_TRUE(s[2].empty());
    const std::set<ObjectId> u(s[0].begin(), s[0].end());
    EXPECT_EQ(u.size(), 3u);
    for (ObjectId id : u) EXPECT_TRUE(id >= 1 && id <= 5);
  }
}

TEST(Sampling, UniformInclusionAndPairs) {
  std::mt19937_64 rng(2);
  std::array<std::vector<ObjectId>, 3> cand;
  for (ObjectId i = 1; i <= 10; ++i) cand[0].push_back(i);
  constexpr int kDraws = 20000;
  std::map<ObjectId, int> single;
  std::map<std::pair<ObjectId, ObjectId>, int> pair;
  for (int d = 0; d < kDraws; ++d) {
    auto s = sample_objects(rng, cand, 3, {Granularity::Small})[0];
    std::sort(s.begin(), s.end());
    for (std::size_t a = 0; a < s.size(); ++a) {
      ++single[s[a]];
      for (std::size_t b = a + 1; b < s.size(); ++b) ++pair[{s[a], s[b]}];
    }
  }
  // Inclusion 3/10 (sd 0.0032), pair inclusion 1/15 (sd 0.0018); bounds at about 5 sd.
  for (const auto& [id, n] : single) EXPECT_NEAR(n / double(kDraws), 0.3, 0.016);
  EXPECT_EQ(pair.size(), 45u);
  for (const auto& [p, n] : pair) EXPECT_NEAR(n / double(kDraws), 1.0 / 15, 0.009);
}

TEST(LearningRate, LogLinearDecay) {
  TrainConfig c;
  c.iterations = 1000;
  EXPECT_NEAR(position_lr(0, c), c.lr_position_init, 1e-18);
  EXPECT_NEAR(position_lr(1000, c), c.lr_position_final, 1e-18);
  EXPECT_NEAR(position_lr(500, c), std::sqrt(c.lr_position_init * c.lr_position_final), 1e-15);
  EXPECT_NEAR(position_lr(5000, c), c.lr_position_final, 1e-18);
}

TEST(CameraExtent, RingRadius) {
  std::vector<Camerad> cams;
  for (int k = 0; k < 8; ++k) {
    const double a = k * std::numbers::pi / 4;
    cams.push_back(Camerad::look_at({2 * std::cos(a), 2 * std::sin(a), 1}, {0, 0, 0}, {0, 0, 1}, 10, 8, 8));
  }
  EXPECT_NEAR(camera_extent(cams), 2.2, 1e-12);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  SceneModel scene;
  scene.gaussians.push_back(with_ids({}, 0.5));
  scene.config.lr_color = 0.01;
  AdamState state;
  GaussianGrads<double> g(1);
  g.colors[0] = {3.0, -0.2, 0.0};
  g.rotations[0] = {0.0, 5.0, 0.0, 0.0};
  const Vec3<double> before = scene.gaussians.colors[0];
  adam_step(scene, state, g, nullptr, 1.0);
  EXPECT_NEAR(scene.gaussians.colors[0].x(), before.x() - 0.01, 1e-12);
  EXPECT_NEAR(scene.gaussians.colors[0].y(), before.y() + 0.01, 1e-12);
  EXPECT_EQ(scene.gaussians.colors[0].z(), before.z());
  EXPECT_NEAR(scene.gaussians.rotations[0].norm(), 1.0, 1e-15);
  EXPECT_EQ(state.step, 1);
}

TEST(Prune, PersistenceFloorKeepsSmallSets) {
  SceneModel scene;
  for (int k = 0; k < 3; ++k) scene.gaussians.push_back(with_ids({0, 0, 4}, 0.001));
  for (int k = 0; k < 3; ++k) scene.gaussians.push_back(with_ids({}, 0.001));
  scene.gaussians.push_back(with_ids({0, 0, 4}, 0.9));
  int kept = 0;
  const auto remove = prune_mask(scene, 0.005, 3, &kept);
  int removed_object = 0, removed_background = 0;
  for (int i = 0; i < 7; ++i) (scene.gaussians.ids[i].small == 4 ? removed_object : removed_background) += remove[i];
  EXPECT_EQ(removed_background, 3);
  EXPECT_EQ(removed_object, 1);
  EXPECT_EQ(kept, 2);
  EXPECT_FALSE(remove[6]);
}

TEST(Prune, FloorHoldsAfterDensify) {
  std::mt19937_64 rng(5);
  SceneModel scene;
  std::uniform_real_distribution<double> u(0.0001, 0.01);
  for (int k = 0; k < 40; ++k) scene.gaussians.push_back(with_ids({1, 2, static_cast<ObjectId>(3 + k % 4)}, u(rng)));
  scene.rebuild_objects();
  scene.config.persistence_floor = 5;
  AdamState state;
  DensifyStats stats;
  stats.resize(scene.gaussians.size());
  densify_and_prune(scene, state, stats, 1.0, rng);
  for (ObjectId id = 3; id < 7; ++id)
    EXPECT_GE(scene.objects.find(Granularity::Small, id)->gaussians.size(), 5u);
  EXPECT_EQ(state.m.size(), scene.gaussians.size());
}

TEST(Densify, CloneAndSplitInheritIds) {
  std::mt19937_64 rng(6);
  SceneModel scene;
  Gaussian<double> small = with_ids({1, 2, 3}, 0.9), big = with_ids({1, 2, 4}, 0.9), idle = with_ids({1, 2, 4}, 0.9);
  small.log_scale.setConstant(std::log(0.001));
  big.log_scale.setConstant(std::log(0.5));
  idle.log_scale.setConstant(std::log(0.5));
  scene.gaussians.push_back(small);
  scene.gaussians.push_back(big);
  scene.gaussians.push_back(idle);
  scene.rebuild_objects();
  scene.config.persistence_floor = 0;
  AdamState state;
  GaussianGrads<double> g(3);
  adam_step(scene, state, g, nullptr, 1.0);
  DensifyStats stats;
  stats.resize(3);
  stats.grad_sum = {1.0, 1.0, 0.0};
  stats.seen = {1, 1, 1};
  const auto r = densify_and_prune(scene, state, stats, 1.0, rng);
  EXPECT_EQ(r.cloned, 1);
  EXPECT_EQ(r.split, 1);
  ASSERT_EQ(scene.gaussians.size(), 5u);
  int small_count = 0, big_count = 0;
  for (std::size_t i = 0; i < scene.gaussians.size(); ++i) {
    EXPECT_EQ(scene.gaussians.ids[i].middle, 2u);
    if (scene.gaussians.ids[i].small == 3) ++small_count;
    if (scene.gaussians.ids[i].small == 4) {
      ++big_count;
      if (i >= 3) EXPECT_NEAR(scene.gaussians.log_scales[i].x(), std::log(0.5 / 1.6), 1e-12);
    }
  }
  EXPECT_EQ(small_count, 2);
  EXPECT_EQ(big_count, 3);
  EXPECT_EQ(state.m.size(), 5u);
}

TEST(PartialFilter, FlagsExactlyTheLowIouViews) {
  SyntheticOptions o;
  o.width = o.height = 32;
  o.views = 10;
  SyntheticScene s = make_nested_scene(o);
  std::set<std::tuple<Granularity, ObjectId, int>> corrupted;
  for (int f : {1, 4}) {
    auto& map = s.gt_masks[0][f];
    const BinaryMask hole = occlusion_hole(map == 5u);
    for (Eigen::Index p = 0; p < map.size(); ++p)
      if (map.data()[p] == 5u && !hole.data()[p]) map.data()[p] = 0;
    corrupted.insert({Granularity::Small, 5, f});
  }
  SceneModel scene = scene_from(s);
  std::set<std::tuple<Granularity, ObjectId, int>> expected;
  for (std::size_t v = 0; v < scene.cameras.size(); ++v)
    for (Granularity g : kAllLevels)
      for (const auto& [id, set] : scene.objects.sets(g)) {
        const BinaryMask m = scene.masks.mask(g, static_cast<int>(v), id);
        if (!m.any()) continue;
        const auto alpha = render_object(scene, id, g, scene.cameras[v], 0.0).result.alpha;
        if (iou(binarize(alpha, 32, 32, 0.5), m) < 0.3) expected.insert({g, id, static_cast<int>(v)});
      }
  for (const auto& c : corrupted) EXPECT_TRUE(expected.contains(c));
  const auto report = filter_partial_masks(scene, 0.3);
  std::set<std::tuple<Granularity, ObjectId, int>> flagged;
  for (const auto& k : scene.masks.partial()) flagged.insert({k.level, k.object, k.frame});
  EXPECT_EQ(flagged, expected);
  EXPECT_EQ(report.flagged, static_cast<int>(expected.size()));
  EXPECT_TRUE(report.warnings.empty());
}
