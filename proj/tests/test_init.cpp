#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "segsplat/gaussian_init.hpp"
#include "segsplat/mask_pipeline.hpp"
#include "segsplat/metrics.hpp"
#include "segsplat/synthetic.hpp"

using namespace segsplat;

namespace {

GaussianCloud<double> two_points(const Vec3<double>& pa, const Vec3<double>& ca, const Vec3<double>& pb,
                                 const Vec3<double>& cb) {
  GaussianCloud<double> cloud;
  Gaussian<double> g;
  g.mean = pa;
  g.color = ca;
  cloud.push_back(g);
  g.mean = pb;
  g.color = cb;
  cloud.push_back(g);
  return cloud;
}

}  // namespace

TEST(MergeDistance, IdenticalSetsAreZero) {
  const auto cloud = two_points({0.3, -1, 2}, {0.2, 0.4, 0.6}, {0.3, -1, 2}, {0.2, 0.4, 0.6});
  EXPECT_EQ(geometric_appearance_distance(cloud, {0}, {1}, 0.5), 0.0);
}

TEST(MergeDistance, UnitCenterOffset) {
  const auto cloud = two_points({0, 0, 0}, {0.5, 0.5, 0.5}, {1, 0, 0}, {0.5, 0.5, 0.5});
  EXPECT_NEAR(geometric_appearance_distance(cloud, {0}, {1}, 0.5), 0.5, 1e-12);
}

TEST(MergeDistance, ColorOnlyAndScale) {
  const auto cloud = two_points({0, 0, 0}, {0, 0, 0}, {0, 3, 4}, {0, 0.6, 0.8});
  EXPECT_NEAR(geometric_appearance_distance(cloud, {0}, {1}, 0.0), 1.0, 1e-12);
  EXPECT_NEAR(geometric_appearance_distance(cloud, {0}, {1}, 1.0, 10.0), 0.5, 1e-12);
  EXPECT_NEAR(geometric_appearance_distance(cloud, {0}, {1}, 0.25, 5.0), 0.25 + 0.75, 1e-12);
}

TEST(MergeDistance, UsesSetCentroids) {
  GaussianCloud<double> cloud;
  for (double x : {-1.0, 1.0, 4.0, 6.0}) {
    Gaussian<double> g;
    g.mean = {x, 0, 0};
    cloud.push_back(g);
  }
  EXPECT_NEAR(geometric_appearance_distance(cloud, {0, 1}, {2, 3}, 1.0), 5.0, 1e-12);
}

TEST(MergeDistance, SymmetricAndNonNegative) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  GaussianCloud<double> cloud;
  for (int i = 0; i < 12; ++i) {
    Gaussian<double> g;
    g.mean = {u(rng), u(rng), u(rng)};
    g.color = {0.5 + 0.5 * u(rng), 0.5, 0.5};
    cloud.push_back(g);
  }
  const std::vector<std::uint32_t> a{0, 1, 2, 3}, b{4, 5, 6, 7, 8};
  for (double l : {0.0, 0.3, 1.0}) {
    const double d = geometric_appearance_distance(cloud, a, b, l, 2.0);
    EXPECT_GE(d, 0.0);
    EXPECT_DOUBLE_EQ(d, geometric_appearance_distance(cloud, b, a, l, 2.0));
  }
  EXPECT_THROW(geometric_appearance_distance(cloud, {}, b, 0.5), Error);
}

TEST(LostTrackMerge, RemovesLastDuplicateOnOcclusionFixture) {
  const TrackingFixture fx = make_tracking_fixture();
  TrackingConfig c;
  c.delta_t = 5;
  TrackedMasks tracked = consolidate(fx.scene.raw, c);
  const auto& gt = fx.scene.gt_masks[0];
  const auto before = score_tracking(tracked, Granularity::Small, gt, fx.labeled_frames);
  EXPECT_EQ(before.dup, 1);

  InitConfig ic;
  ic.background_count = 200;
  ic.random_per_missing = 200;
  const auto init = initialize_gaussians(fx.scene.points, fx.scene.cameras, tracked, ic, 3, &fx.scene.images);
  const auto after = score_tracking(tracked, Granularity::Small, gt, fx.labeled_frames);
  EXPECT_EQ(after.dup, 0);
  EXPECT_DOUBLE_EQ(after.orr, 1.0);
  ASSERT_EQ(init.report.merges.size(), 1u);
  EXPECT_EQ(init.report.merges[0].to, 3u);
  EXPECT_EQ(tracked.resolve(init.report.merges[0].from), 3u);
  for (const auto& ids : init.gaussians.ids) EXPECT_NE(ids.small, init.report.merges[0].from);
}

TEST(LostTrackMerge, DisabledKeepsDuplicate) {
  const TrackingFixture fx = make_tracking_fixture();
  TrackingConfig c;
  c.delta_t = 5;
  TrackedMasks tracked = consolidate(fx.scene.raw, c);
  InitConfig ic;
  ic.merge_lost_tracks = false;
  ic.background_count = 50;
  ic.random_per_missing = 50;
  const auto init = initialize_gaussians(fx.scene.points, fx.scene.cameras, tracked, ic, 3);
  EXPECT_TRUE(init.report.merges.empty());
  EXPECT_EQ(score_tracking(tracked, Granularity::Small, fx.scene.gt_masks[0], fx.labeled_frames).dup, 1);
}

TEST(Voting, MajorityAcrossViews) {
  std::vector<Camerad> cams;
  for (int v = 0; v < 3; ++v) {
    Camerad cam = Camerad::look_at({0.2 * v, 0, -4}, {0, 0, 0}, {0, -1, 0}, 8.0, 8, 8);
    cam.frame_index = v;
    cams.push_back(cam);
  }
  TrackedMasks masks(8, 8, 3);
  const Vec3<double> p(0, 0, 0);
  for (int v = 0; v < 3; ++v) {
    const Vec2<double> px = cams[v].project(cams[v].to_camera(p));
    const int x = static_cast<int>(std::floor(px.x() + 0.5)), y = static_cast<int>(std::floor(px.y() + 0.5));
    masks.map(Granularity::Small, v)(y, x) = v < 2 ? 4u : 5u;
    masks.map(Granularity::Large, v)(y, x) = 1u;
  }
  masks.refresh_tracks();
  const ObjectIds ids = vote_object_ids(p, cams, masks);
  EXPECT_EQ(ids.small, 4u);
  EXPECT_EQ(ids.middle, kBackground);
  EXPECT_EQ(ids.large, 1u);
}

TEST(Hierarchy, RepairUsesMajorityParents) {
  std::vector<ObjectIds> ids{{1, 2, 4}, {1, 2, 4}, {1, 3, 4}, {1, 3, 5}, {0, 0, 0}};
  EXPECT_EQ(hierarchy_violations(ids), 1);
  EXPECT_EQ(repair_hierarchy(ids), 1);
  EXPECT_EQ(hierarchy_violations(ids), 0);
  EXPECT_EQ(ids[2], (ObjectIds{1, 2, 4}));
  EXPECT_EQ(ids[3], (ObjectIds{1, 3, 5}));
  EXPECT_EQ(ids[4], (ObjectIds{}));
}

TEST(KnnScales, RegularGrid) {
  std::vector<Vec3<double>> pts;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) pts.push_back({0.1 * i, 0.1 * j, 0.0});
  const auto s = knn_log_scales(pts);
  EXPECT_NEAR(s[12], std::log(0.1), 1e-12);
  EXPECT_NEAR(s[0], 0.5 * std::log((0.01 + 0.01 + 0.02) / 3), 1e-12);
}

TEST(HullSampling, SamplesProjectIntoEveryMask) {
  const TrackingFixture fx = make_tracking_fixture();
  TrackingConfig c;
  c.delta_t = 5;
  const TrackedMasks tracked = consolidate(fx.scene.raw, c);
  Aabb box{{-2.5, -2.5, -0.2}, {3.5, 2.5, 0.2}};
  std::mt19937_64 rng(4);
  const auto pts = sample_in_mask_hull(tracked, Granularity::Small, 4, fx.scene.cameras, box, 40, 200000, rng);
  ASSERT_EQ(pts.size(), 40u);
  const auto frames = tracked.frames_with(Granularity::Small, 4);
  ASSERT_FALSE(frames.empty());
  for (const auto& p : pts)
    for (int f : frames) {
      const Camerad& cam = fx.scene.cameras[f];
      const Vec2<double> px = cam.project(cam.to_camera(p));
      const int x = static_cast<int>(std::floor(px.x() + 0.5)), y = static_cast<int>(std::floor(px.y() + 0.5));
      ASSERT_TRUE(x >= 0 && y >= 0 && x < cam.width && y < cam.height);
      EXPECT_EQ(tracked.map(Granularity::Small, f)(y, x), 4u);
    }
}

TEST(Initialization, DeterministicAndConsistent) {
  const SyntheticScene s = make_nested_scene();
  TrackedMasks a = consolidate(s.raw, {}), b = consolidate(s.raw, {});
  InitConfig ic;
  ic.background_count = 100;
  ic.random_per_missing = 50;
  const auto ra = initialize_gaussians(s.points, s.cameras, a, ic, 9, &s.images);
  const auto rb = initialize_gaussians(s.points, s.cameras, b, ic, 9, &s.images);
  ASSERT_EQ(ra.gaussians.size(), rb.gaussians.size());
  for (std::size_t i = 0; i < ra.gaussians.size(); ++i) {
    EXPECT_EQ(ra.gaussians.means[i], rb.gaussians.means[i]);
    EXPECT_EQ(ra.gaussians.ids[i], rb.gaussians.ids[i]);
  }
  EXPECT_EQ(hierarchy_violations(ra.gaussians.ids), 0);
  EXPECT_EQ(ra.report.background, 100);
  for (ObjectId id : {4u, 5u, 6u}) EXPECT_GT(ra.report.counts.at(id)[0], 0);
}
