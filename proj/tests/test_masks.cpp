#include <gtest/gtest.h>

#include <random>

#include "segsplat/mask_pipeline.hpp"
#include "segsplat/masks.hpp"
#include "segsplat/metrics.hpp"
#include "segsplat/synthetic.hpp"

using namespace segsplat;

namespace {

BinaryMask box(int w, int h, int x0, int y0, int x1, int y1) {
  BinaryMask m = BinaryMask::Constant(h, w, false);
  m.block(y0, x0, y1 - y0, x1 - x0).setConstant(true);
  return m;
}

BinaryMask random_mask(std::mt19937_64& rng, int w, int h, double p) {
  std::bernoulli_distribution b(p);
  BinaryMask m(h, w);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = b(rng);
  return m;
}

}  // namespace

TEST(SegmentedRatio, MatchesPixelUnion) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = 7 + trial % 5, h = 9;
    FrameMasks masks;
    const int n = trial % 4;
    for (int k = 0; k < n; ++k) masks.push_back({static_cast<ObjectId>(k + 1), random_mask(rng, w, h, 0.2)});
    int covered = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        bool any = false;
        for (const auto& m : masks) any = any || m.mask(y, x);
        covered += any;
      }
    EXPECT_DOUBLE_EQ(segmented_ratio(masks, w, h), static_cast<double>(covered) / (w * h));
  }
}

TEST(DetectionTrigger, DeclineAndEmptyPrevious) {
  const FrameMasks full{{1, box(10, 10, 0, 0, 10, 5)}};
  const FrameMasks less{{1, box(10, 10, 0, 0, 10, 4)}};
  EXPECT_TRUE(detection_triggered(full, less, 10, 10, 0.9));
  EXPECT_FALSE(detection_triggered(full, less, 10, 10, 0.8));
  EXPECT_FALSE(detection_triggered(full, full, 10, 10, 0.9));
  EXPECT_TRUE(detection_triggered({}, full, 10, 10, 0.9));
}

TEST(DetectNewObjects, OnlyLowOverlapCandidates) {
  const FrameMasks prev{{1, box(10, 10, 0, 0, 5, 5)}, {2, box(10, 10, 5, 5, 10, 10)}};
  const FrameMasks cur{{1, box(10, 10, 0, 0, 5, 5)}};
  const FrameMasks reseg{{100, box(10, 10, 0, 0, 5, 5)}, {101, box(10, 10, 6, 6, 9, 9)}};
  ObjectId next = 20;
  const auto found = detect_new_objects(prev, cur, reseg, 10, 10, 0.9, 0.1, next);
  ASSERT_EQ(found.size(), 1u);
  EXPECT_EQ(found[0].candidate, 101u);
  EXPECT_EQ(found[0].track_id, 20u);
  EXPECT_EQ(next, 21u);
  ObjectId untouched = 20;
  EXPECT_TRUE(detect_new_objects(cur, cur, reseg, 10, 10, 0.9, 0.1, untouched).empty());
  EXPECT_EQ(detect_new_objects(cur, cur, reseg, 10, 10, 0.9, 0.1, untouched, true).size(), 1u);
}

TEST(MultiTracking, DropsSmallerOfDuplicatePair) {
  const FrameMasks masks{{1, box(10, 10, 0, 0, 6, 6)}, {2, box(10, 10, 0, 0, 6, 5)}, {3, box(10, 10, 7, 7, 9, 9)}};
  const auto r = resolve_multi_tracking(masks, 0.8);
  ASSERT_EQ(r.removed.size(), 1u);
  EXPECT_EQ(r.removed[0], 2u);
  EXPECT_EQ(r.kept.size(), 2u);
}

TEST(MultiTracking, EqualAreaDropsHigherId) {
  const FrameMasks masks{{7, box(8, 8, 0, 0, 4, 4)}, {3, box(8, 8, 0, 0, 4, 4)}};
  const auto r = resolve_multi_tracking(masks, 0.8);
  ASSERT_EQ(r.removed.size(), 1u);
  EXPECT_EQ(r.removed[0], 7u);
}

TEST(MultiTracking, SurvivorsPairwiseBelowThreshold) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    FrameMasks masks;
    const BinaryMask base = random_mask(rng, 12, 12, 0.5);
    for (int k = 0; k < 6; ++k) {
      BinaryMask m = base;
      for (Eigen::Index i = 0; i < m.size(); ++i)
        if (std::uniform_real_distribution<double>(0, 1)(rng) < 0.05 * k) m.data()[i] = !m.data()[i];
      masks.push_back({static_cast<ObjectId>(k + 1), m});
    }
    const auto r = resolve_multi_tracking(masks, 0.8);
    EXPECT_EQ(r.kept.size() + r.removed.size(), masks.size());
    for (std::size_t a = 0; a < r.kept.size(); ++a)
      for (std::size_t b = a + 1; b < r.kept.size(); ++b) EXPECT_LE(iou(r.kept[a].mask, r.kept[b].mask), 0.8);
  }
}

TEST(IdMap, OverlapGoesToSmallerMask) {
  const FrameMasks masks{{1, box(6, 6, 0, 0, 6, 6)}, {2, box(6, 6, 2, 2, 4, 4)}};
  const IdMap map = to_id_map(masks, 6, 6);
  EXPECT_EQ(map(3, 3), 2u);
  EXPECT_EQ(map(0, 0), 1u);
  const auto back = from_id_map(map);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].track_id, 1u);
  EXPECT_EQ(back[1].mask.count(), 4);
  EXPECT_EQ(back[0].mask.count(), 32);
}

TEST(TrackedMasks, MergeForwardsAndRewrites) {
  TrackedMasks t(4, 4, 2);
  t.map(Granularity::Small, 0)(0, 0) = 5;
  t.map(Granularity::Small, 1)(1, 1) = 9;
  t.refresh_tracks();
  EXPECT_EQ(t.track(9)->first_seen, 1);
  t.merge(Granularity::Small, 9, 5);
  EXPECT_EQ(t.map(Granularity::Small, 1)(1, 1), 5u);
  EXPECT_EQ(t.resolve(9), 5u);
  t.set_forwarding(5, 2);
  EXPECT_EQ(t.resolve(9), 2u);
  EXPECT_EQ(t.frames_with(Granularity::Small, 5), (std::vector<int>{0, 1}));
}

TEST(Metrics, PsnrOfUniformOffset) {
  Imaged a(4, 3), b(4, 3);
  b.rgb.setConstant(0.1);
  EXPECT_NEAR(psnr(b, a), 20.0, 1e-12);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
}

TEST(Metrics, MiouSkipsEmptyClasses) {
  const BinaryMask e = BinaryMask::Constant(4, 4, false);
  const BinaryMask p = box(4, 4, 0, 0, 2, 2), g = box(4, 4, 0, 0, 2, 4);
  EXPECT_DOUBLE_EQ(miou({p, e}, {g, e}), 0.5);
  EXPECT_THROW(miou({e}, {e}), Error);
}

TEST(Metrics, OrrSkipsEmptyFrames) {
  std::vector<std::string> warnings;
  EXPECT_DOUBLE_EQ(orr({2, 0, 1}, {2, 0, 2}, &warnings), 0.75);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Metrics, DuplicateCount) {
  EXPECT_EQ(duplicate_count({{1, {1, 10}}, {2, {2}}, {3, {3, 7, 8}}}), 3);
  EXPECT_EQ(duplicate_count({}), 0);
}

// Hand-labeled oracle for the scripted sequence. The camera sees x in
// [0.1 f - 2, 0.1 f + 2]: B enters at frame 11, D leaves after 11, A leaves
// after 16, C is hidden over 8-11 and the raw tracker loses it for good.
class TrackingOracle : public ::testing::Test {
 protected:
  TrackingFixture fx = make_tracking_fixture();
  const std::vector<int> present{3, 3, 2, 3, 2};

  TrackingScore run(bool detect, bool multi) {
    TrackingConfig c;
    c.delta_t = 5;
    c.detect_new_objects = detect;
    c.resolve_multi_tracking = multi;
    const TrackedMasks t = consolidate(fx.scene.raw, c);
    return score_tracking(t, Granularity::Small, fx.scene.gt_masks[0], fx.labeled_frames);
  }
};

TEST_F(TrackingOracle, Baseline) {
  const auto s = run(false, false);
  EXPECT_EQ(s.present, present);
  EXPECT_EQ(s.tracked, (std::vector<int>{3, 3, 2, 1, 0}));
  EXPECT_NEAR(s.orr, (1 + 1 + 1 + 1.0 / 3 + 0) / 5, 1e-12);
  EXPECT_EQ(s.dup, 1);
  EXPECT_EQ(s.assignment.at(1), (std::set<ObjectId>{1, 10}));
}

TEST_F(TrackingOracle, Detection) {
  const auto s = run(true, false);
  EXPECT_EQ(s.tracked, present);
  EXPECT_DOUBLE_EQ(s.orr, 1.0);
  EXPECT_EQ(s.dup, 2);
  EXPECT_EQ(s.assignment.at(2).size(), 1u);
  EXPECT_EQ(s.assignment.at(3).size(), 2u);
  EXPECT_TRUE(s.assignment.at(3).contains(3));
}

TEST_F(TrackingOracle, DetectionAndMultiTrack) {
  const auto s = run(true, true);
  EXPECT_DOUBLE_EQ(s.orr, 1.0);
  EXPECT_EQ(s.dup, 1);
  EXPECT_EQ(s.assignment.at(1), (std::set<ObjectId>{1}));
}
