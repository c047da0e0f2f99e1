#include <gtest/gtest.h>

#include <set>

#include "scenes.hpp"
#include "segsplat/evaluation.hpp"
#include "segsplat/io.hpp"
#include "segsplat/pipeline.hpp"

using namespace segsplat;
using segsplat::testing::labeled_scene;

namespace {

bool mentions(const std::vector<std::string>& problems, const std::string& word) {
  for (const auto& p : problems)
    if (p.find(word) != std::string::npos) return true;
  return false;
}

PipelineInputs tiny_inputs(const SyntheticScene& s) { return {s.points, s.cameras, s.images, s.raw, s.embeddings}; }

PipelineConfig tiny_config(int iterations) {
  PipelineConfig c;
  c.init.background_count = 60;
  c.init.random_per_missing = 30;
  c.train.iterations = iterations;
  c.train.stage1_end = iterations / 3;
  c.train.stage2_end = 2 * iterations / 3;
  c.train.densify_from = 10;
  c.train.densify_interval = 10;
  c.train.psnr_interval = 20;
  c.seed = 5;
  return c;
}

SyntheticScene tiny_nested() {
  SyntheticOptions o;
  o.width = o.height = 20;
  o.views = 6;
  o.gaussians_per_part = 30;
  o.embedding_dim = 6;
  return make_nested_scene(o);
}

}  // namespace

TEST(ValidateScene, ConsistentSceneIsClean) { EXPECT_TRUE(validate_scene(labeled_scene(true)).empty()); }

TEST(ValidateScene, ReportsEachViolation) {
  {
    SceneModel s = labeled_scene();
    s.gaussians.rotations[3] *= 2.0;
    EXPECT_TRUE(mentions(validate_scene(s), "quaternion"));
  }
  {
    SceneModel s = labeled_scene();
    s.gaussians.opacity_logits[0] = std::numeric_limits<double>::infinity();
    EXPECT_TRUE(mentions(validate_scene(s), "opacity"));
  }
  {
    SceneModel s = labeled_scene();
    s.gaussians.ids[s.objects.find(Granularity::Small, 4)->gaussians[0]].small = 99;
    EXPECT_TRUE(mentions(validate_scene(s), "carries id 99"));
    s.rebuild_objects();
    EXPECT_TRUE(validate_scene(s).empty());
  }
  {
    SceneModel s = labeled_scene();
    const auto members = s.objects.find(Granularity::Small, 4)->gaussians;
    s.gaussians.ids[members[0]].middle = 3;
    s.gaussians.ids[members[0]].large = 1;
    s.rebuild_objects();
    EXPECT_TRUE(mentions(validate_scene(s), "inconsistent hierarchy"));
  }
  {
    SceneModel s = labeled_scene();
    s.objects.find(Granularity::Small, 5)->gaussians.push_back(s.objects.find(Granularity::Small, 4)->gaussians[0]);
    EXPECT_TRUE(mentions(validate_scene(s), "overlapping sets"));
  }
  {
    SceneModel s = labeled_scene();
    s.masks.set_forwarding(50, 77);
    EXPECT_TRUE(mentions(validate_scene(s), "forwarding 50"));
  }
  {
    SceneModel s = labeled_scene();
    s.cameras[1].rotation(0, 0) = 3.0;
    EXPECT_TRUE(mentions(validate_scene(s), "camera 1"));
  }
  {
    SceneModel s = labeled_scene(true);
    s.deformation->layers()[0].bias(0) = std::nan("");
    EXPECT_TRUE(mentions(validate_scene(s), "deformation"));
  }
}

TEST(Evaluation, GroundTruthScoresNearPerfect) {
  const SyntheticScene s = tiny_nested();
  SceneModel scene;
  scene.gaussians = s.truth;
  scene.cameras = s.cameras;
  scene.rebuild_objects();
  for (Granularity g : kAllLevels) {
    const auto scores = object_render_ious(scene, s.cameras, s.gt_masks[level_index(g)], g);
    EXPECT_FALSE(scores.empty());
    EXPECT_GT(mean_iou(scores), 0.85) << to_string(g);
  }
  EXPECT_GT(mean_psnr(scene, s.cameras, s.images), 99.0);
}

TEST(Evaluation, MissingObjectScoresZero) {
  const SyntheticScene s = tiny_nested();
  SceneModel scene;
  scene.gaussians = s.truth;
  for (auto& ids : scene.gaussians.ids)
    if (ids.small == 6) ids.small = kBackground;
  scene.rebuild_objects();
  for (const auto& sc : object_render_ious(scene, s.cameras, s.gt_masks[0], Granularity::Small))
    if (sc.id == 6) EXPECT_EQ(sc.iou, 0.0);
}

TEST(Pipeline, ShortRunKeepsInvariants) {
  const SyntheticScene s = tiny_nested();
  std::vector<std::string> broken;
  TrainHooks hooks;
  hooks.after_densify = [&](const SceneModel& scene, int it) {
    for (const auto& p : validate_scene(scene)) broken.push_back(std::to_string(it) + ": " + p);
  };
  const PipelineResult r = run_pipeline(tiny_inputs(s), tiny_config(60), hooks);
  EXPECT_TRUE(broken.empty()) << broken.front();
  EXPECT_TRUE(validate_scene(r.scene).empty());
  EXPECT_EQ(r.scene.iteration, 60);
  EXPECT_EQ(r.train.rows.size(), 60u);
  EXPECT_TRUE(r.train.partial.has_value());
  for (ObjectId id : {4u, 5u, 6u}) EXPECT_TRUE(r.scene.objects.find(Granularity::Small, id)->embedding.has_value());
  std::set<ObjectId> large;
  for (const auto& [id, set] : r.scene.objects.sets(Granularity::Large)) large.insert(id);
  EXPECT_EQ(large, (std::set<ObjectId>{1}));
}

TEST(Pipeline, StageOrderShowsInObjectLoss) {
  const SyntheticScene s = tiny_nested();
  for (StageOrder order : {StageOrder::SmallFirst, StageOrder::LargeFirst}) {
    PipelineConfig c = tiny_config(30);
    c.train.stage_order = order;
    c.train.densify_from = 100;
    const auto r = run_pipeline(tiny_inputs(s), c);
    const auto& first = r.train.rows.front().object_loss;
    const auto& last = r.train.rows.back().object_loss;
    const std::size_t lead = order == StageOrder::SmallFirst ? 0 : 2, tail = 2 - lead;
    EXPECT_GT(first[lead], 0.0);
    EXPECT_EQ(first[1], 0.0);
    EXPECT_EQ(first[tail], 0.0);
    for (double v : last) EXPECT_GT(v, 0.0);
  }
}

TEST(Pipeline, SameSeedSameBytes) {
  const SyntheticScene s = tiny_nested();
  const auto a = run_pipeline(tiny_inputs(s), tiny_config(25));
  const auto b = run_pipeline(tiny_inputs(s), tiny_config(25));
  EXPECT_EQ(io::checkpoint_bytes(a.scene), io::checkpoint_bytes(b.scene));
  PipelineConfig other = tiny_config(25);
  other.seed = 6;
  EXPECT_NE(io::checkpoint_bytes(run_pipeline(tiny_inputs(s), other).scene), io::checkpoint_bytes(a.scene));
}

TEST(Pipeline, RejectsMismatchedInputs) {
  SyntheticScene s = tiny_nested();
  PipelineInputs in = tiny_inputs(s);
  in.images.pop_back();
  EXPECT_THROW(prepare_scene(in, tiny_config(30)), Error);
  PipelineConfig c = tiny_config(30);
  c.train.stage2_end = 100;
  EXPECT_THROW(prepare_scene(tiny_inputs(s), c), Error);
}

TEST(Pipeline, ZeroFieldRendersLikeStatic) {
  const SyntheticScene s = tiny_nested();
  PipelineConfig c = tiny_config(30);
  const SceneModel fixed = prepare_scene(tiny_inputs(s), c).scene;
  c.deformation = DeformationConfig{};
  const SceneModel moving = prepare_scene(tiny_inputs(s), c).scene;
  for (double t : {0.0, 0.3, 1.0}) {
    const auto a = render_view(fixed, s.cameras[1], t).result;
    const auto b = render_view(moving, s.cameras[1], t).result;
    EXPECT_TRUE((a.image.rgb == b.image.rgb).all());
    EXPECT_TRUE((a.alpha == b.alpha).all());
  }
}
