#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "segsplat/scene.hpp"
#include "segsplat/semantics.hpp"

namespace segsplat {

/// Object-only render binarized at alpha 0.5.
BinaryMask object_footprint(const SceneModel& scene, ObjectId id, Granularity level, const Camerad& cam, double time);

struct ObjectScore {
  ObjectId id = kBackground;
  Granularity level = Granularity::Small;
  double iou = 0.0;  // mean over views where the ground-truth mask is non-empty
  int views = 0;
};

/// Object-render IoU of every ground-truth object at `level` (ids in `gt`,
/// one map per camera) against the scene's set with the same id.
std::vector<ObjectScore> object_render_ious(const SceneModel& scene, const std::vector<Camerad>& cameras,
                                            const std::vector<IdMap>& gt, Granularity level);
double mean_iou(const std::vector<ObjectScore>& scores);

struct PromptTarget {
  Granularity level = Granularity::Small;
  ObjectId id = kBackground;
};

struct PromptScore {
  std::string prompt;
  PromptTarget target;
  ObjectId returned = kBackground;
  Granularity returned_level = Granularity::Small;
  double score = 0.0;
  double iou = 0.0;  // returned object's render against the target's ground truth
  bool correct = false;
};

/// Query-driven protocol: each prompt is queried at its target's level, the
/// top object is rendered, binarized at alpha 0.5 and compared with the
/// target's ground-truth mask in every view where that mask is non-empty.
std::vector<PromptScore> evaluate_prompts(const SceneModel& scene, const std::map<std::string, Eigen::VectorXf>& prompts,
                                          const std::map<std::string, PromptTarget>& targets,
                                          const std::vector<Camerad>& cameras,
                                          const std::array<std::vector<IdMap>, 3>& gt);

/// Mean PSNR of full renders against `images` (one per camera).
double mean_psnr(const SceneModel& scene, const std::vector<Camerad>& cameras, const std::vector<Imaged>& images);

}  // namespace segsplat
