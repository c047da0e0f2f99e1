#include "segsplat/evaluation.hpp"

#include <fmt/format.h>

#include "segsplat/metrics.hpp"

namespace segsplat {

BinaryMask object_footprint(const SceneModel& scene, ObjectId id, Granularity level, const Camerad& cam, double time) {
  const auto alpha = render_object(scene, id, level, cam, time).result.alpha;
  BinaryMask out(cam.height, cam.width);
  for (Eigen::Index p = 0; p < alpha.size(); ++p) out.data()[p] = alpha(p) > 0.5;
  return out;
}

std::vector<ObjectScore> object_render_ious(const SceneModel& scene, const std::vector<Camerad>& cameras,
                                            const std::vector<IdMap>& gt, Granularity level) {
  if (gt.size() != cameras.size())
    throw Error(fmt::format("object_render_ious: {} masks for {} cameras", gt.size(), cameras.size()));
  std::map<ObjectId, ObjectScore> scores;
  for (std::size_t v = 0; v < cameras.size(); ++v) {
    std::set<ObjectId> ids(gt[v].data(), gt[v].data() + gt[v].size());
    ids.erase(kBackground);
    for (ObjectId id : ids) {
      auto& s = scores.try_emplace(id, ObjectScore{id, level, 0.0, 0}).first->second;
      const BinaryMask target = gt[v] == id;
      BinaryMask pred = BinaryMask::Constant(target.rows(), target.cols(), false);
      if (scene.objects.find(level, id) || scene.masks.resolve(id) != id)
        pred = object_footprint(scene, id, level, cameras[v], cameras[v].time);
      s.iou += iou(pred, target);
      ++s.views;
    }
  }
  std::vector<ObjectScore> out;
  for (auto& [id, s] : scores) {
    s.iou /= s.views;
    out.push_back(s);
  }
  return out;
}

double mean_iou(const std::vector<ObjectScore>& scores) {
  if (scores.empty()) throw Error("mean_iou: no objects");
  double sum = 0;
  for (const auto& s : scores) sum += s.iou;
  return sum / static_cast<double>(scores.size());
}

std::vector<PromptScore> evaluate_prompts(const SceneModel& scene, const std::map<std::string, Eigen::VectorXf>& prompts,
                                          const std::map<std::string, PromptTarget>& targets,
                                          const std::vector<Camerad>& cameras,
                                          const std::array<std::vector<IdMap>, 3>& gt) {
  std::vector<PromptScore> out;
  for (const auto& [prompt, target] : targets) {
    const auto it = prompts.find(prompt);
    if (it == prompts.end()) throw Error(fmt::format("evaluate_prompts: no embedding for prompt '{}'", prompt));
    const auto& maps = gt[level_index(target.level)];
    if (maps.size() != cameras.size()) throw Error("evaluate_prompts: ground truth does not match the cameras");
    PromptScore s;
    s.prompt = prompt;
    s.target = target;
    const QueryResult r = query(it->second, scene, target.level, 1);
    if (r.ranked.empty()) throw Error(fmt::format("evaluate_prompts: no result for '{}'", prompt));
    s.returned = r.ranked.front().id;
    s.returned_level = r.ranked.front().level;
    s.score = r.ranked.front().score;
    s.correct = s.returned == target.id && s.returned_level == target.level;
    int views = 0;
    for (std::size_t v = 0; v < cameras.size(); ++v) {
      const BinaryMask truth = maps[v] == target.id;
      if (!truth.any()) continue;
      s.iou += iou(object_footprint(scene, s.returned, s.returned_level, cameras[v], cameras[v].time), truth);
      ++views;
    }
    if (views > 0) s.iou /= views;
    out.push_back(s);
  }
  return out;
}

double mean_psnr(const SceneModel& scene, const std::vector<Camerad>& cameras, const std::vector<Imaged>& images) {
  if (cameras.size() != images.size() || cameras.empty()) throw Error("mean_psnr: need one image per camera");
  double sum = 0;
  for (std::size_t v = 0; v < cameras.size(); ++v)
    sum += std::min(100.0, psnr(render_view(scene, cameras[v], cameras[v].time).result.image, images[v]));
  return sum / static_cast<double>(cameras.size());
}

}  // namespace segsplat
