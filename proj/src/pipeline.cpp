#include "segsplat/pipeline.hpp"

#include <fmt/format.h>

namespace segsplat {

PipelineResult prepare_scene(const PipelineInputs& inputs, const PipelineConfig& config) {
  if (inputs.cameras.empty()) throw Error("pipeline: no cameras");
  if (!inputs.images.empty() && inputs.images.size() != inputs.cameras.size())
    throw Error(fmt::format("pipeline: {} images for {} cameras", inputs.images.size(), inputs.cameras.size()));
  if (inputs.raw.frames.size() != inputs.cameras.size())
    throw Error(fmt::format("pipeline: {} mask frames for {} cameras", inputs.raw.frames.size(), inputs.cameras.size()));
  for (const auto& msg : config.train.validate()) throw Error("train config: " + msg);
  for (const auto& msg : config.init.validate()) throw Error("init config: " + msg);

  PipelineResult out;
  SceneModel& scene = out.scene;
  scene.masks = consolidate(inputs.raw, config.tracking, &out.consolidation);
  InitResult init = initialize_gaussians(inputs.points, inputs.cameras, scene.masks, config.init, config.seed,
                                         inputs.images.empty() ? nullptr : &inputs.images);
  scene.gaussians = std::move(init.gaussians);
  out.init = std::move(init.report);
  scene.cameras = inputs.cameras;
  scene.images = inputs.images;
  scene.config = config.train;
  scene.seed = config.seed;
  if (config.deformation) scene.deformation.emplace(*config.deformation, config.seed);
  scene.rebuild_objects();
  for (const auto& msg : validate_scene(scene)) out.warnings.push_back("scene: " + msg);
  return out;
}

PipelineResult run_pipeline(const PipelineInputs& inputs, const PipelineConfig& config, const TrainHooks& hooks) {
  PipelineResult out = prepare_scene(inputs, config);
  out.train = train(out.scene, hooks);
  for (const auto& w : out.train.warnings) out.warnings.push_back(w);
  if (inputs.embeddings)
    for (const auto& w : associate_all(out.scene, *inputs.embeddings)) out.warnings.push_back(w);
  return out;
}

}  // namespace segsplat
