#pragma once

#include <optional>
#include <string>
#include <vector>

#include "segsplat/config.hpp"
#include "segsplat/deformation.hpp"
#include "segsplat/gaussian_init.hpp"
#include "segsplat/mask_pipeline.hpp"
#include "segsplat/optimizer.hpp"
#include "segsplat/scene.hpp"
#include "segsplat/semantics.hpp"

namespace segsplat {

struct PipelineInputs {
  PointCloud points;
  std::vector<Camerad> cameras;
  std::vector<Imaged> images;
  RawMaskSequence raw;
  std::optional<EmbeddingTable> embeddings;
};

struct PipelineConfig {
  TrackingConfig tracking;
  InitConfig init;
  TrainConfig train;
  std::optional<DeformationConfig> deformation;  // set for dynamic scenes
  std::uint64_t seed = 0;
};

struct PipelineResult {
  SceneModel scene;
  ConsolidationLog consolidation;
  InitReport init;
  TrainLog train;
  std::vector<std::string> warnings;
};

/// Consolidated masks and initialized Gaussians, ready for training.
PipelineResult prepare_scene(const PipelineInputs& inputs, const PipelineConfig& config);

/// prepare_scene, train, then attach embeddings when a table is given.
PipelineResult run_pipeline(const PipelineInputs& inputs, const PipelineConfig& config, const TrainHooks& hooks = {});

}  // namespace segsplat
