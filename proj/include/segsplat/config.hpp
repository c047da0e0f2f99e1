#pragma once

#include <string>
#include <vector>

#include "segsplat/rasterizer.hpp"

namespace segsplat {

/// Which granularity receives object supervision first.
enum class StageOrder { SmallFirst, LargeFirst };

struct TrainConfig {
  int iterations = 20000;
  double lambda_render = 0.2;    // D-SSIM weight in the render loss
  int objects_per_level = 3;     // objects sampled per active level per iteration
  int stage1_end = 5000;         // stages are [0, s1), [s1, s2), [s2, end)
  int stage2_end = 10000;
  StageOrder stage_order = StageOrder::SmallFirst;

  bool partial_filtering = true;
  double partial_window = 0.25;  // filtering starts this fraction of iterations before the end
  double partial_iou = 0.30;

  double lr_position_init = 1.6e-4;
  double lr_position_final = 1.6e-6;
  double lr_color = 2.5e-3;
  double lr_opacity = 5e-2;
  double lr_scale = 5e-3;
  double lr_rotation = 1e-3;
  double lr_deformation = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-15;
  bool spatial_lr_scale = true;  // scale position rates by the camera extent

  int densify_from = 500;
  int densify_until = -1;        // -1: half of the iterations
  int densify_interval = 100;
  double densify_grad_threshold = 2e-4;
  double percent_dense = 0.01;
  double prune_opacity = 5e-3;
  int persistence_floor = 10;

  bool object_loss_reaches_deformation = true;
  bool deformation_through_position = false;
  int deformation_warmup = 0;    // iterations before the field is enabled

  int psnr_interval = 100;
  RenderOptions render;

  int densify_end() const { return densify_until < 0 ? iterations / 2 : densify_until; }
  int partial_filter_start() const {
    return iterations - static_cast<int>(partial_window * static_cast<double>(iterations) + 0.5);
  }

  /// Human-readable list of configuration errors; empty when valid.
  std::vector<std::string> validate() const;
};

struct InitConfig {
  double lambda_d = 0.5;         // geometric vs appearance weight in the merge distance
  double merge_threshold = 0.1;  // in normalized scene units
  bool merge_lost_tracks = true;
  int random_per_missing = 1000;
  int background_count = 5000;
  double initial_opacity = 0.1;
  int random_samples_max_tries = 200000;

  std::vector<std::string> validate() const;
};

}  // namespace segsplat
