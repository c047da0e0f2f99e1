#include "segsplat/config.hpp"

namespace segsplat {

namespace {

void unit_open(std::vector<std::string>& out, const char* name, double v) {
  if (!(v > 0.0 && v < 1.0)) out.push_back(std::string(name) + " must lie in (0, 1)");
}

void positive(std::vector<std::string>& out, const char* name, double v) {
  if (!(v > 0.0)) out.push_back(std::string(name) + " must be positive");
}

}  // namespace

std::vector<std::string> TrainConfig::validate() const {
  std::vector<std::string> out;
  if (iterations < 0) out.push_back("iterations must be non-negative");
  if (!(lambda_render >= 0.0 && lambda_render <= 1.0)) out.push_back("lambda_render must lie in [0, 1]");
  if (objects_per_level < 0) out.push_back("objects_per_level must be non-negative");
  if (stage1_end < 0 || stage2_end < stage1_end) out.push_back("stage boundaries must be ascending");
  if (iterations > 0 && stage2_end >= iterations) out.push_back("stage boundaries must be below iterations");
  unit_open(out, "partial_iou", partial_iou);
  if (!(partial_window >= 0.0 && partial_window <= 1.0)) out.push_back("partial_window must lie in [0, 1]");
  positive(out, "lr_position_init", lr_position_init);
  positive(out, "lr_position_final", lr_position_final);
  if (lr_color < 0 || lr_opacity < 0 || lr_scale < 0 || lr_rotation < 0 || lr_deformation < 0)
    out.push_back("learning rates must be non-negative");
  unit_open(out, "adam_beta1", adam_beta1);
  unit_open(out, "adam_beta2", adam_beta2);
  positive(out, "adam_epsilon", adam_epsilon);
  if (densify_interval < 1) out.push_back("densify_interval must be at least 1");
  positive(out, "densify_grad_threshold", densify_grad_threshold);
  unit_open(out, "prune_opacity", prune_opacity);
  if (persistence_floor < 1) out.push_back("persistence_floor must be at least 1");
  if (psnr_interval < 1) out.push_back("psnr_interval must be at least 1");
  if (render.tile_size < 1) out.push_back("render.tile_size must be at least 1");
  return out;
}

std::vector<std::string> InitConfig::validate() const {
  std::vector<std::string> out;
  if (!(lambda_d >= 0.0 && lambda_d <= 1.0)) out.push_back("lambda_d must lie in [0, 1]");
  if (!(merge_threshold >= 0.0)) out.push_back("merge_threshold must be non-negative");
  if (random_per_missing < 1) out.push_back("random_per_missing must be at least 1");
  if (background_count < 0) out.push_back("background_count must be non-negative");
  unit_open(out, "initial_opacity", initial_opacity);
  return out;
}

}  // namespace segsplat
