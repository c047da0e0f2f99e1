#pragma once

#include <array>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "segsplat/config.hpp"
#include "segsplat/core.hpp"
#include "segsplat/deformation.hpp"
#include "segsplat/gaussian.hpp"
#include "segsplat/scene.hpp"

namespace segsplat {

/// Stage 1, 2 or 3; intervals are left-closed.
int stage_of(int iteration, const TrainConfig& config);

/// Levels receiving object supervision in `stage`, in schedule order.
std::vector<Granularity> active_levels(int stage, StageOrder order);

/// Sum of the per-level mean object losses active at `iteration`; levels
/// without a value (nothing sampled) contribute nothing.
double staged_object_loss(int iteration, const TrainConfig& config, const std::array<std::optional<double>, 3>& means);

/// Up to `m` distinct ids per level drawn uniformly without replacement;
/// levels not listed in `levels` stay empty.
std::array<std::vector<ObjectId>, 3> sample_objects(std::mt19937_64& rng,
                                                    const std::array<std::vector<ObjectId>, 3>& candidates, int m,
                                                    const std::vector<Granularity>& levels);

/// 1.1 x the largest camera-center distance from their mean (at least 1e-6).
double camera_extent(const std::vector<Camerad>& cameras);

/// Position learning rate at `step` (log-linear decay), before spatial scaling.
double position_lr(int step, const TrainConfig& config);

/// First/second moment state for every trainable parameter.
struct AdamState {
  GaussianGrads<double> m;
  GaussianGrads<double> v;
  std::vector<DeformationField<double>::Layer> field_m;
  std::vector<DeformationField<double>::Layer> field_v;
  long step = 0;
};

/// Applies one Adam update; rotations are renormalized afterwards.
void adam_step(SceneModel& scene, AdamState& state, const GaussianGrads<double>& grads,
               const std::vector<DeformationField<double>::Layer>* field_grads, double extent);

/// Screen-space gradient statistics gathered between densification steps.
struct DensifyStats {
  std::vector<double> grad_sum;
  std::vector<int> seen;

  void resize(std::size_t n) {
    grad_sum.assign(n, 0.0);
    seen.assign(n, 0);
  }
};

struct DensifyReport {
  int cloned = 0;
  int split = 0;
  int pruned = 0;
  int kept_by_floor = 0;
};

/// Clones (small) or splits (large) high-gradient Gaussians, children
/// inheriting the parent's ids, then prunes low-opacity Gaussians unless that
/// would push any of their sets below the persistence floor. Moments of
/// surviving Gaussians are kept; new Gaussians start at zero.
DensifyReport densify_and_prune(SceneModel& scene, AdamState& state, const DensifyStats& stats, double extent,
                                std::mt19937_64& rng);

/// Pruning step alone (used by densify_and_prune).
std::vector<bool> prune_mask(const SceneModel& scene, double opacity_threshold, int floor, int* kept_by_floor);

struct PartialFilterReport {
  int checked = 0;
  int flagged = 0;
  std::vector<std::string> warnings;  // objects with every view flagged
};

/// Renders every object in every view where its mask is non-empty and flags
/// the (object, view) pairs whose binarized render has IoU below `iou_threshold`.
PartialFilterReport filter_partial_masks(SceneModel& scene, double iou_threshold);

struct IterationLog {
  int iteration = 0;
  double render_loss = 0.0;
  std::array<double, 3> object_loss{0.0, 0.0, 0.0};  // per level mean; 0 when inactive
  double total_loss = 0.0;
  double psnr = 0.0;  // mean over training views; NaN between evaluations
  int gaussians = 0;
};

struct TrainLog {
  std::vector<IterationLog> rows;
  std::vector<DensifyReport> densify;
  std::optional<PartialFilterReport> partial;
  std::vector<std::string> warnings;
};

/// Raised when the loss becomes non-finite; the scene holds the last finite state.
class Diverged : public Error {
 public:
  Diverged(int iteration, const std::string& what) : Error(what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

struct TrainHooks {
  std::function<void(const SceneModel&, int iteration)> after_densify;
  std::function<void(const IterationLog&)> on_iteration;
  std::function<void(const SceneModel&)> before_partial_filter;
};

/// Runs `scene.config.iterations - scene.iteration` iterations. Requires
/// ground-truth images parallel to the cameras.
TrainLog train(SceneModel& scene, const TrainHooks& hooks = {});

/// Mean PSNR of full renders against the ground-truth images.
double mean_psnr(const SceneModel& scene);

}  // namespace segsplat
