#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "segsplat/camera.hpp"
#include "segsplat/config.hpp"
#include "segsplat/core.hpp"
#include "segsplat/deformation.hpp"
#include "segsplat/gaussian.hpp"
#include "segsplat/image.hpp"
#include "segsplat/masks.hpp"
#include "segsplat/rasterizer.hpp"

namespace segsplat {

/// Gaussians owned by one object at one granularity.
struct ObjectSet {
  ObjectId id = kBackground;
  Granularity level = Granularity::Small;
  std::vector<std::uint32_t> gaussians;
  std::optional<Eigen::VectorXf> embedding;
  std::optional<std::pair<ObjectId, ObjectId>> parents;  // (middle, large) for Small sets
};

/// Object sets per granularity. Normally derived from the Gaussian id
/// triples; background (id 0) Gaussians belong to no set.
class ObjectRegistry {
 public:
  using LevelSets = std::map<ObjectId, ObjectSet>;

  /// Groups Gaussians by id at each level. Embeddings already attached to
  /// surviving ids are kept.
  void rebuild(const std::vector<ObjectIds>& ids);

  void insert(ObjectSet set) { levels_[level_index(set.level)][set.id] = std::move(set); }

  const LevelSets& sets(Granularity g) const { return levels_[level_index(g)]; }
  LevelSets& sets(Granularity g) { return levels_[level_index(g)]; }

  const ObjectSet* find(Granularity g, ObjectId id) const;
  ObjectSet* find(Granularity g, ObjectId id);
  /// Looks an id up across all levels (ids are unique across levels).
  const ObjectSet* find(ObjectId id) const;

  std::size_t total_objects() const;

 private:
  std::array<LevelSets, 3> levels_;
};

/// Indices of Gaussians whose id at `g` is BACKGROUND.
std::vector<std::uint32_t> background_indices(const GaussianCloud<double>& cloud, Granularity g);

struct SceneModel {
  GaussianCloud<double> gaussians;
  std::vector<Camerad> cameras;
  std::vector<Imaged> images;  // ground truth per camera; may be empty for inference-only scenes
  TrackedMasks masks;
  ObjectRegistry objects;
  std::optional<DeformationField<double>> deformation;
  TrainConfig config;
  std::uint64_t seed = 0;
  int iteration = 0;

  void rebuild_objects() { objects.rebuild(gaussians.ids); }
  bool dynamic() const { return deformation.has_value(); }
};

/// Lists every violated scene invariant; empty when the scene is consistent.
std::vector<std::string> validate_scene(const SceneModel& scene);

/// Gaussians at `time`, displaced by the deformation field when present.
GaussianCloud<double> posed_gaussians(const SceneModel& scene, double time);

struct ViewRender {
  std::vector<Splat2D<double>> splats;
  RenderResult<double> result;
};

/// Renders `subset` (or everything when null) of already posed Gaussians.
ViewRender render_gaussians(const GaussianCloud<double>& posed, const Camerad& cam, const RenderOptions& opt,
                            const std::vector<std::uint32_t>* subset = nullptr);

/// Full-scene render of camera `cam` at `time`.
ViewRender render_view(const SceneModel& scene, const Camerad& cam, double time);

/// Renders only the Gaussians of one object (BACKGROUND selects the
/// background set) over black. Throws for unknown ids.
ViewRender render_object(const SceneModel& scene, ObjectId id, Granularity level, const Camerad& cam, double time);

/// Indices owned by `id` at `level`; BACKGROUND yields the background set.
std::vector<std::uint32_t> object_members(const SceneModel& scene, ObjectId id, Granularity level);

}  // namespace segsplat
