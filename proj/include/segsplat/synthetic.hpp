#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "segsplat/camera.hpp"
#include "segsplat/gaussian.hpp"
#include "segsplat/gaussian_init.hpp"
#include "segsplat/image.hpp"
#include "segsplat/masks.hpp"
#include "segsplat/rasterizer.hpp"
#include "segsplat/semantics.hpp"

namespace segsplat {

struct SyntheticOptions {
  int width = 48;
  int height = 48;
  int views = 16;
  int gaussians_per_part = 80;
  double point_fraction = 0.5;  // share of ground-truth centers kept as sparse points
  double point_jitter = 0.02;
  double color_jitter = 0.03;
  int embedding_dim = 512;
  std::uint64_t seed = 1;
};

/// Ground-truth scene plus every interchange input the pipeline consumes.
struct SyntheticScene {
  GaussianCloud<double> truth;
  std::vector<Camerad> cameras;
  std::vector<Imaged> images;
  std::array<std::vector<IdMap>, 3> gt_masks;  // per level, per frame
  PointCloud points;
  RawMaskSequence raw;
  EmbeddingTable embeddings{512};
  std::map<std::string, Eigen::VectorXf> prompts;
  std::map<std::string, std::pair<Granularity, ObjectId>> prompt_targets;

  // Held-out views (dynamic scenes): cameras, images and masks at unseen times.
  std::vector<Camerad> test_cameras;
  std::vector<Imaged> test_images;
  std::array<std::vector<IdMap>, 3> test_masks;
};

/// Per level id maps of the visible ground truth: a pixel takes the id whose
/// Gaussians contribute at least half of its compositing weight.
std::array<IdMap, 3> visible_id_maps(const GaussianCloud<double>& cloud, const Camerad& cam,
                                     const RenderOptions& opt = {});

/// Three Small objects inside two Middle objects inside one Large object
/// (ids: Large 1, Middle 2-3, Small 4-6), seen from a ring of cameras.
SyntheticScene make_nested_scene(const SyntheticOptions& options = {});

/// One static object and one object translating along x over time; each
/// frame is a different view at time frame / (views - 1).
SyntheticScene make_dynamic_scene(const SyntheticOptions& options = {}, int test_views = 6);

/// Translation of the moving object at `time`.
Vec3<double> dynamic_offset(double time);

/// Scripted 20-frame tracking sequence (Small level only): a panning
/// overhead camera over four flat objects with one late arrival, one
/// occlusion gap and one duplicated track.
struct TrackingFixture {
  SyntheticScene scene;
  std::vector<int> labeled_frames;  // frames with ground-truth annotation
  std::map<std::string, ObjectId> gt_ids;
};
TrackingFixture make_tracking_fixture();

/// Removes everything but the top-left corner of the mask's bounding box,
/// keeping roughly `keep` of each side.
BinaryMask occlusion_hole(const BinaryMask& mask, double keep = 0.45);

}  // namespace segsplat
