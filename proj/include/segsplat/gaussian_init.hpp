#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "segsplat/camera.hpp"
#include "segsplat/config.hpp"
#include "segsplat/core.hpp"
#include "segsplat/gaussian.hpp"
#include "segsplat/image.hpp"
#include "segsplat/masks.hpp"
#include "segsplat/scene.hpp"

namespace segsplat {

/// Imported sparse reconstruction; colors in [0, 1].
struct PointCloud {
  std::vector<Vec3<double>> positions;
  std::vector<Vec3<double>> colors;

  std::size_t size() const { return positions.size(); }
};

struct Aabb {
  Vec3<double> lo = Vec3<double>::Zero();
  Vec3<double> hi = Vec3<double>::Zero();

  double diagonal() const { return (hi - lo).norm(); }
  static Aabb of(const std::vector<Vec3<double>>& points);
  Aabb expanded(double fraction) const;
};

/// Majority mask id per granularity over the views whose frame sees the
/// point (in front of the camera, inside the image). Ties go to the id with
/// the larger total mask area across views; a persisting tie is BACKGROUND.
ObjectIds vote_object_ids(const Vec3<double>& point, const std::vector<Camerad>& cameras, const TrackedMasks& masks);

std::vector<ObjectIds> assign_object_ids(const PointCloud& points, const std::vector<Camerad>& cameras,
                                         const TrackedMasks& masks);

/// Gives every Small object one (middle, large) parent pair, the majority
/// over its members. Returns the number of Gaussians rewritten.
int repair_hierarchy(std::vector<ObjectIds>& ids);

/// Number of Small objects whose members disagree on their parents.
int hierarchy_violations(const std::vector<ObjectIds>& ids);

/// lambda_d |mean center difference| / geometry_scale + (1 - lambda_d) |mean color difference|.
double geometric_appearance_distance(const GaussianCloud<double>& cloud, const std::vector<std::uint32_t>& a,
                                     const std::vector<std::uint32_t>& b, double lambda_d,
                                     double geometry_scale = 1.0);

struct MergeRecord {
  Granularity level;
  ObjectId from;
  ObjectId to;  // the track seen first survives
  double distance;
};

/// Repeatedly merges the closest pair of same-level sets whose tracks occupy
/// disjoint frame ranges while their distance stays below the threshold.
/// Gaussian ids and mask ids are rewritten together.
std::vector<MergeRecord> merge_lost_tracks(GaussianCloud<double>& cloud, TrackedMasks& masks, Granularity level,
                                           double lambda_d, double threshold, double geometry_scale);

/// Isotropic log-scale from the RMS distance to the three nearest neighbours.
std::vector<double> knn_log_scales(const std::vector<Vec3<double>>& points, int k = 3);

struct InitReport {
  struct Missing {
    Granularity level;
    ObjectId id;
    int count;
    bool fallback;  // hull sampling failed; sampled in the scene box instead
  };
  std::map<ObjectId, std::array<int, 3>> counts;  // per object, Gaussians per level
  std::vector<MergeRecord> merges;
  std::vector<Missing> missing;
  int background = 0;
  int hierarchy_repairs = 0;
  int points = 0;
};

struct InitResult {
  GaussianCloud<double> gaussians;
  InitReport report;
};

/// Samples `count` Gaussians for an object with no points: uniform in `box`,
/// kept where the point projects into the object's mask in every frame the
/// object appears in.
std::vector<Vec3<double>> sample_in_mask_hull(const TrackedMasks& masks, Granularity level, ObjectId id,
                                              const std::vector<Camerad>& cameras, const Aabb& box, int count,
                                              int max_tries, std::mt19937_64& rng);

/// Full initialization: id assignment, hierarchy repair, random init for
/// objects without points, lost-track merging and background fill. `masks`
/// receives the merge rewrites. `images` (optional, parallel to cameras)
/// seed the colors of randomly placed Gaussians.
InitResult initialize_gaussians(const PointCloud& points, const std::vector<Camerad>& cameras, TrackedMasks& masks,
                                const InitConfig& config, std::uint64_t seed,
                                const std::vector<Imaged>* images = nullptr);

}  // namespace segsplat
