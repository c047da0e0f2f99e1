#include "segsplat/gaussian_init.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

namespace segsplat {

Aabb Aabb::of(const std::vector<Vec3<double>>& points) {
  if (points.empty()) throw Error("bounding box of an empty point set");
  Aabb box{points.front(), points.front()};
  for (const auto& p : points) {
    box.lo = box.lo.cwiseMin(p);
    box.hi = box.hi.cwiseMax(p);
  }
  return box;
}

Aabb Aabb::expanded(double fraction) const {
  const Vec3<double> pad = Vec3<double>::Constant(fraction * std::max(diagonal(), 1e-6));
  return {lo - pad, hi + pad};
}

namespace {

struct PixelHit {
  int frame;
  int x;
  int y;
};

std::optional<PixelHit> look_up(const Vec3<double>& point, const Camerad& cam, const TrackedMasks& masks) {
  if (cam.frame_index < 0 || cam.frame_index >= masks.frame_count()) return std::nullopt;
  const Vec3<double> t = cam.to_camera(point);
  if (!(t.z() > 0.0)) return std::nullopt;
  const Vec2<double> px = cam.project(t);
  if (!cam.contains(px)) return std::nullopt;
  const int x = static_cast<int>(std::lround(px.x()));
  const int y = static_cast<int>(std::lround(px.y()));
  if (x < 0 || y < 0 || x >= masks.width() || y >= masks.height()) return std::nullopt;
  return PixelHit{cam.frame_index, x, y};
}

// Total pixel area of each id per level over the frames in `frames`.
using AreaTable = std::array<std::map<ObjectId, long>, 3>;

AreaTable mask_areas(const TrackedMasks& masks) {
  AreaTable out;
  for (Granularity g : kAllLevels)
    for (int f = 0; f < masks.frame_count(); ++f) {
      const IdMap& m = masks.map(g, f);
      for (Eigen::Index i = 0; i < m.size(); ++i) ++out[level_index(g)][m.data()[i]];
    }
  return out;
}

ObjectIds vote(const Vec3<double>& point, const std::vector<Camerad>& cameras, const TrackedMasks& masks,
               const AreaTable& areas) {
  std::array<std::map<ObjectId, int>, 3> votes;
  for (const auto& cam : cameras) {
    const auto hit = look_up(point, cam, masks);
    if (!hit) continue;
    for (Granularity g : kAllLevels) ++votes[level_index(g)][masks.map(g, hit->frame)(hit->y, hit->x)];
  }
  ObjectIds ids;
  for (Granularity g : kAllLevels) {
    const auto& v = votes[level_index(g)];
    const auto& area = areas[level_index(g)];
    ObjectId best = kBackground;
    int best_votes = 0;
    long best_area = -1;
    bool tied = false;
    for (const auto& [id, n] : v) {
      const auto it = area.find(id);
      const long a = it == area.end() ? 0 : it->second;
      if (n > best_votes || (n == best_votes && a > best_area)) {
        best = id;
        best_votes = n;
        best_area = a;
        tied = false;
      } else if (n == best_votes && a == best_area) {
        tied = true;
      }
    }
    ids[g] = tied ? kBackground : best;
  }
  return ids;
}

}  // namespace

ObjectIds vote_object_ids(const Vec3<double>& point, const std::vector<Camerad>& cameras, const TrackedMasks& masks) {
  return vote(point, cameras, masks, mask_areas(masks));
}

std::vector<ObjectIds> assign_object_ids(const PointCloud& points, const std::vector<Camerad>& cameras,
                                         const TrackedMasks& masks) {
  if (cameras.empty()) throw Error("assign_object_ids: no cameras");
  if (points.size() == 0) throw Error("assign_object_ids: empty point cloud");
  const AreaTable areas = mask_areas(masks);
  std::vector<ObjectIds> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = vote(points.positions[i], cameras, masks, areas);
  return out;
}

int repair_hierarchy(std::vector<ObjectIds>& ids) {
  std::map<ObjectId, std::map<std::pair<ObjectId, ObjectId>, int>> votes;
  for (const auto& t : ids)
    if (t.small != kBackground) ++votes[t.small][{t.middle, t.large}];
  std::map<ObjectId, std::pair<ObjectId, ObjectId>> parent;
  for (const auto& [small, v] : votes) {
    auto best = v.begin();
    for (auto it = v.begin(); it != v.end(); ++it)
      if (it->second > best->second) best = it;
    parent[small] = best->first;
  }
  int rewritten = 0;
  for (auto& t : ids) {
    if (t.small == kBackground) continue;
    const auto& p = parent.at(t.small);
    if (t.middle != p.first || t.large != p.second) {
      t.middle = p.first;
      t.large = p.second;
      ++rewritten;
    }
  }
  return rewritten;
}

int hierarchy_violations(const std::vector<ObjectIds>& ids) {
  std::map<ObjectId, std::set<std::pair<ObjectId, ObjectId>>> parents;
  for (const auto& t : ids)
    if (t.small != kBackground) parents[t.small].insert({t.middle, t.large});
  int n = 0;
  for (const auto& [id, p] : parents) n += p.size() > 1 ? 1 : 0;
  return n;
}

double geometric_appearance_distance(const GaussianCloud<double>& cloud, const std::vector<std::uint32_t>& a,
                                     const std::vector<std::uint32_t>& b, double lambda_d, double geometry_scale) {
  if (a.empty() || b.empty()) throw Error("geometric_appearance_distance: empty set");
  if (!(geometry_scale > 0.0)) throw Error("geometric_appearance_distance: geometry scale must be positive");
  auto centroid = [&](const std::vector<std::uint32_t>& s, bool color) {
    Vec3<double> sum = Vec3<double>::Zero();
    for (auto i : s) sum += color ? cloud.colors[i] : cloud.means[i];
    return Vec3<double>(sum / static_cast<double>(s.size()));
  };
  const double geometric = (centroid(a, false) - centroid(b, false)).norm() / geometry_scale;
  const double appearance = (centroid(a, true) - centroid(b, true)).norm();
  return lambda_d * geometric + (1.0 - lambda_d) * appearance;
}

std::vector<MergeRecord> merge_lost_tracks(GaussianCloud<double>& cloud, TrackedMasks& masks, Granularity level,
                                           double lambda_d, double threshold, double geometry_scale) {
  std::vector<MergeRecord> merges;
  for (;;) {
    std::map<ObjectId, std::vector<std::uint32_t>> sets;
    for (std::uint32_t i = 0; i < cloud.size(); ++i)
      if (cloud.ids[i][level] != kBackground) sets[cloud.ids[i][level]].push_back(i);

    std::optional<MergeRecord> best;
    for (auto a = sets.begin(); a != sets.end(); ++a) {
      const auto ta = masks.track(a->first);
      if (!ta) continue;
      for (auto b = std::next(a); b != sets.end(); ++b) {
        const auto tb = masks.track(b->first);
        if (!tb) continue;
        const bool disjoint = ta->last_seen < tb->first_seen || tb->last_seen < ta->first_seen;
        if (!disjoint) continue;
        const double d = geometric_appearance_distance(cloud, a->second, b->second, lambda_d, geometry_scale);
        if (!(d < threshold)) continue;
        if (best && d >= best->distance) continue;
        const bool a_first = ta->first_seen < tb->first_seen || (ta->first_seen == tb->first_seen && a->first < b->first);
        best = a_first ? MergeRecord{level, b->first, a->first, d} : MergeRecord{level, a->first, b->first, d};
      }
    }
    if (!best) break;
    for (auto i : sets[best->from]) cloud.ids[i][level] = best->to;
    masks.merge(level, best->from, best->to);
    merges.push_back(*best);
  }
  return merges;
}

std::vector<double> knn_log_scales(const std::vector<Vec3<double>>& points, int k) {
  std::vector<double> out(points.size(), std::log(1e-3));
  if (points.size() < 2) return out;
  std::vector<double> best;
  for (std::size_t i = 0; i < points.size(); ++i) {
    best.assign(static_cast<std::size_t>(k), std::numeric_limits<double>::infinity());
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (i == j) continue;
      const double d2 = (points[i] - points[j]).squaredNorm();
      if (d2 < best.back()) {
        best.back() = d2;
        std::sort(best.begin(), best.end());
      }
    }
    double sum = 0.0;
    int n = 0;
    for (double d2 : best)
      if (std::isfinite(d2)) {
        sum += d2;
        ++n;
      }
    out[i] = 0.5 * std::log(std::max(sum / n, 1e-14));
  }
  return out;
}

std::vector<Vec3<double>> sample_in_mask_hull(const TrackedMasks& masks, Granularity level, ObjectId id,
                                              const std::vector<Camerad>& cameras, const Aabb& box, int count,
                                              int max_tries, std::mt19937_64& rng) {
  std::vector<const Camerad*> views;
  std::vector<BinaryMask> view_masks;
  for (const auto& cam : cameras) {
    if (cam.frame_index < 0 || cam.frame_index >= masks.frame_count()) continue;
    BinaryMask m = masks.mask(level, cam.frame_index, id);
    if (!m.any()) continue;
    views.push_back(&cam);
    view_masks.push_back(std::move(m));
  }
  std::vector<Vec3<double>> out;
  if (views.empty()) return out;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int tries = 0; tries < max_tries && static_cast<int>(out.size()) < count; ++tries) {
    const Vec3<double> p = box.lo + (box.hi - box.lo).cwiseProduct(Vec3<double>(u(rng), u(rng), u(rng)));
    bool inside = true;
    for (std::size_t v = 0; v < views.size() && inside; ++v) {
      const auto hit = look_up(p, *views[v], masks);
      inside = hit && view_masks[v](hit->y, hit->x);
    }
    if (inside) out.push_back(p);
  }
  return out;
}

namespace {

Vec3<double> mean_color(const Vec3<double>& p, const std::vector<Camerad>& cameras, const TrackedMasks& masks,
                        const std::vector<Imaged>* images) {
  if (!images) return Vec3<double>::Constant(0.5);
  Vec3<double> sum = Vec3<double>::Zero();
  int n = 0;
  for (std::size_t c = 0; c < cameras.size() && c < images->size(); ++c) {
    const auto hit = look_up(p, cameras[c], masks);
    const Imaged& img = (*images)[c];
    if (!hit || hit->x >= img.width || hit->y >= img.height) continue;
    sum += img.at(hit->x, hit->y).transpose().matrix();
    ++n;
  }
  return n == 0 ? Vec3<double>::Constant(0.5) : Vec3<double>(sum / n);
}

Gaussian<double> make_gaussian(const Vec3<double>& p, const Vec3<double>& color, const ObjectIds& ids,
                               double opacity) {
  Gaussian<double> g;
  g.mean = p;
  g.color = color.cwiseMax(0.0).cwiseMin(1.0);
  g.opacity_logit = logit(opacity);
  g.ids = ids;
  return g;
}

}  // namespace

InitResult initialize_gaussians(const PointCloud& points, const std::vector<Camerad>& cameras, TrackedMasks& masks,
                                const InitConfig& config, std::uint64_t seed, const std::vector<Imaged>* images) {
  if (const auto errors = config.validate(); !errors.empty()) throw Error("init config: " + errors.front());
  if (points.colors.size() != points.positions.size()) throw Error("point cloud: colors and positions differ in length");
  for (const auto& cam : cameras)
    if (cam.frame_index < 0 || cam.frame_index >= masks.frame_count())
      throw Error(fmt::format("camera frame {} has no masks", cam.frame_index));

  InitResult out;
  out.report.points = static_cast<int>(points.size());
  std::mt19937_64 rng(seed);
  const AreaTable areas = mask_areas(masks);

  std::vector<ObjectIds> ids = assign_object_ids(points, cameras, masks);
  std::vector<Vec3<double>> positions = points.positions;
  std::vector<Vec3<double>> colors = points.colors;

  const Aabb box = Aabb::of(points.positions).expanded(0.1);
  const double diag = std::max(box.diagonal(), 1e-9);

  std::array<std::set<ObjectId>, 3> owned;
  for (const auto& t : ids)
    for (Granularity g : kAllLevels) owned[level_index(g)].insert(t[g]);

  for (Granularity g : kAllLevels) {
    for (ObjectId id : masks.objects(g)) {
      if (owned[level_index(g)].contains(id)) continue;
      auto samples = sample_in_mask_hull(masks, g, id, cameras, box, config.random_per_missing,
                                         config.random_samples_max_tries, rng);
      const bool fallback = static_cast<int>(samples.size()) < config.random_per_missing;
      std::uniform_real_distribution<double> u(0.0, 1.0);
      while (static_cast<int>(samples.size()) < config.random_per_missing)
        samples.push_back(box.lo + (box.hi - box.lo).cwiseProduct(Vec3<double>(u(rng), u(rng), u(rng))));
      for (const auto& p : samples) {
        ObjectIds t = vote(p, cameras, masks, areas);
        t[g] = id;
        ids.push_back(t);
        positions.push_back(p);
        colors.push_back(mean_color(p, cameras, masks, images));
      }
      owned[level_index(g)].insert(id);
      out.report.missing.push_back({g, id, config.random_per_missing, fallback});
    }
  }
  out.report.hierarchy_repairs += repair_hierarchy(ids);

  const std::vector<double> log_scales = knn_log_scales(positions);
  GaussianCloud<double>& cloud = out.gaussians;
  cloud.reserve(positions.size() + static_cast<std::size_t>(config.background_count));
  for (std::size_t i = 0; i < positions.size(); ++i) {
    auto g = make_gaussian(positions[i], colors[i], ids[i], config.initial_opacity);
    g.log_scale.setConstant(log_scales[i]);
    cloud.push_back(g);
  }

  if (config.merge_lost_tracks) {
    for (Granularity g : kAllLevels) {
      auto m = merge_lost_tracks(cloud, masks, g, config.lambda_d, config.merge_threshold, diag);
      out.report.merges.insert(out.report.merges.end(), m.begin(), m.end());
    }
    out.report.hierarchy_repairs += repair_hierarchy(cloud.ids);
  }

  // Background: uniform samples whose votes are background at every level.
  std::vector<Vec3<double>> bg;
  {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const AreaTable merged_areas = mask_areas(masks);
    const long max_tries = 50L * std::max(config.background_count, 1);
    for (long tries = 0; tries < max_tries && static_cast<int>(bg.size()) < config.background_count; ++tries) {
      const Vec3<double> p = box.lo + (box.hi - box.lo).cwiseProduct(Vec3<double>(u(rng), u(rng), u(rng)));
      if (vote(p, cameras, masks, merged_areas) == ObjectIds{}) bg.push_back(p);
    }
  }
  if (!bg.empty()) {
    const std::vector<double> bg_scales = knn_log_scales(bg);
    for (std::size_t i = 0; i < bg.size(); ++i) {
      auto g = make_gaussian(bg[i], mean_color(bg[i], cameras, masks, images), ObjectIds{}, config.initial_opacity);
      g.log_scale.setConstant(bg_scales[i]);
      cloud.push_back(g);
    }
  }
  out.report.background = static_cast<int>(bg.size());

  for (const auto& t : cloud.ids)
    for (Granularity g : kAllLevels)
      if (t[g] != kBackground) ++out.report.counts[t[g]][level_index(g)];
  return out;
}

}  // namespace segsplat
