#include "segsplat/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace segsplat {

namespace {

struct Part {
  Vec3<double> center;
  Vec3<double> radii;
  Vec3<double> color;
  ObjectIds ids;
};

// Gaussians on a Fibonacci lattice over the ellipsoid surface.
void add_part(GaussianCloud<double>& cloud, const Part& part, int n) {
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  const double mean_r = part.radii.mean();
  const double spacing = std::sqrt(4.0 * std::numbers::pi * mean_r * mean_r / n);
  for (int i = 0; i < n; ++i) {
    const double y = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(1.0 - y * y);
    const double phi = golden * i;
    const Vec3<double> unit(std::cos(phi) * r, std::sin(phi) * r, y);
    Gaussian<double> g;
    g.mean = part.center + part.radii.cwiseProduct(unit);
    g.log_scale.setConstant(std::log(0.6 * spacing));
    g.opacity_logit = logit(0.95);
    const double shade = 0.85 + 0.15 * unit.z();
    g.color = (part.color * shade).cwiseMin(1.0).cwiseMax(0.0);
    g.ids = part.ids;
    cloud.push_back(g);
  }
}

Camerad ring_camera(int i, int n, const SyntheticOptions& o, double radius, const Vec3<double>& target) {
  const double az = 2.0 * std::numbers::pi * i / n;
  const double height = (i % 2 == 0) ? 2.0 : 2.8;
  const Vec3<double> eye(radius * std::cos(az), radius * std::sin(az), height);
  Camerad cam = Camerad::look_at(eye, target, {0, 0, 1}, 1.0 * o.width, o.width, o.height);
  cam.frame_index = i;
  return cam;
}

Eigen::VectorXf one_hot(int dim, int k) {
  Eigen::VectorXf v = Eigen::VectorXf::Zero(dim);
  v(k % dim) = 1.0f;
  return v;
}

void sparse_points(SyntheticScene& s, const GaussianCloud<double>& source, const SyntheticOptions& o,
                   std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n;
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (u(rng) >= o.point_fraction) continue;
    s.points.positions.push_back(source.means[i] + o.point_jitter * Vec3<double>(n(rng), n(rng), n(rng)));
    s.points.colors.push_back(
        (source.colors[i] + o.color_jitter * Vec3<double>(n(rng), n(rng), n(rng))).cwiseMax(0.0).cwiseMin(1.0));
  }
}

void raw_from_gt(SyntheticScene& s) {
  s.raw.width = s.cameras.front().width;
  s.raw.height = s.cameras.front().height;
  s.raw.frames.resize(s.cameras.size());
  for (std::size_t f = 0; f < s.cameras.size(); ++f)
    for (Granularity g : kAllLevels) s.raw.frames[f].levels[level_index(g)] = from_id_map(s.gt_masks[level_index(g)][f]);
}

void view_embeddings(SyntheticScene& s, const std::map<ObjectId, int>& slot) {
  for (std::size_t f = 0; f < s.cameras.size(); ++f)
    for (Granularity g : kAllLevels) {
      const IdMap& m = s.gt_masks[level_index(g)][f];
      for (const auto& [id, k] : slot)
        if ((m == id).any()) s.embeddings.add(id, static_cast<int>(f), one_hot(s.embeddings.dimension(), k));
    }
}

}  // namespace

std::array<IdMap, 3> visible_id_maps(const GaussianCloud<double>& cloud, const Camerad& cam, const RenderOptions& opt) {
  const auto splats = project(cloud, cam, opt);
  const auto fwd = render<double>(splats, cam.width, cam.height, opt);
  std::array<IdMap, 3> out;
  for (Granularity g : kAllLevels) {
    std::map<ObjectId, int> index{{kBackground, 0}};
    std::vector<ObjectId> ids{kBackground};
    for (const auto& t : cloud.ids)
      if (index.try_emplace(t[g], static_cast<int>(ids.size())).second) ids.push_back(t[g]);
    std::vector<int> labels(splats.size());
    for (std::size_t k = 0; k < splats.size(); ++k) labels[k] = index.at(cloud.ids[splats[k].source][g]);
    const auto w = label_weights<double>(splats, fwd, labels, static_cast<int>(ids.size()), opt);
    IdMap m = IdMap::Zero(cam.height, cam.width);
    for (Eigen::Index p = 0; p < w.rows(); ++p) {
      Eigen::Index best = 0;
      const double top = w.row(p).maxCoeff(&best);
      if (best != 0 && top >= 0.5) m.data()[p] = ids[static_cast<std::size_t>(best)];
    }
    out[level_index(g)] = m;
  }
  return out;
}

SyntheticScene make_nested_scene(const SyntheticOptions& o) {
  SyntheticScene s;
  s.embeddings = EmbeddingTable(o.embedding_dim);
  const std::vector<Part> parts{
      {{-0.6, -0.5, 0.28}, {0.28, 0.28, 0.28}, {0.9, 0.15, 0.1}, {1, 2, 4}},
      {{-0.45, 0.55, 0.34}, {0.22, 0.22, 0.34}, {0.15, 0.8, 0.2}, {1, 2, 5}},
      {{0.6, 0.0, 0.42}, {0.3, 0.26, 0.22}, {0.15, 0.3, 0.95}, {1, 3, 6}},
      {{0.6, 0.0, 0.1}, {0.4, 0.4, 0.1}, {0.95, 0.85, 0.2}, {1, 3, 0}},
  };
  for (const auto& p : parts) add_part(s.truth, p, o.gaussians_per_part);

  const Vec3<double> target(0.0, 0.0, 0.25);
  for (int i = 0; i < o.views; ++i) s.cameras.push_back(ring_camera(i, o.views, o, 2.8, target));
  for (auto& level : s.gt_masks) level.clear();
  for (const auto& cam : s.cameras) {
    const auto view = render<double>(project(s.truth, cam), cam.width, cam.height);
    s.images.push_back(view.image);
    const auto maps = visible_id_maps(s.truth, cam);
    for (Granularity g : kAllLevels) s.gt_masks[level_index(g)].push_back(maps[level_index(g)]);
  }

  std::mt19937_64 rng(o.seed);
  sparse_points(s, s.truth, o, rng);
  raw_from_gt(s);

  const std::map<ObjectId, int> slot{{1, 0}, {2, 1}, {3, 2}, {4, 3}, {5, 4}, {6, 5}};
  view_embeddings(s, slot);
  const std::vector<std::tuple<std::string, Granularity, ObjectId>> names{
      {"tabletop group", Granularity::Large, 1}, {"left pair", Granularity::Middle, 2},
      {"blue egg on stand", Granularity::Middle, 3}, {"red ball", Granularity::Small, 4},
      {"green bottle", Granularity::Small, 5}, {"blue egg", Granularity::Small, 6}};
  for (const auto& [name, level, id] : names) {
    s.prompts[name] = one_hot(o.embedding_dim, slot.at(id));
    s.prompt_targets[name] = {level, id};
  }
  return s;
}

Vec3<double> dynamic_offset(double time) { return {0.5 * (time - 0.5), 0.0, 0.0}; }

SyntheticScene make_dynamic_scene(const SyntheticOptions& o, int test_views) {
  SyntheticScene s;
  s.embeddings = EmbeddingTable(o.embedding_dim);
  GaussianCloud<double> canonical;
  add_part(canonical, {{0.0, -0.6, 0.3}, {0.3, 0.3, 0.3}, {0.9, 0.2, 0.1}, {1, 3, 5}}, o.gaussians_per_part);
  add_part(canonical, {{0.0, 0.7, 0.3}, {0.25, 0.25, 0.3}, {0.2, 0.4, 0.9}, {2, 4, 6}}, o.gaussians_per_part);
  const ObjectId moving = 1;

  auto at_time = [&](double t) {
    GaussianCloud<double> c = canonical;
    for (std::size_t i = 0; i < c.size(); ++i)
      if (c.ids[i].large == moving) c.means[i] += dynamic_offset(t);
    return c;
  };

  const Vec3<double> target(0.0, 0.0, 0.3);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  auto make_view = [&](double az, double height, double t, int frame) {
    const Vec3<double> eye(3.0 * std::cos(az), 3.0 * std::sin(az), height);
    Camerad cam = Camerad::look_at(eye, target, {0, 0, 1}, 1.0 * o.width, o.width, o.height);
    cam.frame_index = frame;
    cam.time = t;
    return cam;
  };
  for (int f = 0; f < o.views; ++f) {
    const double t = o.views > 1 ? static_cast<double>(f) / (o.views - 1) : 0.0;
    s.cameras.push_back(make_view(golden * f, f % 2 == 0 ? 2.2 : 2.8, t, f));
  }
  for (int k = 0; k < test_views; ++k) {
    const double t = (k + 0.5) / test_views;
    s.test_cameras.push_back(make_view(golden * (k + 0.5) + 0.3, 2.5, t, k));
  }

  auto render_set = [&](const std::vector<Camerad>& cams, std::vector<Imaged>& images,
                        std::array<std::vector<IdMap>, 3>& masks) {
    for (const auto& cam : cams) {
      const GaussianCloud<double> posed = at_time(cam.time);
      images.push_back(render<double>(project(posed, cam), cam.width, cam.height).image);
      const auto maps = visible_id_maps(posed, cam);
      for (Granularity g : kAllLevels) masks[level_index(g)].push_back(maps[level_index(g)]);
    }
  };
  render_set(s.cameras, s.images, s.gt_masks);
  render_set(s.test_cameras, s.test_images, s.test_masks);
  s.truth = at_time(0.5);

  std::mt19937_64 rng(o.seed);
  sparse_points(s, s.truth, o, rng);
  raw_from_gt(s);
  const std::map<ObjectId, int> slot{{1, 0}, {2, 1}, {3, 2}, {4, 3}, {5, 4}, {6, 5}};
  view_embeddings(s, slot);
  s.prompts["sliding red ball"] = one_hot(o.embedding_dim, slot.at(5));
  s.prompt_targets["sliding red ball"] = {Granularity::Small, 5};
  s.prompts["blue bottle"] = one_hot(o.embedding_dim, slot.at(6));
  s.prompt_targets["blue bottle"] = {Granularity::Small, 6};
  return s;
}

namespace {

struct Rect {
  double x0, y0, x1, y1;  // world units on z = 0
};

// Pixels whose centers fall inside the projected rectangle.
BinaryMask rect_mask(const Rect& r, const Camerad& cam) {
  BinaryMask m = BinaryMask::Constant(cam.height, cam.width, false);
  const Vec2<double> a = cam.project(cam.to_camera({r.x0, r.y0, 0.0}));
  const Vec2<double> b = cam.project(cam.to_camera({r.x1, r.y1, 0.0}));
  const double lx = std::min(a.x(), b.x()), hx = std::max(a.x(), b.x());
  const double ly = std::min(a.y(), b.y()), hy = std::max(a.y(), b.y());
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) m(y, x) = x >= lx && x <= hx && y >= ly && y <= hy;
  return m;
}

BinaryMask erode(const BinaryMask& m) {
  BinaryMask out = BinaryMask::Constant(m.rows(), m.cols(), false);
  for (Eigen::Index y = 1; y + 1 < m.rows(); ++y)
    for (Eigen::Index x = 1; x + 1 < m.cols(); ++x)
      out(y, x) = m(y, x) && m(y - 1, x) && m(y + 1, x) && m(y, x - 1) && m(y, x + 1);
  return out;
}

void add_flat(GaussianCloud<double>& cloud, const Rect& r, const Vec3<double>& color, ObjectId small) {
  const double step = 0.1;
  for (double y = r.y0 + step / 2; y < r.y1; y += step)
    for (double x = r.x0 + step / 2; x < r.x1; x += step) {
      Gaussian<double> g;
      g.mean = {x, y, 0.0};
      g.log_scale = Vec3<double>(std::log(0.07), std::log(0.07), std::log(0.01));
      g.opacity_logit = logit(0.95);
      g.color = color;
      g.ids.small = small;
      cloud.push_back(g);
    }
}

}  // namespace

TrackingFixture make_tracking_fixture() {
  TrackingFixture fx;
  SyntheticScene& s = fx.scene;
  s.embeddings = EmbeddingTable(8);
  constexpr int kFrames = 20, kSize = 64;
  const Rect a{-2.0, -1.5, -0.4, 1.0}, b{3.1, -1.6, 3.6, -1.0}, c{0.5, 0.5, 1.0, 1.0}, d{-1.6, 1.3, -0.9, 1.8};
  fx.gt_ids = {{"A", 1}, {"B", 2}, {"C", 3}, {"D", 4}};
  fx.labeled_frames = {0, 5, 10, 15, 19};

  add_flat(s.truth, a, {0.8, 0.3, 0.2}, 1);
  add_flat(s.truth, b, {0.2, 0.7, 0.3}, 2);
  add_flat(s.truth, c, {0.2, 0.3, 0.9}, 3);
  add_flat(s.truth, d, {0.9, 0.9, 0.3}, 4);

  for (int f = 0; f < kFrames; ++f) {
    Camerad cam;
    cam.width = cam.height = kSize;
    cam.fx = cam.fy = 64.0;
    cam.cx = cam.cy = (kSize - 1) / 2.0;
    // Looking straight down (-z) from height 4, panning along +x.
    cam.rotation << 1, 0, 0, 0, -1, 0, 0, 0, -1;
    const Vec3<double> eye(0.1 * f, 0.0, 4.0);
    cam.translation = -cam.rotation * eye;
    cam.frame_index = f;
    s.cameras.push_back(cam);
  }

  s.raw.width = s.raw.height = kSize;
  s.raw.frames.resize(kFrames);
  auto& gt_small = s.gt_masks[level_index(Granularity::Small)];
  for (int f = 0; f < kFrames; ++f) {
    const Camerad& cam = s.cameras[f];
    const bool c_visible = f < 8 || f > 11;  // occluded over frames 8-11
    FrameMasks gt;
    for (const auto& [rect, id] : {std::pair{a, 1u}, {b, 2u}, {c, 3u}, {d, 4u}}) {
      BinaryMask m = rect_mask(rect, cam);
      if (id == 3 && !c_visible) m.setConstant(false);
      if (m.any()) gt.push_back({id, m});
    }
    gt_small.push_back(to_id_map(gt, kSize, kSize));
    for (Granularity g : {Granularity::Middle, Granularity::Large})
      s.gt_masks[level_index(g)].push_back(IdMap::Zero(kSize, kSize));

    // Tracker output: A and D tracked throughout, a spurious duplicate of A,
    // C lost after its occlusion, B never prompted.
    FrameMasks raw;
    for (const auto& tm : gt) {
      if (tm.track_id == 1 || tm.track_id == 4) raw.push_back(tm);
      if (tm.track_id == 1) raw.push_back({10, erode(tm.mask)});
      if (tm.track_id == 3 && f < 8) raw.push_back(tm);
    }
    s.raw.frames[f].levels[level_index(Granularity::Small)] = raw;
    s.images.push_back(render<double>(project(s.truth, cam), kSize, kSize).image);
  }

  // Fresh segmentations every 5 frames; each resegmented mask carries a
  // candidate id whose continuation is the tracker prompted with it.
  ObjectId candidate = 100;
  for (int f = 5; f < kFrames; f += 5) {
    std::array<FrameMasks, 3> reseg;
    for (const auto& tm : from_id_map(gt_small[f])) {
      reseg[level_index(Granularity::Small)].push_back({candidate, tm.mask});
      RawMaskSequence::Candidate cand;
      cand.level = Granularity::Small;
      for (int g = f; g < kFrames; ++g) {
        const BinaryMask m = gt_small[g] == tm.track_id;
        if (m.any()) cand.masks[g] = m;
      }
      s.raw.candidates[candidate] = std::move(cand);
      ++candidate;
    }
    s.raw.resegmentations[f] = reseg;
  }

  for (std::size_t i = 0; i < s.truth.size(); ++i) {
    if (s.truth.ids[i].small == 0) continue;
    s.points.positions.push_back(s.truth.means[i]);
    s.points.colors.push_back(s.truth.colors[i]);
  }
  return fx;
}

BinaryMask occlusion_hole(const BinaryMask& mask, double keep) {
  Eigen::Index x0 = mask.cols(), y0 = mask.rows(), x1 = -1, y1 = -1;
  for (Eigen::Index y = 0; y < mask.rows(); ++y)
    for (Eigen::Index x = 0; x < mask.cols(); ++x)
      if (mask(y, x)) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  BinaryMask out = BinaryMask::Constant(mask.rows(), mask.cols(), false);
  if (x1 < 0) return out;
  const double cut_x = x0 + keep * (x1 - x0 + 1), cut_y = y0 + keep * (y1 - y0 + 1);
  for (Eigen::Index y = y0; y <= y1; ++y)
    for (Eigen::Index x = x0; x <= x1; ++x) out(y, x) = mask(y, x) && x < cut_x && y < cut_y;
  return out;
}

}  // namespace segsplat
