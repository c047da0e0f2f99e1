#include "segsplat/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "segsplat/losses.hpp"
#include "segsplat/metrics.hpp"

namespace segsplat {

int stage_of(int iteration, const TrainConfig& config) {
  if (iteration < config.stage1_end) return 1;
  if (iteration < config.stage2_end) return 2;
  return 3;
}

std::vector<Granularity> active_levels(int stage, StageOrder order) {
  static constexpr std::array<Granularity, 3> fine{Granularity::Small, Granularity::Middle, Granularity::Large};
  static constexpr std::array<Granularity, 3> coarse{Granularity::Large, Granularity::Middle, Granularity::Small};
  const auto& seq = order == StageOrder::SmallFirst ? fine : coarse;
  return {seq.begin(), seq.begin() + std::clamp(stage, 1, 3)};
}

double staged_object_loss(int iteration, const TrainConfig& config,
                          const std::array<std::optional<double>, 3>& means) {
  double sum = 0.0;
  for (Granularity g : active_levels(stage_of(iteration, config), config.stage_order))
    if (means[level_index(g)]) sum += *means[level_index(g)];
  return sum;
}

std::array<std::vector<ObjectId>, 3> sample_objects(std::mt19937_64& rng,
                                                    const std::array<std::vector<ObjectId>, 3>& candidates, int m,
                                                    const std::vector<Granularity>& levels) {
  std::array<std::vector<ObjectId>, 3> out;
  for (Granularity g : levels) {
    std::vector<ObjectId> pool = candidates[level_index(g)];
    const std::size_t take = std::min(pool.size(), static_cast<std::size_t>(std::max(m, 0)));
    for (std::size_t k = 0; k < take; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
      std::swap(pool[k], pool[pick(rng)]);
    }
    pool.resize(take);
    out[level_index(g)] = std::move(pool);
  }
  return out;
}

double camera_extent(const std::vector<Camerad>& cameras) {
  if (cameras.empty()) return 1.0;
  Vec3<double> mean = Vec3<double>::Zero();
  for (const auto& c : cameras) mean += c.center();
  mean /= static_cast<double>(cameras.size());
  double r = 0.0;
  for (const auto& c : cameras) r = std::max(r, (c.center() - mean).norm());
  return std::max(1.1 * r, 1e-6);
}

double position_lr(int step, const TrainConfig& config) {
  const double total = std::max(config.iterations, 1);
  const double t = std::clamp(step / total, 0.0, 1.0);
  return std::exp((1.0 - t) * std::log(config.lr_position_init) + t * std::log(config.lr_position_final));
}

namespace {

template <typename T>
void adam_update(T& param, T& m, T& v, const T& g, double lr, double b1, double b2, double eps, double c1,
                 double c2) {
  m = b1 * m + (1.0 - b1) * g;
  v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
  const T denom = (v.array().sqrt() / std::sqrt(c2) + eps).matrix();
  param -= (lr / c1) * m.cwiseQuotient(denom);
}

void adam_scalar(double& param, double& m, double& v, double g, double lr, double b1, double b2, double eps,
                 double c1, double c2) {
  m = b1 * m + (1.0 - b1) * g;
  v = b2 * v + (1.0 - b2) * g * g;
  param -= (lr / c1) * m / (std::sqrt(v) / std::sqrt(c2) + eps);
}

}  // namespace

void adam_step(SceneModel& scene, AdamState& s, const GaussianGrads<double>& g,
               const std::vector<DeformationField<double>::Layer>* field_grads, double extent) {
  const TrainConfig& c = scene.config;
  auto& cloud = scene.gaussians;
  const std::size_t n = cloud.size();
  if (s.m.size() != n) {
    s.m.resize(n);
    s.v.resize(n);
  }
  ++s.step;
  const double b1 = c.adam_beta1, b2 = c.adam_beta2, eps = c.adam_epsilon;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.step));
  const double lr_pos = position_lr(scene.iteration, c) * (c.spatial_lr_scale ? extent : 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    adam_update(cloud.means[i], s.m.means[i], s.v.means[i], g.means[i], lr_pos, b1, b2, eps, c1, c2);
    adam_update(cloud.rotations[i], s.m.rotations[i], s.v.rotations[i], g.rotations[i], c.lr_rotation, b1, b2, eps,
                c1, c2);
    adam_update(cloud.log_scales[i], s.m.log_scales[i], s.v.log_scales[i], g.log_scales[i], c.lr_scale, b1, b2,
                eps, c1, c2);
    adam_scalar(cloud.opacity_logits[i], s.m.opacity_logits[i], s.v.opacity_logits[i], g.opacity_logits[i],
                c.lr_opacity, b1, b2, eps, c1, c2);
    adam_update(cloud.colors[i], s.m.colors[i], s.v.colors[i], g.colors[i], c.lr_color, b1, b2, eps, c1, c2);
    const double qn = cloud.rotations[i].norm();
    if (qn > 0.0)
      cloud.rotations[i] /= qn;
    else
      cloud.rotations[i] = Vec4<double>(1, 0, 0, 0);
  }
  if (field_grads && scene.deformation) {
    auto& layers = scene.deformation->layers();
    if (s.field_m.size() != layers.size()) {
      s.field_m = scene.deformation->zero_like();
      s.field_v = scene.deformation->zero_like();
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      adam_update(layers[l].weight, s.field_m[l].weight, s.field_v[l].weight, (*field_grads)[l].weight,
                  c.lr_deformation, b1, b2, eps, c1, c2);
      adam_update(layers[l].bias, s.field_m[l].bias, s.field_v[l].bias, (*field_grads)[l].bias, c.lr_deformation,
                  b1, b2, eps, c1, c2);
    }
  }
}

std::vector<bool> prune_mask(const SceneModel& scene, double opacity_threshold, int floor, int* kept_by_floor) {
  const auto& cloud = scene.gaussians;
  std::vector<bool> remove(cloud.size(), false);
  std::vector<std::uint32_t> candidates;
  for (std::uint32_t i = 0; i < cloud.size(); ++i)
    if (cloud.opacity(i) < opacity_threshold) candidates.push_back(i);
  std::stable_sort(candidates.begin(), candidates.end(), [&](std::uint32_t a, std::uint32_t b) {
    return cloud.opacity_logits[a] < cloud.opacity_logits[b];
  });
  std::array<std::map<ObjectId, long>, 3> live;
  for (const auto& t : cloud.ids)
    for (Granularity g : kAllLevels)
      if (t[g] != kBackground) ++live[level_index(g)][t[g]];
  int kept = 0;
  for (auto i : candidates) {
    bool allowed = true;
    for (Granularity g : kAllLevels) {
      const ObjectId id = cloud.ids[i][g];
      if (id != kBackground && live[level_index(g)][id] - 1 < floor) allowed = false;
    }
    if (!allowed) {
      ++kept;
      continue;
    }
    remove[i] = true;
    for (Granularity g : kAllLevels)
      if (cloud.ids[i][g] != kBackground) --live[level_index(g)][cloud.ids[i][g]];
  }
  if (kept_by_floor) *kept_by_floor = kept;
  return remove;
}

namespace {

template <typename T>
void erase_flags(std::vector<T>& v, const std::vector<bool>& remove) {
  std::size_t w = 0;
  for (std::size_t r = 0; r < v.size(); ++r)
    if (!remove[r]) v[w++] = v[r];
  v.resize(w);
}

void erase_grads(GaussianGrads<double>& g, const std::vector<bool>& remove) {
  erase_flags(g.means, remove);
  erase_flags(g.rotations, remove);
  erase_flags(g.log_scales, remove);
  erase_flags(g.opacity_logits, remove);
  erase_flags(g.colors, remove);
  erase_flags(g.means2d, remove);
}

void append_zero(GaussianGrads<double>& g, std::size_t n) {
  g.means.resize(n, Vec3<double>::Zero());
  g.rotations.resize(n, Vec4<double>::Zero());
  g.log_scales.resize(n, Vec3<double>::Zero());
  g.opacity_logits.resize(n, 0.0);
  g.colors.resize(n, Vec3<double>::Zero());
  g.means2d.resize(n, Vec2<double>::Zero());
}

}  // namespace

DensifyReport densify_and_prune(SceneModel& scene, AdamState& state, const DensifyStats& stats, double extent,
                                std::mt19937_64& rng) {
  const TrainConfig& c = scene.config;
  auto& cloud = scene.gaussians;
  const std::size_t n = cloud.size();
  DensifyReport report;
  std::vector<bool> remove(n, false);
  std::normal_distribution<double> normal;
  for (std::size_t i = 0; i < n; ++i) {
    if (stats.seen[i] == 0) continue;
    const double g = stats.grad_sum[i] / stats.seen[i];
    if (!(g >= c.densify_grad_threshold)) continue;
    const Vec3<double> scale = cloud.scale(i);
    if (scale.maxCoeff() <= c.percent_dense * extent) {
      cloud.push_back(cloud.get(i));
      ++report.cloned;
    } else {
      const Mat3<double> r = rotation_matrix<double>(cloud.rotations[i].normalized());
      for (int k = 0; k < 2; ++k) {
        Gaussian<double> child = cloud.get(i);
        const Vec3<double> offset(normal(rng) * scale.x(), normal(rng) * scale.y(), normal(rng) * scale.z());
        child.mean = cloud.means[i] + r * offset;
        child.log_scale = (scale / 1.6).array().log().matrix();
        cloud.push_back(child);
      }
      remove[i] = true;
      ++report.split;
    }
  }
  append_zero(state.m, cloud.size());
  append_zero(state.v, cloud.size());
  remove.resize(cloud.size(), false);

  int kept = 0;
  const std::vector<bool> low = prune_mask(scene, c.prune_opacity, c.persistence_floor, &kept);
  report.kept_by_floor = kept;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (low[i] && !remove[i]) {
      remove[i] = true;
      ++report.pruned;
    }
  cloud.erase(remove);
  erase_grads(state.m, remove);
  erase_grads(state.v, remove);
  scene.rebuild_objects();
  return report;
}

PartialFilterReport filter_partial_masks(SceneModel& scene, double iou_threshold) {
  PartialFilterReport report;
  const RenderOptions& opt = scene.config.render;
  std::map<std::pair<Granularity, ObjectId>, std::pair<int, int>> per_object;  // checked, flagged
  for (std::size_t c = 0; c < scene.cameras.size(); ++c) {
    const Camerad& cam = scene.cameras[c];
    const int frame = cam.frame_index;
    const GaussianCloud<double> posed = posed_gaussians(scene, cam.time);
    for (Granularity g : kAllLevels) {
      for (const auto& [id, set] : scene.objects.sets(g)) {
        const BinaryMask mask = scene.masks.mask(g, frame, id);
        if (!mask.any()) continue;
        const auto view = render_gaussians(posed, cam, opt, &set.gaussians);
        const BinaryMask rendered = binarize(view.result.alpha, cam.width, cam.height, 0.5);
        auto& counts = per_object[{g, id}];
        ++counts.first;
        ++report.checked;
        if (iou(rendered, mask) < iou_threshold) {
          scene.masks.flag_partial(g, id, frame);
          ++counts.second;
          ++report.flagged;
        }
      }
    }
  }
  for (const auto& [key, counts] : per_object)
    if (counts.second == counts.first)
      report.warnings.push_back(fmt::format("object {} at {}: every view flagged partial", key.second,
                                            to_string(key.first)));
  return report;
}

double mean_psnr(const SceneModel& scene) {
  if (scene.images.size() != scene.cameras.size()) throw Error("mean_psnr: images and cameras differ in count");
  double sum = 0.0;
  for (std::size_t c = 0; c < scene.cameras.size(); ++c) {
    const auto view = render_view(scene, scene.cameras[c], scene.cameras[c].time);
    sum += std::min(psnr(view.result.image, scene.images[c]), 100.0);
  }
  return sum / static_cast<double>(scene.cameras.size());
}

namespace {

void add_grads(GaussianGrads<double>& into, const GaussianGrads<double>& from) { into.add_scaled(from, 1.0); }

}  // namespace

TrainLog train(SceneModel& scene, const TrainHooks& hooks) {
  TrainConfig& c = scene.config;
  if (const auto errors = c.validate(); !errors.empty()) throw Error("train config: " + errors.front());
  if (scene.cameras.empty()) throw Error("train: no cameras");
  if (scene.images.size() != scene.cameras.size()) throw Error("train: need one ground-truth image per camera");
  for (std::size_t k = 0; k < scene.cameras.size(); ++k)
    if (scene.images[k].width != scene.cameras[k].width || scene.images[k].height != scene.cameras[k].height)
      throw Error(fmt::format("train: image {} does not match its camera resolution", k));

  TrainLog log;
  scene.rebuild_objects();
  const double extent = camera_extent(scene.cameras);
  const RenderOptions& opt = c.render;
  std::mt19937_64 rng(scene.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(scene.iteration));
  AdamState adam;
  DensifyStats stats;
  stats.resize(scene.gaussians.size());

  for (; scene.iteration < c.iterations; ++scene.iteration) {
    const int it = scene.iteration;
    if (c.partial_filtering && it == c.partial_filter_start() && !log.partial) {
      if (hooks.before_partial_filter) hooks.before_partial_filter(scene);
      log.partial = filter_partial_masks(scene, c.partial_iou);
      for (const auto& w : log.partial->warnings) log.warnings.push_back(w);
    }

    std::uniform_int_distribution<std::size_t> pick_cam(0, scene.cameras.size() - 1);
    const std::size_t ci = pick_cam(rng);
    const Camerad& cam = scene.cameras[ci];
    const Imaged& gt = scene.images[ci];
    const int frame = cam.frame_index;
    const std::size_t n = scene.gaussians.size();

    const bool field_on = scene.deformation && it >= c.deformation_warmup;
    std::optional<DeformedCloud<double>> deformed;
    if (field_on) deformed = deform(scene.gaussians, *scene.deformation, cam.time);
    const GaussianCloud<double>& posed = deformed ? deformed->cloud : scene.gaussians;

    IterationLog row;
    row.iteration = it;
    row.psnr = std::numeric_limits<double>::quiet_NaN();

    // Full-image reconstruction term.
    GaussianGrads<double> d_render(n);
    {
      const auto splats = project(posed, cam, opt);
      const auto fwd = render<double>(splats, cam.width, cam.height, opt);
      const auto loss = render_loss(fwd.image, gt, c.lambda_render);
      row.render_loss = loss.value;
      backward<double>(posed, cam, splats, fwd, loss.grad, d_render, opt);
      for (const auto& s : splats) {
        const Vec2<double> ndc(d_render.means2d[s.source].x() * 0.5 * cam.width,
                               d_render.means2d[s.source].y() * 0.5 * cam.height);
        stats.grad_sum[s.source] += ndc.norm();
        ++stats.seen[s.source];
      }
    }

    // Sampled per-object terms.
    GaussianGrads<double> d_object(n);
    const auto levels = active_levels(stage_of(it, c), c.stage_order);
    std::array<std::vector<ObjectId>, 3> eligible;
    for (Granularity g : levels)
      for (const auto& [id, set] : scene.objects.sets(g))
        if (!scene.masks.is_partial(g, id, frame) && (scene.masks.map(g, frame) == id).any())
          eligible[level_index(g)].push_back(id);
    const auto sampled = sample_objects(rng, eligible, c.objects_per_level, levels);
    std::array<std::optional<double>, 3> level_means;
    for (Granularity g : levels) {
      const auto& ids = sampled[level_index(g)];
      if (ids.empty()) continue;
      const double w = 1.0 / static_cast<double>(ids.size());
      double sum = 0.0;
      for (ObjectId id : ids) {
        const auto& members = scene.objects.find(g, id)->gaussians;
        const auto splats = project(posed, std::span<const std::uint32_t>(members), cam, opt);
        const auto fwd = render<double>(splats, cam.width, cam.height, opt);
        auto loss = object_loss(fwd.image, gt, scene.masks.mask(g, frame, id));
        sum += loss.value;
        loss.grad.rgb *= w;
        backward<double>(posed, cam, splats, fwd, loss.grad, d_object, opt);
      }
      level_means[level_index(g)] = sum * w;
      row.object_loss[level_index(g)] = sum * w;
    }
    const double obj = staged_object_loss(it, c, level_means);
    row.total_loss = row.render_loss + obj;
    if (!std::isfinite(row.total_loss))
      throw Diverged(it, fmt::format("non-finite loss at iteration {}", it));

    // Chain through the deformation field.
    GaussianGrads<double> d_cloud(n);
    std::vector<DeformationField<double>::Layer> d_field;
    if (field_on) {
      d_field = scene.deformation->zero_like();
      if (c.object_loss_reaches_deformation) {
        add_grads(d_render, d_object);
        deform_backward(scene.gaussians, *scene.deformation, *deformed, d_render, d_cloud, d_field,
                        c.deformation_through_position);
      } else {
        deform_backward(scene.gaussians, *scene.deformation, *deformed, d_render, d_cloud, d_field,
                        c.deformation_through_position);
        add_grads(d_cloud, d_object);
      }
    } else {
      d_cloud = std::move(d_render);
      add_grads(d_cloud, d_object);
    }
    adam_step(scene, adam, d_cloud, field_on ? &d_field : nullptr, extent);

    const int step = it + 1;
    if (step >= c.densify_from && step <= c.densify_end() && step % c.densify_interval == 0) {
      log.densify.push_back(densify_and_prune(scene, adam, stats, extent, rng));
      stats.resize(scene.gaussians.size());
      if (hooks.after_densify) hooks.after_densify(scene, step);
    }

    row.gaussians = static_cast<int>(scene.gaussians.size());
    if (step % c.psnr_interval == 0 || step == c.iterations) {
      const int saved = scene.iteration;
      row.psnr = mean_psnr(scene);
      scene.iteration = saved;
    }
    if (hooks.on_iteration) hooks.on_iteration(row);
    log.rows.push_back(row);
  }
  scene.rebuild_objects();
  return log;
}

}  // namespace segsplat
