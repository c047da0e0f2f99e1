#include "segsplat/scene.hpp"

#include <cmath>
#include <fmt/format.h>
#include <numeric>
#include <set>

namespace segsplat {

void ObjectRegistry::rebuild(const std::vector<ObjectIds>& ids) {
  std::array<LevelSets, 3> next;
  for (std::uint32_t i = 0; i < ids.size(); ++i) {
    for (Granularity g : kAllLevels) {
      const ObjectId id = ids[i][g];
      if (id == kBackground) continue;
      auto& set = next[level_index(g)][id];
      set.id = id;
      set.level = g;
      set.gaussians.push_back(i);
    }
  }
  for (Granularity g : kAllLevels) {
    for (auto& [id, set] : next[level_index(g)]) {
      if (const ObjectSet* old = find(g, id)) set.embedding = old->embedding;
      if (g != Granularity::Small) continue;
      std::map<std::pair<ObjectId, ObjectId>, int> votes;
      for (auto i : set.gaussians) ++votes[{ids[i].middle, ids[i].large}];
      auto best = votes.begin();
      for (auto it = votes.begin(); it != votes.end(); ++it)
        if (it->second > best->second) best = it;
      set.parents = best->first;
    }
  }
  levels_ = std::move(next);
}

const ObjectSet* ObjectRegistry::find(Granularity g, ObjectId id) const {
  const auto& sets = levels_[level_index(g)];
  auto it = sets.find(id);
  return it == sets.end() ? nullptr : &it->second;
}

ObjectSet* ObjectRegistry::find(Granularity g, ObjectId id) {
  auto& sets = levels_[level_index(g)];
  auto it = sets.find(id);
  return it == sets.end() ? nullptr : &it->second;
}

const ObjectSet* ObjectRegistry::find(ObjectId id) const {
  for (Granularity g : kAllLevels)
    if (const ObjectSet* s = find(g, id)) return s;
  return nullptr;
}

std::size_t ObjectRegistry::total_objects() const {
  std::size_t n = 0;
  for (const auto& l : levels_) n += l.size();
  return n;
}

std::vector<std::uint32_t> background_indices(const GaussianCloud<double>& cloud, Granularity g) {
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < cloud.size(); ++i)
    if (cloud.ids[i][g] == kBackground) out.push_back(i);
  return out;
}

std::vector<std::string> validate_scene(const SceneModel& scene) {
  std::vector<std::string> out;
  const auto& gs = scene.gaussians;
  const std::size_t n = gs.size();
  if (gs.rotations.size() != n || gs.log_scales.size() != n || gs.opacity_logits.size() != n ||
      gs.colors.size() != n || gs.ids.size() != n) {
    out.push_back("gaussian store: attribute arrays differ in length");
    return out;
  }

  for (std::size_t i = 0; i < n; ++i) {
    const double qn = gs.rotations[i].norm();
    if (!std::isfinite(qn) || std::abs(qn - 1.0) > 1e-6)
      out.push_back(fmt::format("gaussian {}: quaternion norm {} differs from 1", i, qn));
    const double o = gs.opacity(i);
    if (!std::isfinite(gs.opacity_logits[i]) || !(o > 0.0 && o < 1.0))
      out.push_back(fmt::format("gaussian {}: activated opacity outside (0,1)", i));
    const Vec3<double> s = gs.scale(i);
    if (!s.allFinite() || (s.array() <= 0.0).any()) out.push_back(fmt::format("gaussian {}: scale not positive", i));
    if (!gs.means[i].allFinite()) out.push_back(fmt::format("gaussian {}: non-finite mean", i));
  }

  for (std::size_t c = 0; c < scene.cameras.size(); ++c) {
    const auto& cam = scene.cameras[c];
    if (!(cam.fx > 0 && cam.fy > 0)) out.push_back(fmt::format("camera {}: focal length not positive", c));
    const double err = (cam.rotation * cam.rotation.transpose() - Mat3<double>::Identity()).cwiseAbs().maxCoeff();
    if (!(err <= 1e-6)) out.push_back(fmt::format("camera {}: rotation not orthonormal", c));
    if (cam.width <= 0 || cam.height <= 0) out.push_back(fmt::format("camera {}: empty image", c));
  }

  for (Granularity g : kAllLevels) {
    const auto name = to_string(g);
    std::vector<int> owners(n, 0);
    bool overlap = false;
    for (const auto& [id, set] : scene.objects.sets(g)) {
      if (set.gaussians.empty()) out.push_back(fmt::format("object {} at {}: empty set", id, name));
      for (auto i : set.gaussians) {
        if (i >= n) {
          out.push_back(fmt::format("object {} at {}: index {} out of range", id, name, i));
          continue;
        }
        if (++owners[i] > 1) overlap = true;
        if (gs.ids[i][g] != id)
          out.push_back(fmt::format("object {} at {}: member {} carries id {}", id, name, i, gs.ids[i][g]));
      }
    }
    if (overlap) out.push_back(fmt::format("overlapping sets at {}", name));
    for (std::size_t i = 0; i < n; ++i)
      if (owners[i] == 0 && gs.ids[i][g] != kBackground)
        out.push_back(fmt::format("gaussian {} at {}: id {} has no set", i, name, gs.ids[i][g]));
  }

  for (const auto& [id, set] : scene.objects.sets(Granularity::Small)) {
    std::set<std::pair<ObjectId, ObjectId>> parents;
    for (auto i : set.gaussians)
      if (i < n) parents.insert({gs.ids[i].middle, gs.ids[i].large});
    if (parents.size() > 1) out.push_back(fmt::format("object {} at small: inconsistent hierarchy", id));
  }

  const auto& masks = scene.masks;
  for (Granularity g : kAllLevels) {
    for (ObjectId id : masks.objects(g)) {
      if (scene.objects.find(g, id)) continue;
      if (masks.forwarding().contains(id)) continue;
      out.push_back(fmt::format("mask object {} at {}: no set and no forwarding", id, to_string(g)));
    }
  }

  for (const auto& [from, to] : masks.forwarding()) {
    const ObjectId target = masks.resolve(from);
    if (target == from || !scene.objects.find(target))
      out.push_back(fmt::format("forwarding {} -> {}: target has no set", from, to));
  }

  if (scene.deformation) {
    for (const auto& l : scene.deformation->layers())
      if (!l.weight.allFinite() || !l.bias.allFinite()) {
        out.push_back("deformation field: non-finite weights");
        break;
      }
  }
  return out;
}

GaussianCloud<double> posed_gaussians(const SceneModel& scene, double time) {
  if (!scene.deformation) return scene.gaussians;
  return deform(scene.gaussians, *scene.deformation, time).cloud;
}

ViewRender render_gaussians(const GaussianCloud<double>& posed, const Camerad& cam, const RenderOptions& opt,
                            const std::vector<std::uint32_t>* subset) {
  ViewRender out;
  if (subset)
    out.splats = project(posed, std::span<const std::uint32_t>(*subset), cam, opt);
  else
    out.splats = project(posed, cam, opt);
  out.result = render<double>(out.splats, cam.width, cam.height, opt);
  return out;
}

ViewRender render_view(const SceneModel& scene, const Camerad& cam, double time) {
  return render_gaussians(posed_gaussians(scene, time), cam, scene.config.render);
}

std::vector<std::uint32_t> object_members(const SceneModel& scene, ObjectId id, Granularity level) {
  if (id == kBackground) return background_indices(scene.gaussians, level);
  const ObjectSet* set = scene.objects.find(level, id);
  if (!set) {
    const ObjectId target = scene.masks.resolve(id);
    set = target != id ? scene.objects.find(level, target) : nullptr;
  }
  if (!set) throw Error(fmt::format("unknown object {} at {}", id, to_string(level)));
  return set->gaussians;
}

ViewRender render_object(const SceneModel& scene, ObjectId id, Granularity level, const Camerad& cam, double time) {
  const auto members = object_members(scene, id, level);
  return render_gaussians(posed_gaussians(scene, time), cam, scene.config.render, &members);
}

}  // namespace segsplat
