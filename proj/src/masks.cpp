#include "segsplat/masks.hpp"

#include <algorithm>
#include <numeric>
#include <optional>

namespace segsplat {

void RawMaskSequence::validate() const {
  if (width <= 0 || height <= 0) throw Error("raw masks: empty frame resolution");
  auto check = [&](const BinaryMask& m, const char* what, int frame) {
    if (m.rows() != height || m.cols() != width)
      throw Error(std::string("raw masks: ") + what + " at frame " + std::to_string(frame) +
                  " has resolution " + std::to_string(m.cols()) + "x" + std::to_string(m.rows()) + ", expected " +
                  std::to_string(width) + "x" + std::to_string(height));
  };
  for (int f = 0; f < frame_count(); ++f)
    for (const auto& level : frames[f].levels)
      for (const auto& tm : level) check(tm.mask, "track mask", f);
  for (const auto& [f, levels] : resegmentations)
    for (const auto& level : levels)
      for (const auto& tm : level) check(tm.mask, "resegmentation mask", f);
  for (const auto& [id, cand] : candidates)
    for (const auto& [f, m] : cand.masks) check(m, "candidate mask", f);
}

ObjectId RawMaskSequence::max_id() const {
  ObjectId m = 0;
  for (const auto& fr : frames)
    for (const auto& level : fr.levels)
      for (const auto& tm : level) m = std::max(m, tm.track_id);
  for (const auto& [f, levels] : resegmentations)
    for (const auto& level : levels)
      for (const auto& tm : level) m = std::max(m, tm.track_id);
  for (const auto& [id, c] : candidates) m = std::max(m, id);
  return m;
}

TrackedMasks::TrackedMasks(int width, int height, int frames) : width_(width), height_(height), frames_(frames) {
  for (auto& level : maps_) level.assign(frames, IdMap::Zero(height, width));
}

std::vector<ObjectId> TrackedMasks::objects(Granularity g) const {
  std::vector<ObjectId> out;
  for (const auto& [id, info] : tracks_)
    if (info.level == g) out.push_back(id);
  return out;
}

std::optional<TrackInfo> TrackedMasks::track(ObjectId id) const {
  auto it = tracks_.find(id);
  if (it == tracks_.end()) return std::nullopt;
  return it->second;
}

void TrackedMasks::refresh_tracks() {
  std::map<ObjectId, TrackInfo> fresh;
  for (Granularity g : kAllLevels) {
    for (int f = 0; f < frames_; ++f) {
      const IdMap& m = maps_[level_index(g)][f];
      std::set<ObjectId> seen(m.data(), m.data() + m.size());
      for (ObjectId id : seen) {
        if (id == kBackground) continue;
        auto [it, inserted] = fresh.try_emplace(id, TrackInfo{g, f, f});
        if (!inserted) {
          it->second.first_seen = std::min(it->second.first_seen, f);
          it->second.last_seen = std::max(it->second.last_seen, f);
        }
      }
    }
  }
  for (auto& [id, info] : fresh) {
    auto old = tracks_.find(id);
    if (old != tracks_.end()) info.level = old->second.level;
  }
  tracks_ = std::move(fresh);
}

std::vector<int> TrackedMasks::frames_with(Granularity g, ObjectId id) const {
  std::vector<int> out;
  for (int f = 0; f < frames_; ++f)
    if ((maps_[level_index(g)][f] == id).any()) out.push_back(f);
  return out;
}

void TrackedMasks::merge(Granularity g, ObjectId from, ObjectId to) {
  if (from == to) return;
  for (IdMap& m : maps_[level_index(g)]) m = (m == from).select(IdMap::Constant(m.rows(), m.cols(), to), m);
  // Partial flags follow the surviving id.
  std::vector<PartialKey> moved;
  for (const auto& k : partial_)
    if (k.level == g && k.object == from) moved.push_back(k);
  for (const auto& k : moved) partial_.insert({g, to, k.frame});
  forwarding_[from] = to;
  refresh_tracks();
}

ObjectId TrackedMasks::resolve(ObjectId id) const {
  for (int hops = 0; hops < 1 << 20; ++hops) {
    auto it = forwarding_.find(id);
    if (it == forwarding_.end()) return id;
    id = it->second;
  }
  throw Error("forwarding cycle");
}

IdMap to_id_map(const FrameMasks& masks, int width, int height) {
  std::vector<std::size_t> order(masks.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Eigen::Index> area(masks.size());
  for (std::size_t i = 0; i < masks.size(); ++i) area[i] = masks[i].mask.count();
  // Paint largest first so smaller masks end up on top.
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (area[a] != area[b]) return area[a] > area[b];
    return masks[a].track_id > masks[b].track_id;
  });
  IdMap out = IdMap::Zero(height, width);
  for (std::size_t i : order) {
    const auto& tm = masks[i];
    if (tm.mask.rows() != height || tm.mask.cols() != width) throw Error("to_id_map: mask size mismatch");
    out = tm.mask.select(IdMap::Constant(height, width, tm.track_id), out);
  }
  return out;
}

FrameMasks from_id_map(const IdMap& map) {
  std::set<ObjectId> ids(map.data(), map.data() + map.size());
  FrameMasks out;
  for (ObjectId id : ids)
    if (id != kBackground) out.push_back({id, map == id});
  return out;
}

}  // namespace segsplat
