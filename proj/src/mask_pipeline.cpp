#include "segsplat/mask_pipeline.hpp"

#include <algorithm>
#include <set>
#include <tuple>

namespace segsplat {

double segmented_ratio(const FrameMasks& masks, int width, int height) {
  if (width <= 0 || height <= 0) throw Error("empty frame");
  BinaryMask covered = BinaryMask::Constant(height, width, false);
  for (const auto& tm : masks) {
    if (tm.mask.rows() != height || tm.mask.cols() != width) throw Error("segmented_ratio: mask size mismatch");
    covered = covered || tm.mask;
  }
  return static_cast<double>(covered.count()) / (static_cast<double>(width) * height);
}

bool detection_triggered(const FrameMasks& prev, const FrameMasks& cur, int width, int height,
                         double decline_threshold) {
  const double before = segmented_ratio(prev, width, height);
  if (before <= 0.0) return true;
  return segmented_ratio(cur, width, height) / before < decline_threshold;
}

std::vector<NewObject> detect_new_objects(const FrameMasks& prev, const FrameMasks& cur,
                                          const FrameMasks& resegmentation, int width, int height,
                                          double decline_threshold, double overlap_threshold, ObjectId& next_id,
                                          bool forced) {
  std::vector<NewObject> found;
  if (!forced && !detection_triggered(prev, cur, width, height, decline_threshold)) return found;
  for (const auto& candidate : resegmentation) {
    if (candidate.mask.count() == 0) continue;
    double best = 0.0;
    for (const auto& tracked : cur) best = std::max(best, iou(candidate.mask, tracked.mask));
    if (best < overlap_threshold) found.push_back({next_id++, candidate.track_id, candidate.mask});
  }
  return found;
}

MultiTrackResult resolve_multi_tracking(const FrameMasks& masks, double iou_threshold) {
  struct Pair {
    double iou;
    Eigen::Index combined;
    std::size_t a, b;
  };
  std::vector<Eigen::Index> area(masks.size());
  for (std::size_t i = 0; i < masks.size(); ++i) area[i] = masks[i].mask.count();
  std::vector<Pair> pairs;
  for (std::size_t a = 0; a < masks.size(); ++a)
    for (std::size_t b = a + 1; b < masks.size(); ++b) {
      const double v = iou(masks[a].mask, masks[b].mask);
      if (v > iou_threshold) pairs.push_back({v, area[a] + area[b], a, b});
    }
  std::sort(pairs.begin(), pairs.end(), [&](const Pair& x, const Pair& y) {
    if (x.iou != y.iou) return x.iou > y.iou;
    if (x.combined != y.combined) return x.combined < y.combined;
    return std::tie(masks[x.a].track_id, masks[x.b].track_id) < std::tie(masks[y.a].track_id, masks[y.b].track_id);
  });
  std::vector<bool> dropped(masks.size(), false);
  for (const auto& p : pairs) {
    if (dropped[p.a] || dropped[p.b]) continue;
    std::size_t loser;
    if (area[p.a] != area[p.b])
      loser = area[p.a] < area[p.b] ? p.a : p.b;
    else
      loser = masks[p.a].track_id > masks[p.b].track_id ? p.a : p.b;
    dropped[loser] = true;
  }
  MultiTrackResult out;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (dropped[i])
      out.removed.push_back(masks[i].track_id);
    else
      out.kept.push_back(masks[i]);
  }
  return out;
}

TrackedMasks consolidate(const RawMaskSequence& raw, const TrackingConfig& config, ConsolidationLog* log) {
  raw.validate();
  if (config.delta_t < 1) throw Error("consolidate: delta_t must be positive");
  const int w = raw.width, h = raw.height, n = raw.frame_count();
  TrackedMasks out(w, h, n);
  ObjectId next_id = raw.max_id() + 1;

  std::array<std::set<ObjectId>, 3> terminated;
  std::array<std::map<ObjectId, ObjectId>, 3> admitted;  // candidate -> track id
  std::array<std::vector<FrameMasks>, 3> emitted;
  for (auto& e : emitted) e.resize(n);

  for (int f = 0; f < n; ++f) {
    std::array<FrameMasks, 3> cur;
    for (Granularity g : kAllLevels) {
      const std::size_t li = level_index(g);
      for (const auto& tm : raw.at(f, g))
        if (!terminated[li].contains(tm.track_id)) cur[li].push_back(tm);
      for (const auto& [cand, track] : admitted[li]) {
        if (terminated[li].contains(track)) continue;
        const auto& masks = raw.candidates.at(cand).masks;
        auto it = masks.find(f);
        if (it != masks.end()) cur[li].push_back({track, it->second});
      }
    }

    if (config.detect_new_objects && f > 0 && f % config.delta_t == 0) {
      const int prev = f - config.delta_t;
      bool trigger = false;
      for (Granularity g : kAllLevels)
        trigger = trigger || detection_triggered(emitted[level_index(g)][prev], cur[level_index(g)], w, h,
                                                 config.decline_threshold);
      auto reseg = raw.resegmentations.find(f);
      if (trigger && reseg != raw.resegmentations.end()) {
        for (Granularity g : kAllLevels) {
          const std::size_t li = level_index(g);
          auto found = detect_new_objects(emitted[li][prev], cur[li], reseg->second[li], w, h,
                                          config.decline_threshold, config.overlap_threshold, next_id, true);
          for (auto& obj : found) {
            if (!raw.candidates.contains(obj.candidate))
              throw Error("consolidate: resegmented mask " + std::to_string(obj.candidate) +
                          " has no candidate track");
            admitted[li][obj.candidate] = obj.track_id;
            if (log) log->detections.push_back({f, g, obj.track_id, obj.candidate});
            cur[li].push_back({obj.track_id, std::move(obj.mask)});
          }
        }
      }
    }

    for (Granularity g : kAllLevels) {
      const std::size_t li = level_index(g);
      if (config.resolve_multi_tracking) {
        auto resolved = resolve_multi_tracking(cur[li], config.multi_track_iou);
        for (ObjectId id : resolved.removed) {
          terminated[li].insert(id);
          if (log) log->removals.push_back({f, g, id});
        }
        cur[li] = std::move(resolved.kept);
      }
      out.map(g, f) = to_id_map(cur[li], w, h);
      emitted[li][f] = std::move(cur[li]);
    }
  }
  out.refresh_tracks();
  return out;
}

}  // namespace segsplat
