#include "segsplat/metrics.hpp"

#include <cmath>

namespace segsplat {

double mse(const Imaged& a, const Imaged& b) {
  if (a.width != b.width || a.height != b.height) throw Error("mse: image shape mismatch");
  if (a.pixel_count() == 0) throw Error("mse: empty image");
  return (a.rgb - b.rgb).square().mean();
}

double psnr(const Imaged& pred, const Imaged& target) {
  const double e = mse(pred, target);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / e);
}

double miou(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt) {
  if (pred.size() != gt.size()) throw Error("miou: class count mismatch");
  double sum = 0.0;
  int classes = 0;
  for (std::size_t c = 0; c < pred.size(); ++c) {
    if (pred[c].count() == 0 && gt[c].count() == 0) continue;
    sum += iou(pred[c], gt[c]);
    ++classes;
  }
  if (classes == 0) throw Error("miou: no classes");
  return sum / classes;
}

double orr(const std::vector<int>& tracked, const std::vector<int>& gt, std::vector<std::string>* warnings) {
  if (tracked.size() != gt.size()) throw Error("orr: frame count mismatch");
  double sum = 0.0;
  int frames = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == 0) {
      if (warnings) warnings->push_back("orr: frame " + std::to_string(i) + " has no ground-truth objects");
      continue;
    }
    sum += static_cast<double>(tracked[i]) / gt[i];
    ++frames;
  }
  if (frames == 0) throw Error("orr: no ground-truth frames");
  return sum / frames;
}

int duplicate_count(const std::map<ObjectId, std::set<ObjectId>>& tracks_per_object) {
  int dup = 0;
  for (const auto& [gt, tracks] : tracks_per_object) dup += std::max(0, static_cast<int>(tracks.size()) - 1);
  return dup;
}

TrackingScore score_tracking(const TrackedMasks& masks, Granularity g, const std::vector<IdMap>& gt,
                             const std::vector<int>& frames, double min_iou) {
  if (static_cast<int>(gt.size()) != masks.frame_count()) throw Error("score_tracking: frame count mismatch");
  TrackingScore out;
  std::map<ObjectId, std::map<ObjectId, int>> hits;  // track -> ground truth -> frames matched
  std::vector<int> labeled = frames;
  if (labeled.empty())
    for (int f = 0; f < masks.frame_count(); ++f) labeled.push_back(f);
  for (int f : labeled) {
    if (f < 0 || f >= masks.frame_count()) throw Error("score_tracking: frame " + std::to_string(f) + " out of range");
    const IdMap& pred = masks.map(g, f);
    if (gt[f].rows() != pred.rows() || gt[f].cols() != pred.cols())
      throw Error("score_tracking: resolution mismatch at frame " + std::to_string(f));
    std::set<ObjectId> gt_ids, track_ids;
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
      if (gt[f].data()[i] != kBackground) gt_ids.insert(gt[f].data()[i]);
      if (pred.data()[i] != kBackground) track_ids.insert(pred.data()[i]);
    }
    int tracked = 0;
    for (ObjectId o : gt_ids) {
      const BinaryMask gm = gt[f] == o;
      bool found = false;
      for (ObjectId t : track_ids) {
        if (iou(gm, pred == t) >= min_iou) {
          found = true;
          ++hits[t][o];
        }
      }
      tracked += found ? 1 : 0;
    }
    out.tracked.push_back(tracked);
    out.present.push_back(static_cast<int>(gt_ids.size()));
  }
  for (const auto& [track, counts] : hits) {
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
      if (it->second > best->second) best = it;
    out.assignment[best->first].insert(track);
  }
  out.orr = orr(out.tracked, out.present);
  out.dup = duplicate_count(out.assignment);
  return out;
}

}  // namespace segsplat
