#pragma once

#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "segsplat/core.hpp"
#include "segsplat/image.hpp"
#include "segsplat/masks.hpp"

namespace segsplat {

double mse(const Imaged& a, const Imaged& b);

/// 10 log10(1 / MSE); +infinity for identical images.
double psnr(const Imaged& pred, const Imaged& target);

/// Mean IoU over class pairs; classes empty on both sides are skipped.
/// Throws when no class contributes.
double miou(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt);

/// Mean over frames of tracked / ground-truth object counts. Frames with no
/// ground-truth objects are skipped and reported in `warnings`.
double orr(const std::vector<int>& tracked, const std::vector<int>& gt, std::vector<std::string>* warnings = nullptr);

/// Sum over ground-truth objects of max(0, assigned tracks - 1).
int duplicate_count(const std::map<ObjectId, std::set<ObjectId>>& tracks_per_object);

/// Tracking quality of one granularity against ground-truth id maps
/// (one per frame, same resolution as the tracked maps).
struct TrackingScore {
  std::vector<int> tracked;  // per frame: ground-truth objects covered by some track
  std::vector<int> present;  // per frame: ground-truth objects present
  std::map<ObjectId, std::set<ObjectId>> assignment;  // ground truth -> tracks
  double orr = 0.0;
  int dup = 0;
};

/// A ground-truth object counts as tracked in a frame when some track mask
/// reaches `min_iou` against it there. Each track is assigned to the
/// ground-truth object it matches (IoU >= min_iou) in the most frames.
/// `frames` restricts scoring to the labeled frames (all frames when empty).
TrackingScore score_tracking(const TrackedMasks& masks, Granularity g, const std::vector<IdMap>& gt,
                             const std::vector<int>& frames = {}, double min_iou = 0.5);

}  // namespace segsplat
