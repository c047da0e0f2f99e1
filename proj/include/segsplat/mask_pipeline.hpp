#pragma once

#include <map>
#include <vector>

#include "segsplat/core.hpp"
#include "segsplat/masks.hpp"

namespace segsplat {

struct TrackingConfig {
  int delta_t = 10;                 // new-object detection stride, in frames
  double decline_threshold = 0.9;   // cur/prev segmented-ratio below this triggers detection
  double overlap_threshold = 0.1;   // resegmented masks with max IoU below this are new
  double multi_track_iou = 0.8;     // pairs above this IoU keep only the larger mask
  bool detect_new_objects = true;
  bool resolve_multi_tracking = true;
};

/// Fraction of the frame covered by the union of `masks`.
double segmented_ratio(const FrameMasks& masks, int width, int height);

/// Whether the coverage decline from `prev` to `cur` warrants resegmentation.
/// A zero previous ratio always triggers.
bool detection_triggered(const FrameMasks& prev, const FrameMasks& cur, int width, int height,
                         double decline_threshold);

struct NewObject {
  ObjectId track_id = 0;   // freshly allocated
  ObjectId candidate = 0;  // id of the resegmented mask it came from
  BinaryMask mask;
};

/// Resegmented masks whose IoU against every mask in `cur` stays below
/// `overlap_threshold`, returned only when the detection gate fires (or when
/// `forced`). Fresh ids are drawn from `next_id`.
std::vector<NewObject> detect_new_objects(const FrameMasks& prev, const FrameMasks& cur,
                                          const FrameMasks& resegmentation, int width, int height,
                                          double decline_threshold, double overlap_threshold, ObjectId& next_id,
                                          bool forced = false);

struct MultiTrackResult {
  FrameMasks kept;
  std::vector<ObjectId> removed;
};

/// Greedy IoU filtering: pairs visited by descending IoU (ties: smaller
/// combined area first); while both members survive and IoU > threshold the
/// mask with fewer pixels is dropped (ties: the higher track id).
MultiTrackResult resolve_multi_tracking(const FrameMasks& masks, double iou_threshold);

/// Per-step log of what consolidation did, for reports and tests.
struct ConsolidationLog {
  struct Detection {
    int frame;
    Granularity level;
    ObjectId track_id;
    ObjectId candidate;
  };
  struct Removal {
    int frame;
    Granularity level;
    ObjectId track_id;
  };
  std::vector<Detection> detections;
  std::vector<Removal> removals;
};

/// Runs new-object detection every `delta_t` frames and multi-track
/// resolution on every frame, emitting repaired id maps.
TrackedMasks consolidate(const RawMaskSequence& raw, const TrackingConfig& config,
                         ConsolidationLog* log = nullptr);

}  // namespace segsplat
