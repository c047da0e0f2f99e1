#pragma once

#include <array>
#include <compare>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "segsplat/core.hpp"
#include "segsplat/image.hpp"

namespace segsplat {

/// One tracked binary mask.
struct TrackMask {
  ObjectId track_id = 0;
  BinaryMask mask;
};

/// All masks of one frame at one granularity.
using FrameMasks = std::vector<TrackMask>;

/// Tracker output before repair. Masks within a (frame, level) may overlap.
///
/// Resegmentations are fresh full segmentations at detection frames; each
/// resegmented mask carries a candidate id whose forward continuation (what
/// the tracker produces when prompted with that mask) is stored in
/// `candidates`. Candidate masks only enter the output once the new-object
/// detector admits them.
struct RawMaskSequence {
  struct Frame {
    std::array<FrameMasks, 3> levels;
  };
  struct Candidate {
    Granularity level = Granularity::Small;
    std::map<int, BinaryMask> masks;  // frame -> mask, from the resegmentation frame on
  };

  int width = 0;
  int height = 0;
  std::vector<Frame> frames;
  std::map<int, std::array<FrameMasks, 3>> resegmentations;
  std::map<ObjectId, Candidate> candidates;

  int frame_count() const { return static_cast<int>(frames.size()); }
  const FrameMasks& at(int frame, Granularity g) const { return frames.at(frame).levels[level_index(g)]; }
  FrameMasks& at(int frame, Granularity g) { return frames.at(frame).levels[level_index(g)]; }

  /// Throws when any mask disagrees with the sequence resolution.
  void validate() const;
  ObjectId max_id() const;
};

struct TrackInfo {
  Granularity level = Granularity::Small;
  int first_seen = -1;
  int last_seen = -1;
};

struct PartialKey {
  Granularity level;
  ObjectId object;
  int frame;
  auto operator<=>(const PartialKey&) const = default;
};

/// Repaired masks: per (level, frame) a pixel -> object id map (0 = unsegmented),
/// plus track metadata, merge forwarding and partial-mask flags.
class TrackedMasks {
 public:
  TrackedMasks() = default;
  TrackedMasks(int width, int height, int frames);

  int width() const { return width_; }
  int height() const { return height_; }
  int frame_count() const { return frames_; }

  const IdMap& map(Granularity g, int frame) const { return maps_[level_index(g)].at(frame); }
  IdMap& map(Granularity g, int frame) { return maps_[level_index(g)].at(frame); }

  BinaryMask mask(Granularity g, int frame, ObjectId id) const { return map(g, frame) == id; }

  const std::map<ObjectId, TrackInfo>& tracks() const { return tracks_; }
  std::vector<ObjectId> objects(Granularity g) const;
  std::optional<TrackInfo> track(ObjectId id) const;

  /// Recomputes first/last-seen frames from the id maps. Levels of ids already
  /// registered are kept; new ids take the level they appear at.
  void refresh_tracks();

  /// Frames in which `id` owns at least one pixel at level `g`.
  std::vector<int> frames_with(Granularity g, ObjectId id) const;

  /// Rewrites `from` to `to` in every map at level `g` and records the forwarding.
  void merge(Granularity g, ObjectId from, ObjectId to);
  const std::map<ObjectId, ObjectId>& forwarding() const { return forwarding_; }
  void set_forwarding(ObjectId from, ObjectId to) { forwarding_[from] = to; }
  /// Follows the forwarding chain to the surviving id.
  ObjectId resolve(ObjectId id) const;

  bool is_partial(Granularity g, ObjectId id, int frame) const { return partial_.contains({g, id, frame}); }
  void flag_partial(Granularity g, ObjectId id, int frame) { partial_.insert({g, id, frame}); }
  const std::set<PartialKey>& partial() const { return partial_; }

 private:
  int width_ = 0;
  int height_ = 0;
  int frames_ = 0;
  std::array<std::vector<IdMap>, 3> maps_;
  std::map<ObjectId, TrackInfo> tracks_;
  std::map<ObjectId, ObjectId> forwarding_;
  std::set<PartialKey> partial_;
};

/// Flattens masks into an id map. Overlapping pixels go to the mask with the
/// fewest pixels (ties: lower id).
IdMap to_id_map(const FrameMasks& masks, int width, int height);

/// Splits an id map into one mask per non-zero id, ascending by id.
FrameMasks from_id_map(const IdMap& map);

}  // namespace segsplat
