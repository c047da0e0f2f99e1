#include <cmath>
#include <set>

#include <fmt/format.h>

#include "segsplat/io.hpp"

namespace segsplat::io {

namespace {

// Reads known keys out of a JSON object and reports unknown or ill-typed ones.
class Fields {
 public:
  Fields(const json& j, std::string scope, std::vector<std::string>& errors)
      : j_(j), scope_(std::move(scope)), errors_(errors) {
    if (!j.is_object()) errors_.push_back(fmt::format("{}: expected an object", scope_));
  }

  template <typename T>
  void get(const char* key, T& value) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return;
    try {
      value = j_.at(key).get<T>();
    } catch (const json::exception&) {
      errors_.push_back(fmt::format("{}.{}: wrong type", scope_, key));
    }
  }

  void skip(const char* key) { seen_.insert(key); }

  void finish() {
    if (!j_.is_object()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k)) errors_.push_back(fmt::format("{}: unknown key '{}'", scope_, k));
  }

 private:
  const json& j_;
  std::string scope_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

void raise(const std::vector<std::string>& errors) {
  if (errors.empty()) return;
  std::string msg;
  for (const auto& e : errors) msg += (msg.empty() ? "" : "; ") + e;
  throw Error(msg);
}

std::string stage_order_name(StageOrder o) { return o == StageOrder::SmallFirst ? "small_first" : "large_first"; }

void read_tracking(const json& j, TrackingConfig& c, std::vector<std::string>& errors) {
  Fields f(j, "tracking", errors);
  f.get("delta_t", c.delta_t);
  f.get("decline_threshold", c.decline_threshold);
  f.get("overlap_threshold", c.overlap_threshold);
  f.get("multi_track_iou", c.multi_track_iou);
  f.get("detect_new_objects", c.detect_new_objects);
  f.get("resolve_multi_tracking", c.resolve_multi_tracking);
  f.finish();
  if (c.delta_t < 1) errors.push_back("tracking.delta_t: must be at least 1");
}

void read_init(const json& j, InitConfig& c, std::vector<std::string>& errors) {
  Fields f(j, "init", errors);
  f.get("lambda_d", c.lambda_d);
  f.get("merge_threshold", c.merge_threshold);
  f.get("merge_lost_tracks", c.merge_lost_tracks);
  f.get("random_per_missing", c.random_per_missing);
  f.get("background_count", c.background_count);
  f.get("initial_opacity", c.initial_opacity);
  f.get("random_samples_max_tries", c.random_samples_max_tries);
  f.finish();
  for (const auto& m : c.validate()) errors.push_back("init: " + m);
}

void read_render(const json& j, RenderOptions& r, std::vector<std::string>& errors) {
  Fields f(j, "train.render", errors);
  f.get("max_alpha", r.max_alpha);
  f.get("min_alpha", r.min_alpha);
  f.get("transmittance_cutoff", r.transmittance_cutoff);
  f.get("tile_size", r.tile_size);
  f.get("low_pass", r.low_pass);
  f.get("near_plane", r.near_plane);
  f.finish();
}

void read_train(const json& j, TrainConfig& c, std::vector<std::string>& errors) {
  Fields f(j, "train", errors);
  f.get("iterations", c.iterations);
  f.get("lambda_render", c.lambda_render);
  f.get("objects_per_level", c.objects_per_level);
  f.get("stage1_end", c.stage1_end);
  f.get("stage2_end", c.stage2_end);
  std::string order = stage_order_name(c.stage_order);
  f.get("stage_order", order);
  if (order == "small_first") c.stage_order = StageOrder::SmallFirst;
  else if (order == "large_first") c.stage_order = StageOrder::LargeFirst;
  else errors.push_back(fmt::format("train.stage_order: '{}' is not small_first or large_first", order));
  f.get("partial_filtering", c.partial_filtering);
  f.get("partial_window", c.partial_window);
  f.get("partial_iou", c.partial_iou);
  f.get("lr_position_init", c.lr_position_init);
  f.get("lr_position_final", c.lr_position_final);
  f.get("lr_color", c.lr_color);
  f.get("lr_opacity", c.lr_opacity);
  f.get("lr_scale", c.lr_scale);
  f.get("lr_rotation", c.lr_rotation);
  f.get("lr_deformation", c.lr_deformation);
  f.get("adam_beta1", c.adam_beta1);
  f.get("adam_beta2", c.adam_beta2);
  f.get("adam_epsilon", c.adam_epsilon);
  f.get("spatial_lr_scale", c.spatial_lr_scale);
  f.get("densify_from", c.densify_from);
  f.get("densify_until", c.densify_until);
  f.get("densify_interval", c.densify_interval);
  f.get("densify_grad_threshold", c.densify_grad_threshold);
  f.get("percent_dense", c.percent_dense);
  f.get("prune_opacity", c.prune_opacity);
  f.get("persistence_floor", c.persistence_floor);
  f.get("object_loss_reaches_deformation", c.object_loss_reaches_deformation);
  f.get("deformation_through_position", c.deformation_through_position);
  f.get("deformation_warmup", c.deformation_warmup);
  f.get("psnr_interval", c.psnr_interval);
  if (j.is_object() && j.contains("render")) read_render(j.at("render"), c.render, errors);
  f.skip("render");
  f.finish();
  for (const auto& m : c.validate()) errors.push_back("train: " + m);
}

void read_deformation(const json& j, DeformationConfig& c, std::vector<std::string>& errors) {
  Fields f(j, "deformation", errors);
  f.get("hidden_layers", c.hidden_layers);
  f.get("width", c.width);
  f.get("position_frequencies", c.position_frequencies);
  f.get("time_frequencies", c.time_frequencies);
  f.finish();
  if (c.hidden_layers < 1) errors.push_back("deformation.hidden_layers: must be at least 1");
  if (c.width < 1) errors.push_back("deformation.width: must be at least 1");
  if (c.position_frequencies < 0 || c.time_frequencies < 0)
    errors.push_back("deformation: frequency counts must be non-negative");
}

json mask_entries(const FrameMasks& masks) {
  json out = json::array();
  for (const auto& m : masks) out.push_back({{"id", m.track_id}, {"rle", rle_encode(m.mask)}});
  return out;
}

FrameMasks parse_entries(const json& j, int w, int h) {
  FrameMasks out;
  for (const auto& e : j) out.push_back({e.at("id").get<ObjectId>(), rle_decode(e.at("rle").get<std::vector<std::uint32_t>>(), w, h)});
  return out;
}

json levels_json(const std::array<FrameMasks, 3>& levels) {
  json out = json::object();
  for (Granularity g : kAllLevels) out[std::string(1, level_code(g))] = mask_entries(levels[level_index(g)]);
  return out;
}

std::array<FrameMasks, 3> parse_levels(const json& j, int w, int h) {
  std::array<FrameMasks, 3> out;
  for (Granularity g : kAllLevels) {
    const std::string key(1, level_code(g));
    if (j.contains(key)) out[level_index(g)] = parse_entries(j.at(key), w, h);
  }
  return out;
}

Granularity parse_level_code(const std::string& s) {
  if (s == "S") return Granularity::Small;
  if (s == "M") return Granularity::Middle;
  if (s == "L") return Granularity::Large;
  return parse_granularity(s);
}

json candidates_json(const RawMaskSequence& raw) {
  json out = json::array();
  for (const auto& [id, c] : raw.candidates) {
    json masks = json::array();
    for (const auto& [frame, m] : c.masks) masks.push_back({{"frame", frame}, {"rle", rle_encode(m)}});
    out.push_back({{"id", id}, {"level", std::string(1, level_code(c.level))}, {"masks", masks}});
  }
  return out;
}

void parse_extras(const json& j, RawMaskSequence& raw) {
  if (j.contains("resegmentations"))
    for (const auto& r : j.at("resegmentations"))
      raw.resegmentations[r.at("frame").get<int>()] = parse_levels(r.at("levels"), raw.width, raw.height);
  if (j.contains("candidates"))
    for (const auto& c : j.at("candidates")) {
      RawMaskSequence::Candidate cand;
      cand.level = parse_level_code(c.at("level").get<std::string>());
      for (const auto& m : c.at("masks"))
        cand.masks[m.at("frame").get<int>()] =
            rle_decode(m.at("rle").get<std::vector<std::uint32_t>>(), raw.width, raw.height);
      raw.candidates[c.at("id").get<ObjectId>()] = std::move(cand);
    }
}

json extras_json(const RawMaskSequence& raw) {
  json reseg = json::array();
  for (const auto& [frame, levels] : raw.resegmentations) reseg.push_back({{"frame", frame}, {"levels", levels_json(levels)}});
  return {{"resegmentations", reseg}, {"candidates", candidates_json(raw)}};
}

std::string frame_file(Granularity g, int frame) { return fmt::format("g{}_f{:05}.png", level_code(g), frame); }

}  // namespace

json to_json(const TrackingConfig& c) {
  return {{"delta_t", c.delta_t},
          {"decline_threshold", c.decline_threshold},
          {"overlap_threshold", c.overlap_threshold},
          {"multi_track_iou", c.multi_track_iou},
          {"detect_new_objects", c.detect_new_objects},
          {"resolve_multi_tracking", c.resolve_multi_tracking}};
}

json to_json(const InitConfig& c) {
  return {{"lambda_d", c.lambda_d},
          {"merge_threshold", c.merge_threshold},
          {"merge_lost_tracks", c.merge_lost_tracks},
          {"random_per_missing", c.random_per_missing},
          {"background_count", c.background_count},
          {"initial_opacity", c.initial_opacity},
          {"random_samples_max_tries", c.random_samples_max_tries}};
}

json to_json(const TrainConfig& c) {
  return {{"iterations", c.iterations},
          {"lambda_render", c.lambda_render},
          {"objects_per_level", c.objects_per_level},
          {"stage1_end", c.stage1_end},
          {"stage2_end", c.stage2_end},
          {"stage_order", stage_order_name(c.stage_order)},
          {"partial_filtering", c.partial_filtering},
          {"partial_window", c.partial_window},
          {"partial_iou", c.partial_iou},
          {"lr_position_init", c.lr_position_init},
          {"lr_position_final", c.lr_position_final},
          {"lr_color", c.lr_color},
          {"lr_opacity", c.lr_opacity},
          {"lr_scale", c.lr_scale},
          {"lr_rotation", c.lr_rotation},
          {"lr_deformation", c.lr_deformation},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"spatial_lr_scale", c.spatial_lr_scale},
          {"densify_from", c.densify_from},
          {"densify_until", c.densify_until},
          {"densify_interval", c.densify_interval},
          {"densify_grad_threshold", c.densify_grad_threshold},
          {"percent_dense", c.percent_dense},
          {"prune_opacity", c.prune_opacity},
          {"persistence_floor", c.persistence_floor},
          {"object_loss_reaches_deformation", c.object_loss_reaches_deformation},
          {"deformation_through_position", c.deformation_through_position},
          {"deformation_warmup", c.deformation_warmup},
          {"psnr_interval", c.psnr_interval},
          {"render",
           {{"max_alpha", c.render.max_alpha},
            {"min_alpha", c.render.min_alpha},
            {"transmittance_cutoff", c.render.transmittance_cutoff},
            {"tile_size", c.render.tile_size},
            {"low_pass", c.render.low_pass},
            {"near_plane", c.render.near_plane}}}};
}

json to_json(const DeformationConfig& c) {
  return {{"hidden_layers", c.hidden_layers},
          {"width", c.width},
          {"position_frequencies", c.position_frequencies},
          {"time_frequencies", c.time_frequencies}};
}

void from_json(const json& j, TrackingConfig& c) {
  std::vector<std::string> errors;
  read_tracking(j, c, errors);
  raise(errors);
}
void from_json(const json& j, InitConfig& c) {
  std::vector<std::string> errors;
  read_init(j, c, errors);
  raise(errors);
}
void from_json(const json& j, TrainConfig& c) {
  std::vector<std::string> errors;
  read_train(j, c, errors);
  raise(errors);
}
void from_json(const json& j, DeformationConfig& c) {
  std::vector<std::string> errors;
  read_deformation(j, c, errors);
  raise(errors);
}

json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(fmt::format("{}: invalid JSON ({})", path.string(), e.what()));
  }
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

// Cameras.

json cameras_json(const std::vector<Camerad>& cameras) {
  json out = json::array();
  for (const auto& c : cameras) {
    json rot = json::array();
    for (int r = 0; r < 3; ++r) rot.push_back({c.rotation(r, 0), c.rotation(r, 1), c.rotation(r, 2)});
    out.push_back({{"width", c.width},
                   {"height", c.height},
                   {"fx", c.fx},
                   {"fy", c.fy},
                   {"cx", c.cx},
                   {"cy", c.cy},
                   {"rotation", rot},
                   {"translation", {c.translation.x(), c.translation.y(), c.translation.z()}},
                   {"frame", c.frame_index},
                   {"time", c.time}});
  }
  return out;
}

std::vector<Camerad> cameras_from_json(const json& j) {
  if (!j.is_array()) throw Error("cameras: expected a JSON array");
  std::vector<Camerad> out;
  std::vector<std::string> errors;
  for (std::size_t i = 0; i < j.size(); ++i) {
    Camerad c;
    c.frame_index = static_cast<int>(i);
    std::vector<std::vector<double>> rot;
    std::vector<double> trans{0, 0, 0};
    Fields f(j[i], fmt::format("cameras[{}]", i), errors);
    f.get("width", c.width);
    f.get("height", c.height);
    f.get("fx", c.fx);
    f.get("fy", c.fy);
    f.get("cx", c.cx);
    f.get("cy", c.cy);
    f.get("rotation", rot);
    f.get("translation", trans);
    f.get("frame", c.frame_index);
    f.get("time", c.time);
    f.finish();
    if (!rot.empty()) {
      if (rot.size() != 3 || rot[0].size() != 3 || rot[1].size() != 3 || rot[2].size() != 3)
        errors.push_back(fmt::format("cameras[{}].rotation: expected 3x3", i));
      else
        for (int r = 0; r < 3; ++r)
          for (int k = 0; k < 3; ++k) c.rotation(r, k) = rot[r][k];
    }
    if (trans.size() != 3) errors.push_back(fmt::format("cameras[{}].translation: expected 3 values", i));
    else c.translation = {trans[0], trans[1], trans[2]};
    if (c.width <= 0 || c.height <= 0) errors.push_back(fmt::format("cameras[{}]: non-positive resolution", i));
    if (!(c.fx > 0) || !(c.fy > 0)) errors.push_back(fmt::format("cameras[{}]: non-positive focal length", i));
    if (!(c.rotation * c.rotation.transpose()).isIdentity(1e-6))
      errors.push_back(fmt::format("cameras[{}].rotation: not orthonormal", i));
    if (c.time < 0 || c.time > 1) errors.push_back(fmt::format("cameras[{}].time: outside [0, 1]", i));
    out.push_back(c);
  }
  raise(errors);
  return out;
}

std::vector<Camerad> read_cameras(const fs::path& path) { return cameras_from_json(read_json(path)); }
void write_cameras(const fs::path& path, const std::vector<Camerad>& cameras) { write_json(path, cameras_json(cameras)); }

// Scene configuration.

std::vector<std::string> validate_scene_config(const json& j, const fs::path& base) {
  std::vector<std::string> errors;
  Fields f(j, "scene", errors);
  std::string cameras, images, masks, points, embeddings;
  std::uint64_t seed = 0;
  f.get("cameras", cameras);
  f.get("images", images);
  f.get("masks", masks);
  f.get("points", points);
  f.get("embeddings", embeddings);
  f.get("seed", seed);
  json tracking = json::object(), init = json::object(), train = json::object(), deformation;
  f.get("tracking", tracking);
  f.get("init", init);
  f.get("train", train);
  f.get("deformation", deformation);
  f.finish();
  if (!j.is_object()) return errors;
  auto require = [&](const char* key, const std::string& value) {
    if (value.empty()) errors.push_back(fmt::format("scene.{}: missing", key));
    else if (!fs::exists(base / value)) errors.push_back(fmt::format("scene.{}: {} does not exist", key, (base / value).string()));
  };
  require("cameras", cameras);
  require("images", images);
  require("masks", masks);
  require("points", points);
  if (!embeddings.empty() && !fs::exists(base / embeddings))
    errors.push_back(fmt::format("scene.embeddings: {} does not exist", (base / embeddings).string()));
  TrackingConfig tc;
  InitConfig ic;
  TrainConfig trc;
  read_tracking(tracking, tc, errors);
  read_init(init, ic, errors);
  read_train(train, trc, errors);
  if (!deformation.is_null()) {
    DeformationConfig dc;
    read_deformation(deformation, dc, errors);
  }
  return errors;
}

SceneConfig read_scene_config(const fs::path& path) {
  return scene_config_from_json(read_json(path), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

SceneConfig scene_config_from_json(const json& j, const fs::path& base) {
  raise(validate_scene_config(j, base));
  SceneConfig c;
  c.cameras = base / j.at("cameras").get<std::string>();
  c.images = base / j.at("images").get<std::string>();
  c.masks = base / j.at("masks").get<std::string>();
  c.points = base / j.at("points").get<std::string>();
  if (j.contains("embeddings")) c.embeddings = base / j.at("embeddings").get<std::string>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("tracking")) from_json(j.at("tracking"), c.tracking);
  if (j.contains("init")) from_json(j.at("init"), c.init);
  if (j.contains("train")) from_json(j.at("train"), c.train);
  if (j.contains("deformation") && !j.at("deformation").is_null()) {
    DeformationConfig d;
    from_json(j.at("deformation"), d);
    c.deformation = d;
  }
  return c;
}

json scene_config_json(const SceneConfig& c, const fs::path& base) {
  auto rel = [&](const fs::path& p) { return base.empty() ? p.generic_string() : fs::relative(p, base).generic_string(); };
  json out{{"cameras", rel(c.cameras)},
           {"images", rel(c.images)},
           {"masks", rel(c.masks)},
           {"points", rel(c.points)},
           {"seed", c.seed},
           {"tracking", to_json(c.tracking)},
           {"init", to_json(c.init)},
           {"train", to_json(c.train)}};
  if (!c.embeddings.empty()) out["embeddings"] = rel(c.embeddings);
  if (c.deformation) out["deformation"] = to_json(*c.deformation);
  return out;
}

// Masks.

std::vector<std::uint32_t> rle_encode(const BinaryMask& mask) {
  std::vector<std::uint32_t> counts;
  bool current = false;
  std::uint32_t run = 0;
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    if (mask.data()[i] != current) {
      counts.push_back(run);
      run = 0;
      current = !current;
    }
    ++run;
  }
  counts.push_back(run);
  return counts;
}

BinaryMask rle_decode(const std::vector<std::uint32_t>& counts, int width, int height) {
  BinaryMask m = BinaryMask::Constant(height, width, false);
  std::size_t pos = 0;
  bool value = false;
  const std::size_t n = static_cast<std::size_t>(width) * height;
  for (std::uint32_t c : counts) {
    if (pos + c > n) throw Error("rle: runs exceed the mask size");
    if (value) std::fill(m.data() + pos, m.data() + pos + c, true);
    pos += c;
    value = !value;
  }
  if (pos != n) throw Error(fmt::format("rle: runs cover {} of {} pixels", pos, n));
  return m;
}

json raw_masks_json(const RawMaskSequence& raw) {
  json frames = json::array();
  for (int f = 0; f < raw.frame_count(); ++f) frames.push_back(levels_json(raw.frames[f].levels));
  json out{{"format", "segsplat-raw-masks"}, {"version", 1}, {"width", raw.width}, {"height", raw.height}, {"frames", frames}};
  out.update(extras_json(raw));
  return out;
}

RawMaskSequence raw_masks_from_json(const json& j) {
  RawMaskSequence raw;
  try {
    raw.width = j.at("width").get<int>();
    raw.height = j.at("height").get<int>();
    for (const auto& f : j.at("frames")) raw.frames.push_back({parse_levels(f, raw.width, raw.height)});
    parse_extras(j, raw);
  } catch (const json::exception& e) {
    throw Error(fmt::format("raw masks: {}", e.what()));
  }
  raw.validate();
  return raw;
}

void write_raw_masks_dir(const fs::path& dir, const RawMaskSequence& raw) {
  fs::create_directories(dir);
  json frames = json::array();
  for (int f = 0; f < raw.frame_count(); ++f) {
    json levels = json::object();
    for (Granularity g : kAllLevels) {
      const FrameMasks& masks = raw.at(f, g);
      BinaryMask covered = BinaryMask::Constant(raw.height, raw.width, false);
      json ids = json::array();
      for (const auto& m : masks) {
        if ((covered && m.mask).any())
          throw Error(fmt::format("frame {} level {}: overlapping masks need the RLE format", f, level_code(g)));
        covered = covered || m.mask;
        ids.push_back(m.track_id);
      }
      write_id_png(dir / frame_file(g, f), to_id_map(masks, raw.width, raw.height));
      levels[std::string(1, level_code(g))] = ids;
    }
    frames.push_back(levels);
  }
  json index{{"format", "segsplat-raw-masks-dir"}, {"version", 1}, {"width", raw.width}, {"height", raw.height}, {"frames", frames}};
  index.update(extras_json(raw));
  write_json(dir / "index.json", index);
}

RawMaskSequence read_raw_masks_dir(const fs::path& dir) {
  const json index = read_json(dir / "index.json");
  RawMaskSequence raw;
  try {
    raw.width = index.at("width").get<int>();
    raw.height = index.at("height").get<int>();
    const json& frames = index.at("frames");
    for (std::size_t f = 0; f < frames.size(); ++f) {
      RawMaskSequence::Frame frame;
      for (Granularity g : kAllLevels) {
        const IdMap map = read_id_png(dir / frame_file(g, static_cast<int>(f)));
        if (map.rows() != raw.height || map.cols() != raw.width)
          throw Error(fmt::format("{}: resolution differs from index.json", frame_file(g, static_cast<int>(f))));
        const std::string key(1, level_code(g));
        std::vector<ObjectId> ids;
        if (frames[f].contains(key)) ids = frames[f].at(key).get<std::vector<ObjectId>>();
        FrameMasks masks = from_id_map(map);
        std::set<ObjectId> listed(ids.begin(), ids.end());
        for (const auto& m : masks)
          if (!listed.contains(m.track_id))
            throw Error(fmt::format("{}: id {} not listed in index.json", frame_file(g, static_cast<int>(f)), m.track_id));
        frame.levels[level_index(g)] = std::move(masks);
      }
      raw.frames.push_back(std::move(frame));
    }
    parse_extras(index, raw);
  } catch (const json::exception& e) {
    throw Error(fmt::format("{}: {}", (dir / "index.json").string(), e.what()));
  }
  raw.validate();
  return raw;
}

RawMaskSequence read_raw_masks(const fs::path& path) {
  if (fs::is_directory(path)) return read_raw_masks_dir(path);
  return raw_masks_from_json(read_json(path));
}

json tracks_json(const TrackedMasks& masks, const ConsolidationLog* log) {
  json tracks = json::array();
  for (const auto& [id, info] : masks.tracks())
    tracks.push_back({{"id", id},
                      {"level", std::string(1, level_code(info.level))},
                      {"first_seen", info.first_seen},
                      {"last_seen", info.last_seen}});
  json merges = json::array();
  for (const auto& [from, to] : masks.forwarding()) merges.push_back({{"from", from}, {"to", to}});
  json partial = json::array();
  for (const auto& p : masks.partial())
    partial.push_back({{"level", std::string(1, level_code(p.level))}, {"id", p.object}, {"frame", p.frame}});
  json out{{"format", "segsplat-tracks"},
           {"version", 1},
           {"width", masks.width()},
           {"height", masks.height()},
           {"frames", masks.frame_count()},
           {"tracks", tracks},
           {"merges", merges},
           {"partial", partial}};
  if (log) {
    json det = json::array(), rem = json::array();
    for (const auto& d : log->detections)
      det.push_back({{"frame", d.frame}, {"level", std::string(1, level_code(d.level))}, {"id", d.track_id}, {"candidate", d.candidate}});
    for (const auto& r : log->removals)
      rem.push_back({{"frame", r.frame}, {"level", std::string(1, level_code(r.level))}, {"id", r.track_id}});
    out["detections"] = det;
    out["removals"] = rem;
  }
  return out;
}

void write_tracked_masks(const fs::path& dir, const TrackedMasks& masks, const ConsolidationLog* log) {
  fs::create_directories(dir);
  for (Granularity g : kAllLevels)
    for (int f = 0; f < masks.frame_count(); ++f) write_id_png(dir / frame_file(g, f), masks.map(g, f));
  write_json(dir / "tracks.json", tracks_json(masks, log));
}

TrackedMasks read_tracked_masks(const fs::path& dir) {
  const json j = read_json(dir / "tracks.json");
  try {
    TrackedMasks masks(j.at("width").get<int>(), j.at("height").get<int>(), j.at("frames").get<int>());
    for (Granularity g : kAllLevels)
      for (int f = 0; f < masks.frame_count(); ++f) {
        IdMap m = read_id_png(dir / frame_file(g, f));
        if (m.rows() != masks.height() || m.cols() != masks.width())
          throw Error(fmt::format("{}: resolution differs from tracks.json", frame_file(g, f)));
        masks.map(g, f) = std::move(m);
      }
    masks.refresh_tracks();
    for (const auto& m : j.at("merges")) masks.set_forwarding(m.at("from").get<ObjectId>(), m.at("to").get<ObjectId>());
    for (const auto& p : j.at("partial"))
      masks.flag_partial(parse_level_code(p.at("level").get<std::string>()), p.at("id").get<ObjectId>(),
                         p.at("frame").get<int>());
    return masks;
  } catch (const json::exception& e) {
    throw Error(fmt::format("{}: {}", (dir / "tracks.json").string(), e.what()));
  }
}

std::map<std::string, Eigen::VectorXf> read_prompts(const fs::path& path) {
  const json j = read_json(path);
  if (!j.is_object()) throw Error(fmt::format("{}: expected an object of prompt -> vector", path.string()));
  std::map<std::string, Eigen::VectorXf> out;
  for (const auto& [k, v] : j.items()) {
    std::vector<float> values;
    try {
      values = v.get<std::vector<float>>();
    } catch (const json::exception&) {
      throw Error(fmt::format("{}: prompt '{}' is not a number array", path.string(), k));
    }
    out[k] = Eigen::Map<Eigen::VectorXf>(values.data(), static_cast<Eigen::Index>(values.size()));
  }
  return out;
}

void write_prompts(const fs::path& path, const std::map<std::string, Eigen::VectorXf>& prompts) {
  json j = json::object();
  for (const auto& [k, v] : prompts) j[k] = std::vector<float>(v.data(), v.data() + v.size());
  write_json(path, j);
}

json init_report_json(const InitReport& r) {
  json counts = json::array();
  for (const auto& [id, c] : r.counts) counts.push_back({{"id", id}, {"small", c[0]}, {"middle", c[1]}, {"large", c[2]}});
  json merges = json::array();
  for (const auto& m : r.merges)
    merges.push_back({{"level", std::string(1, level_code(m.level))}, {"from", m.from}, {"to", m.to}, {"distance", m.distance}});
  json missing = json::array();
  for (const auto& m : r.missing)
    missing.push_back({{"level", std::string(1, level_code(m.level))}, {"id", m.id}, {"count", m.count}, {"fallback", m.fallback}});
  return {{"points", r.points},
          {"background", r.background},
          {"hierarchy_repairs", r.hierarchy_repairs},
          {"objects", counts},
          {"merges", merges},
          {"missing", missing}};
}

json query_json(const QueryResult& result) {
  json ranked = json::array();
  for (const auto& h : result.ranked)
    ranked.push_back({{"id", h.id}, {"level", std::string(to_string(h.level))}, {"score", h.score}, {"gaussians", h.gaussians.size()}});
  return {{"ranked", ranked}};
}

}  // namespace segsplat::io
