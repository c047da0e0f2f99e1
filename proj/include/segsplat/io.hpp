#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "segsplat/camera.hpp"
#include "segsplat/config.hpp"
#include "segsplat/deformation.hpp"
#include "segsplat/gaussian.hpp"
#include "segsplat/gaussian_init.hpp"
#include "segsplat/image.hpp"
#include "segsplat/mask_pipeline.hpp"
#include "segsplat/masks.hpp"
#include "segsplat/metrics.hpp"
#include "segsplat/optimizer.hpp"
#include "segsplat/scene.hpp"
#include "segsplat/semantics.hpp"

namespace segsplat::io {

namespace fs = std::filesystem;
using nlohmann::json;

// Images. 8-bit RGB output; input accepts 8/16-bit gray, RGB or RGBA.
std::vector<std::uint8_t> encode_png(const Imaged& image);
void write_png(const fs::path& path, const Imaged& image);
Imaged read_png(const fs::path& path);

// 16-bit grayscale id maps; ids above 65535 are rejected.
void write_id_png(const fs::path& path, const IdMap& map);
IdMap read_id_png(const fs::path& path);

/// Raw little-endian float32 dump, channel planes R, G, B, no header.
void write_planar_f32(const fs::path& path, const Imaged& image);
Imaged read_planar_f32(const fs::path& path, int width, int height);

// PLY.
/// Point cloud with x, y, z and optional red, green, blue (uchar or float).
/// Reads ascii and binary_little_endian files.
PointCloud read_point_ply(const fs::path& path);
void write_point_ply(const fs::path& path, const PointCloud& points);

/// Binary little-endian Gaussian export (double precision, with object ids).
std::string gaussians_ply(const GaussianCloud<double>& cloud, const std::vector<std::uint32_t>* subset = nullptr);
void write_gaussians_ply(const fs::path& path, const GaussianCloud<double>& cloud,
                         const std::vector<std::uint32_t>* subset = nullptr);
GaussianCloud<double> read_gaussians_ply(const fs::path& path);

// Cameras: JSON array of {width, height, fx, fy, cx, cy, rotation (row-major
// 3x3 world-to-camera), translation, frame, time}.
json cameras_json(const std::vector<Camerad>& cameras);
std::vector<Camerad> cameras_from_json(const json& j);
std::vector<Camerad> read_cameras(const fs::path& path);
void write_cameras(const fs::path& path, const std::vector<Camerad>& cameras);

// Configuration blocks. Unknown keys are errors; missing keys keep defaults.
json to_json(const TrackingConfig& c);
json to_json(const InitConfig& c);
json to_json(const TrainConfig& c);
json to_json(const DeformationConfig& c);
void from_json(const json& j, TrackingConfig& c);
void from_json(const json& j, InitConfig& c);
void from_json(const json& j, TrainConfig& c);
void from_json(const json& j, DeformationConfig& c);

/// Everything a pipeline run reads from disk, named by one JSON document.
/// Relative paths resolve against the document's directory.
struct SceneConfig {
  fs::path cameras;
  fs::path images;      // directory of {frame:05}.png
  fs::path masks;       // raw masks: RLE JSON file or id-map PNG directory
  fs::path points;      // PLY
  fs::path embeddings;  // optional binary embedding file
  TrackingConfig tracking;
  InitConfig init;
  TrainConfig train;
  std::optional<DeformationConfig> deformation;
  std::uint64_t seed = 0;
};

/// Parses and validates; throws Error listing every problem found.
SceneConfig read_scene_config(const fs::path& path);
SceneConfig scene_config_from_json(const json& j, const fs::path& base);
json scene_config_json(const SceneConfig& config, const fs::path& base = {});
/// Problems with the document: unknown keys, bad values, missing files.
std::vector<std::string> validate_scene_config(const json& j, const fs::path& base);

// Masks.
/// Row-major run lengths alternating unset/set, starting with unset.
std::vector<std::uint32_t> rle_encode(const BinaryMask& mask);
BinaryMask rle_decode(const std::vector<std::uint32_t>& counts, int width, int height);

json raw_masks_json(const RawMaskSequence& raw);
RawMaskSequence raw_masks_from_json(const json& j);
/// Directory form: g{L|M|S}_f{frame:05}.png id maps plus index.json (track
/// ids per frame, resegmentations and candidates in RLE). Fails when masks
/// of one (frame, level) overlap, since id maps cannot hold them.
void write_raw_masks_dir(const fs::path& dir, const RawMaskSequence& raw);
RawMaskSequence read_raw_masks_dir(const fs::path& dir);
/// Dispatches on the path: directory or RLE JSON file.
RawMaskSequence read_raw_masks(const fs::path& path);

/// Tracked masks as id-map PNGs plus tracks.json (first/last seen, merges,
/// partial flags).
json tracks_json(const TrackedMasks& masks, const ConsolidationLog* log = nullptr);
void write_tracked_masks(const fs::path& dir, const TrackedMasks& masks, const ConsolidationLog* log = nullptr);
TrackedMasks read_tracked_masks(const fs::path& dir);

// Embeddings: "SSEM" magic, u32 version, u32 dimension, u32 count, then
// count records of (u32 object id, u32 frame, dimension x f32).
void write_embeddings(const fs::path& path, const EmbeddingTable& table);
EmbeddingTable read_embeddings(const fs::path& path);

/// Prompt embeddings: JSON object {prompt: [floats]}.
std::map<std::string, Eigen::VectorXf> read_prompts(const fs::path& path);
void write_prompts(const fs::path& path, const std::map<std::string, Eigen::VectorXf>& prompts);

// Checkpoints: versioned little-endian binary holding config, seed,
// iteration, Gaussians, object embeddings, deformation weights, cameras
// and tracked masks. Images are not stored.
std::string checkpoint_bytes(const SceneModel& scene);
SceneModel checkpoint_from_bytes(const std::string& bytes);
void write_checkpoint(const fs::path& path, const SceneModel& scene);
SceneModel read_checkpoint(const fs::path& path);

// Reports.
void write_metrics_csv(const fs::path& path, const TrainLog& log);
json init_report_json(const InitReport& report);
json query_json(const QueryResult& result);

/// Reads a whole file; throws Error naming the path on failure.
std::string read_file(const fs::path& path);
void write_file(const fs::path& path, const std::string& bytes);
void write_json(const fs::path& path, const json& j);
json read_json(const fs::path& path);

}  // namespace segsplat::io
