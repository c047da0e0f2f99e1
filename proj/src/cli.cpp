#include "segsplat/cli.hpp"

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "segsplat/evaluation.hpp"
#include "segsplat/io.hpp"
#include "segsplat/metrics.hpp"
#include "segsplat/pipeline.hpp"
#include "segsplat/service.hpp"
#include "segsplat/synthetic.hpp"

namespace segsplat {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string image_name(int frame) { return fmt::format("{:05}.png", frame); }

void write_gt(const fs::path& dir, const std::array<std::vector<IdMap>, 3>& gt) {
  for (Granularity g : kAllLevels)
    for (std::size_t f = 0; f < gt[level_index(g)].size(); ++f)
      io::write_id_png(dir / fmt::format("g{}_f{:05}.png", level_code(g), f), gt[level_index(g)][f]);
}

std::array<std::vector<IdMap>, 3> read_gt(const fs::path& dir, std::size_t frames) {
  std::array<std::vector<IdMap>, 3> gt;
  for (Granularity g : kAllLevels)
    for (std::size_t f = 0; f < frames; ++f)
      gt[level_index(g)].push_back(io::read_id_png(dir / fmt::format("g{}_f{:05}.png", level_code(g), f)));
  return gt;
}

void write_images(const fs::path& dir, const std::vector<Imaged>& images) {
  for (std::size_t i = 0; i < images.size(); ++i) io::write_png(dir / image_name(static_cast<int>(i)), images[i]);
}

std::vector<Imaged> read_images(const fs::path& dir, const std::vector<Camerad>& cameras) {
  std::vector<Imaged> out;
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    Imaged im = io::read_png(dir / image_name(static_cast<int>(i)));
    if (im.width != cameras[i].width || im.height != cameras[i].height)
      throw Error(fmt::format("{}: {}x{} image for a {}x{} camera", (dir / image_name(static_cast<int>(i))).string(),
                              im.width, im.height, cameras[i].width, cameras[i].height));
    out.push_back(std::move(im));
  }
  return out;
}

// Training settings sized for the synthetic fixtures.
io::SceneConfig fixture_config(const std::string& kind, std::uint64_t seed) {
  io::SceneConfig c;
  c.cameras = "cameras.json";
  c.images = "images";
  c.masks = "masks.json";
  c.points = "points.ply";
  c.embeddings = "embeddings.bin";
  c.seed = seed;
  c.init.background_count = 300;
  c.init.random_per_missing = 200;
  c.train.iterations = 3000;
  c.train.stage1_end = 1000;
  c.train.stage2_end = 2000;
  c.train.densify_from = 300;
  c.train.densify_grad_threshold = 5e-4;
  c.train.psnr_interval = 500;
  c.train.render.tile_size = 8;
  if (kind == "dynamic") c.deformation = DeformationConfig{};
  if (kind == "tracking") {
    c.tracking.delta_t = 5;
    c.train.iterations = 600;
    c.train.stage1_end = 200;
    c.train.stage2_end = 400;
  }
  return c;
}

json level_target(Granularity g, ObjectId id) { return {{"level", std::string(1, level_code(g))}, {"id", id}}; }

void write_fixture(const fs::path& dir, const SyntheticScene& s, const std::string& kind, std::uint64_t seed,
                   json labels) {
  fs::create_directories(dir);
  io::write_cameras(dir / "cameras.json", s.cameras);
  write_images(dir / "images", s.images);
  io::write_json(dir / "masks.json", io::raw_masks_json(s.raw));
  io::write_point_ply(dir / "points.ply", s.points);
  io::write_embeddings(dir / "embeddings.bin", s.embeddings);
  io::write_prompts(dir / "prompts.json", s.prompts);
  write_gt(dir / "gt", s.gt_masks);
  json prompts = json::object();
  for (const auto& [name, target] : s.prompt_targets) prompts[name] = level_target(target.first, target.second);
  labels["prompts"] = prompts;
  io::write_json(dir / "gt" / "labels.json", labels);
  if (!s.test_cameras.empty()) {
    io::write_cameras(dir / "test" / "cameras.json", s.test_cameras);
    write_images(dir / "test" / "images", s.test_images);
    write_gt(dir / "test" / "gt", s.test_masks);
    io::write_json(dir / "test" / "gt" / "labels.json", labels);
  }
  io::SceneConfig config = fixture_config(kind, seed);
  io::write_json(dir / "scene.json", io::scene_config_json(config));
}

// Applies "a.b=value" overrides to a JSON document; values parse as JSON,
// falling back to strings.
void apply_overrides(json& doc, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(fmt::format("--set expects key=value, got '{}'", s));
    const std::string key = s.substr(0, eq);
    const std::string text = s.substr(eq + 1);
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;
    }
    json* node = &doc;
    std::size_t start = 0;
    for (;;) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = json::object();
      node = &(*node)[part];
      start = dot + 1;
    }
  }
}

io::SceneConfig load_config(const fs::path& path, const std::vector<std::string>& sets) {
  json doc = io::read_json(path);
  apply_overrides(doc, sets);
  return io::scene_config_from_json(doc, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

PipelineInputs load_inputs(const io::SceneConfig& c) {
  PipelineInputs in;
  in.cameras = io::read_cameras(c.cameras);
  in.images = read_images(c.images, in.cameras);
  in.raw = io::read_raw_masks(c.masks);
  in.points = io::read_point_ply(c.points);
  if (!c.embeddings.empty()) in.embeddings = io::read_embeddings(c.embeddings);
  return in;
}

PipelineConfig pipeline_config(const io::SceneConfig& c) {
  PipelineConfig p;
  p.tracking = c.tracking;
  p.init = c.init;
  p.train = c.train;
  p.deformation = c.deformation;
  p.seed = c.seed;
  return p;
}

std::map<std::string, PromptTarget> read_targets(const json& labels) {
  std::map<std::string, PromptTarget> out;
  if (!labels.contains("prompts")) return out;
  for (const auto& [name, t] : labels.at("prompts").items()) {
    PromptTarget target;
    target.level = parse_granularity(t.at("level").get<std::string>());
    target.id = t.at("id").get<ObjectId>();
    out[name] = target;
  }
  return out;
}

std::shared_ptr<const EmbeddingProvider> make_provider(const std::string& endpoint, const std::string& prompts,
                                                      bool mock, int dimension) {
  if (!endpoint.empty()) return std::make_shared<HttpEmbeddingProvider>(endpoint, dimension);
  if (!prompts.empty()) {
    auto table = io::read_prompts(prompts);
    if (table.empty()) throw Error(fmt::format("{}: no prompts", prompts));
    const int dim = static_cast<int>(table.begin()->second.size());
    return std::make_shared<FileEmbeddingProvider>(dim, std::move(table));
  }
  if (mock) return std::make_shared<MockEmbeddingProvider>(dimension);
  return nullptr;
}

int embedding_dimension(const SceneModel& scene) {
  for (Granularity g : kAllLevels)
    for (const auto& [id, set] : scene.objects.sets(g))
      if (set.embedding) return static_cast<int>(set.embedding->size());
  return 512;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Object-specific Gaussian splatting: consolidation, initialization, training, querying and serving"};
  app.require_subcommand(1);

  // gen-synthetic
  auto* gen = app.add_subcommand("gen-synthetic", "Write a deterministic synthetic fixture");
  std::string gen_kind = "nested";
  fs::path gen_out;
  std::uint64_t gen_seed = 1;
  int gen_size = 48, gen_views = 16;
  gen->add_option("--kind", gen_kind, "nested | dynamic | tracking")->check(CLI::IsMember({"nested", "dynamic", "tracking"}));
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Fixture seed");
  gen->add_option("--size", gen_size, "Image width and height")->check(CLI::Range(8, 1024));
  gen->add_option("--views", gen_views, "Training views")->check(CLI::Range(2, 1000));

  // consolidate
  auto* cons = app.add_subcommand("consolidate", "Repair raw tracker masks");
  fs::path cons_masks, cons_out;
  TrackingConfig tracking;
  bool no_detect = false, no_multi = false;
  cons->add_option("--masks", cons_masks, "Raw masks (RLE JSON or id-map directory)")->required()->check(CLI::ExistingPath);
  cons->add_option("--out", cons_out, "Output directory")->required();
  cons->add_option("--delta-t", tracking.delta_t, "Detection stride in frames")->check(CLI::PositiveNumber);
  cons->add_option("--decline-threshold", tracking.decline_threshold);
  cons->add_option("--overlap-threshold", tracking.overlap_threshold);
  cons->add_option("--multi-track-iou", tracking.multi_track_iou);
  cons->add_flag("--no-detect-new-objects", no_detect);
  cons->add_flag("--no-resolve-multi-tracking", no_multi);

  // init / train share the scene configuration
  auto* init = app.add_subcommand("init", "Consolidate masks and initialize object-specific Gaussians");
  fs::path init_config, init_out, init_report, init_tracks;
  std::vector<std::string> init_sets;
  init->add_option("--config", init_config, "Scene configuration JSON")->required()->check(CLI::ExistingFile);
  init->add_option("--out", init_out, "Checkpoint to write")->required();
  init->add_option("--report", init_report, "init_report.json path");
  init->add_option("--tracks", init_tracks, "Write the tracked masks to this directory");
  init->add_option("--set", init_sets, "Override a configuration key, e.g. init.lambda_d=0.3");

  auto* train_cmd = app.add_subcommand("train", "Run staged optimization");
  fs::path train_config, train_out, train_metrics, train_init, train_report;
  std::optional<std::uint64_t> train_seed;
  std::vector<std::string> train_sets;
  train_cmd->add_option("--config", train_config, "Scene configuration JSON")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_out, "Checkpoint to write")->required();
  train_cmd->add_option("--seed", train_seed, "Overrides the configured seed");
  train_cmd->add_option("--metrics", train_metrics, "metrics.csv path (default: next to the checkpoint)");
  train_cmd->add_option("--report", train_report, "init_report.json path (default: next to the checkpoint)");
  train_cmd->add_option("--init", train_init, "Start from an initialized checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--set", train_sets, "Override a configuration key, e.g. train.iterations=500");

  // query
  auto* q = app.add_subcommand("query", "Rank objects for a text embedding");
  fs::path q_ckpt, q_prompts, q_embedding, q_out, q_png;
  std::string q_prompt, q_level, q_endpoint;
  bool q_mock = false;
  std::size_t q_top = 5;
  int q_camera = 0;
  std::optional<double> q_time;
  q->add_option("--checkpoint", q_ckpt)->required()->check(CLI::ExistingFile);
  q->add_option("--prompt", q_prompt, "Prompt text, resolved through --prompts, --embed-endpoint or --mock");
  q->add_option("--prompts", q_prompts, "Prompt embedding file")->check(CLI::ExistingFile);
  q->add_option("--embedding", q_embedding, "JSON array with the query embedding")->check(CLI::ExistingFile);
  q->add_option("--embed-endpoint", q_endpoint, "Text embedding service base URL");
  q->add_flag("--mock", q_mock, "Hash prompts to deterministic vectors");
  q->add_option("--level", q_level, "small | middle | large (default: all)");
  q->add_option("--top-k", q_top, "Results to keep (0: all)");
  q->add_option("--out", q_out, "QueryResult JSON (default: stdout)");
  q->add_option("--png", q_png, "Highlight render of the top object");
  q->add_option("--camera", q_camera, "Camera for --png");
  q->add_option("--time", q_time, "Time for --png");

  // export
  auto* ex = app.add_subcommand("export", "Write one object's Gaussians as PLY");
  fs::path ex_ckpt, ex_out;
  ObjectId ex_id = 0;
  std::string ex_level;
  ex->add_option("--checkpoint", ex_ckpt)->required()->check(CLI::ExistingFile);
  ex->add_option("--object", ex_id)->required();
  ex->add_option("--level", ex_level, "Granularity (default: the level holding the id)");
  ex->add_option("--out", ex_out)->required();

  // render
  auto* rd = app.add_subcommand("render", "Render a view");
  fs::path rd_ckpt, rd_out, rd_raw, rd_cameras;
  int rd_camera = 0;
  std::optional<double> rd_time;
  std::optional<ObjectId> rd_object;
  std::string rd_level;
  rd->add_option("--checkpoint", rd_ckpt)->required()->check(CLI::ExistingFile);
  rd->add_option("--camera", rd_camera, "Camera index");
  rd->add_option("--cameras", rd_cameras, "Camera file (default: the checkpoint's cameras)")->check(CLI::ExistingFile);
  rd->add_option("--time", rd_time, "Time in [0, 1] (default: the camera's)");
  rd->add_option("--object", rd_object, "Highlight this object");
  rd->add_option("--level", rd_level, "Granularity of --object");
  rd->add_option("--out", rd_out, "PNG path")->required();
  rd->add_option("--raw", rd_raw, "Also write a planar float32 dump");

  // eval
  auto* ev = app.add_subcommand("eval", "Score a checkpoint against ground truth");
  fs::path ev_ckpt, ev_images, ev_gt, ev_prompts, ev_cameras, ev_out;
  ev->add_option("--checkpoint", ev_ckpt)->required()->check(CLI::ExistingFile);
  ev->add_option("--images", ev_images, "Ground-truth image directory")->check(CLI::ExistingDirectory);
  ev->add_option("--gt", ev_gt, "Ground-truth id maps with labels.json")->check(CLI::ExistingDirectory);
  ev->add_option("--prompts", ev_prompts, "Prompt embedding file")->check(CLI::ExistingFile);
  ev->add_option("--cameras", ev_cameras, "Evaluation cameras (default: the checkpoint's)")->check(CLI::ExistingFile);
  ev->add_option("--out", ev_out, "eval_report.json path")->required();

  // serve
  auto* sv = app.add_subcommand("serve", "Serve queries and renders over HTTP");
  fs::path sv_ckpt, sv_prompts;
  std::string sv_host = "127.0.0.1", sv_endpoint;
  std::optional<int> sv_port;
  int sv_workers = 4;
  bool sv_mock = false;
  int sv_dim = 512;
  sv->add_option("--checkpoint", sv_ckpt)->required()->check(CLI::ExistingFile);
  sv->add_option("--host", sv_host);
  sv->add_option("--port", sv_port, "Port (default: $SEGSPLAT_PORT or 8080)");
  sv->add_option("--workers", sv_workers, "Request worker threads")->check(CLI::PositiveNumber);
  sv->add_option("--embed-endpoint", sv_endpoint, "Text embedding service base URL");
  sv->add_option("--prompts", sv_prompts, "Resolve text queries from this prompt file")->check(CLI::ExistingFile);
  sv->add_flag("--mock-embeddings", sv_mock, "Resolve text queries with the hash embedding");
  sv->add_option("--embedding-dim", sv_dim, "Dimension of endpoint and mock embeddings")->check(CLI::PositiveNumber);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*gen) {
      SyntheticOptions o;
      o.seed = gen_seed;
      o.width = o.height = gen_size;
      o.views = gen_views;
      json labels = json::object();
      if (gen_kind == "nested") {
        write_fixture(gen_out, make_nested_scene(o), gen_kind, gen_seed, labels);
      } else if (gen_kind == "dynamic") {
        labels["moving"] = level_target(Granularity::Small, 5);
        write_fixture(gen_out, make_dynamic_scene(o), gen_kind, gen_seed, labels);
      } else {
        TrackingFixture fx = make_tracking_fixture();
        labels["labeled_frames"] = fx.labeled_frames;
        labels["objects"] = fx.gt_ids;
        write_fixture(gen_out, fx.scene, gen_kind, gen_seed, labels);
      }
      out << "wrote " << gen_kind << " fixture to " << gen_out.string() << "\n";
      return 0;
    }

    if (*cons) {
      tracking.detect_new_objects = !no_detect;
      tracking.resolve_multi_tracking = !no_multi;
      ConsolidationLog log;
      const TrackedMasks masks = consolidate(io::read_raw_masks(cons_masks), tracking, &log);
      io::write_tracked_masks(cons_out, masks, &log);
      out << fmt::format("{} tracks, {} detections, {} removals\n", masks.tracks().size(), log.detections.size(),
                         log.removals.size());
      return 0;
    }

    if (*init) {
      const io::SceneConfig c = load_config(init_config, init_sets);
      const PipelineResult r = prepare_scene(load_inputs(c), pipeline_config(c));
      for (const auto& w : r.warnings) err << "warning: " << w << "\n";
      io::write_checkpoint(init_out, r.scene);
      io::write_json(init_report.empty() ? init_out.parent_path() / "init_report.json" : init_report,
                     io::init_report_json(r.init));
      if (!init_tracks.empty()) io::write_tracked_masks(init_tracks, r.scene.masks, &r.consolidation);
      out << fmt::format("{} Gaussians, {} objects\n", r.scene.gaussians.size(), r.scene.objects.total_objects());
      return 0;
    }

    if (*train_cmd) {
      io::SceneConfig c = load_config(train_config, train_sets);
      if (train_seed) c.seed = *train_seed;
      const PipelineInputs inputs = load_inputs(c);
      PipelineResult r;
      if (!train_init.empty()) {
        r.scene = io::read_checkpoint(train_init);
        if (r.scene.cameras.size() != inputs.cameras.size()) throw Error("--init checkpoint has different cameras");
        r.scene.images = inputs.images;
        r.scene.config = c.train;
        r.scene.seed = c.seed;
        r.train = train(r.scene);
        if (inputs.embeddings)
          for (const auto& w : associate_all(r.scene, *inputs.embeddings)) r.warnings.push_back(w);
      } else {
        r = run_pipeline(inputs, pipeline_config(c));
        io::write_json(train_report.empty() ? train_out.parent_path() / "init_report.json" : train_report,
                       io::init_report_json(r.init));
      }
      for (const auto& w : r.warnings) err << "warning: " << w << "\n";
      io::write_checkpoint(train_out, r.scene);
      fs::path metrics = train_metrics;
      if (metrics.empty()) metrics = fs::path(train_out).replace_extension(".metrics.csv");
      io::write_metrics_csv(metrics, r.train);
      const double final_psnr = r.train.rows.empty() ? std::nan("") : r.train.rows.back().psnr;
      out << fmt::format("trained {} iterations, {} Gaussians, PSNR {:.2f}\n", r.scene.iteration,
                         r.scene.gaussians.size(), final_psnr);
      return 0;
    }

    if (*q) {
      const SceneModel scene = io::read_checkpoint(q_ckpt);
      Eigen::VectorXf vec;
      if (!q_embedding.empty()) {
        const auto v = io::read_json(q_embedding).get<std::vector<float>>();
        vec = Eigen::Map<const Eigen::VectorXf>(v.data(), static_cast<Eigen::Index>(v.size()));
      } else {
        if (q_prompt.empty()) throw Error("query: give --prompt or --embedding");
        const auto provider = make_provider(q_endpoint, q_prompts.string(), q_mock, embedding_dimension(scene));
        if (!provider) throw Error("query: a text prompt needs --prompts, --embed-endpoint or --mock");
        vec = provider->embed(q_prompt);
      }
      std::optional<Granularity> level;
      if (!q_level.empty()) level = parse_granularity(q_level);
      const QueryResult result = query(vec, scene, level, q_top);
      json j = io::query_json(result);
      if (!q_prompt.empty()) j["prompt"] = q_prompt;
      if (q_out.empty()) out << j.dump(2) << "\n";
      else io::write_json(q_out, j);
      if (!q_png.empty() && !result.ranked.empty()) {
        if (q_camera < 0 || q_camera >= static_cast<int>(scene.cameras.size()))
          throw Error(fmt::format("query: no camera {}", q_camera));
        const Camerad& cam = scene.cameras[static_cast<std::size_t>(q_camera)];
        const auto& top = result.ranked.front();
        io::write_png(q_png, render_highlight(scene, cam, q_time.value_or(cam.time), top.id, top.level));
      }
      return 0;
    }

    if (*ex) {
      const SceneModel scene = io::read_checkpoint(ex_ckpt);
      std::optional<Granularity> level;
      if (!ex_level.empty()) level = parse_granularity(ex_level);
      for (Granularity g : kAllLevels)
        if (!level && scene.objects.find(g, scene.masks.resolve(ex_id))) level = g;
      if (!level) throw Error(fmt::format("export: unknown object {}", ex_id));
      const auto members = object_members(scene, ex_id, *level);
      io::write_gaussians_ply(ex_out, scene.gaussians, &members);
      out << fmt::format("{} Gaussians\n", members.size());
      return 0;
    }

    if (*rd) {
      const SceneModel scene = io::read_checkpoint(rd_ckpt);
      const auto cameras = rd_cameras.empty() ? scene.cameras : io::read_cameras(rd_cameras);
      if (rd_camera < 0 || rd_camera >= static_cast<int>(cameras.size()))
        throw Error(fmt::format("render: no camera {}", rd_camera));
      const Camerad& cam = cameras[static_cast<std::size_t>(rd_camera)];
      const double t = rd_time.value_or(cam.time);
      if (t < 0 || t > 1) throw Error("render: time outside [0, 1]");
      Imaged image;
      if (rd_object) {
        std::optional<Granularity> level;
        if (!rd_level.empty()) level = parse_granularity(rd_level);
        for (Granularity g : kAllLevels)
          if (!level && scene.objects.find(g, scene.masks.resolve(*rd_object))) level = g;
        if (!level) throw Error(fmt::format("render: unknown object {}", *rd_object));
        image = render_highlight(scene, cam, t, *rd_object, *level);
      } else {
        image = render_view(scene, cam, t).result.image;
      }
      io::write_png(rd_out, image);
      if (!rd_raw.empty()) io::write_planar_f32(rd_raw, image);
      return 0;
    }

    if (*ev) {
      const SceneModel scene = io::read_checkpoint(ev_ckpt);
      const auto cameras = ev_cameras.empty() ? scene.cameras : io::read_cameras(ev_cameras);
      json report{{"checkpoint", ev_ckpt.string()}, {"iteration", scene.iteration}, {"views", cameras.size()}};
      if (!ev_images.empty()) {
        const auto images = read_images(ev_images, cameras);
        report["psnr"] = mean_psnr(scene, cameras, images);
      }
      if (!ev_gt.empty()) {
        const auto gt = read_gt(ev_gt, cameras.size());
        json labels = fs::exists(ev_gt / "labels.json") ? io::read_json(ev_gt / "labels.json") : json::object();
        json objects = json::object();
        for (Granularity g : kAllLevels) {
          const auto scores = object_render_ious(scene, cameras, gt[level_index(g)], g);
          if (scores.empty()) continue;
          json rows = json::array();
          for (const auto& s : scores) rows.push_back({{"id", s.id}, {"iou", s.iou}, {"views", s.views}});
          objects[std::string(to_string(g))] = {{"objects", rows}, {"mean_iou", mean_iou(scores)}};
        }
        report["object_render_iou"] = objects;
        const auto targets = read_targets(labels);
        if (!targets.empty()) {
          if (ev_prompts.empty()) throw Error("eval: labels name prompts; pass --prompts");
          const auto scores = evaluate_prompts(scene, io::read_prompts(ev_prompts), targets, cameras, gt);
          json rows = json::array();
          double sum = 0;
          int correct = 0;
          for (const auto& s : scores) {
            rows.push_back({{"prompt", s.prompt},
                            {"target", level_target(s.target.level, s.target.id)},
                            {"returned", level_target(s.returned_level, s.returned)},
                            {"score", s.score},
                            {"iou", s.iou},
                            {"correct", s.correct}});
            sum += s.iou;
            correct += s.correct;
          }
          report["prompts"] = rows;
          report["miou"] = sum / static_cast<double>(scores.size());
          report["query_accuracy"] = static_cast<double>(correct) / static_cast<double>(scores.size());
        }
        if (labels.contains("labeled_frames") && ev_cameras.empty()) {
          const auto frames = labels.at("labeled_frames").get<std::vector<int>>();
          const TrackingScore t = score_tracking(scene.masks, Granularity::Small, gt[level_index(Granularity::Small)], frames);
          report["tracking"] = {{"orr", t.orr}, {"dup", t.dup}, {"frames", frames}};
        }
      }
      io::write_json(ev_out, report);
      out << report.dump(2) << "\n";
      return 0;
    }

    if (*sv) {
      int port = 8080;
      if (const char* env = std::getenv("SEGSPLAT_PORT")) port = std::atoi(env);
      if (sv_port) port = *sv_port;
      ServiceOptions opts;
      opts.workers = sv_workers;
      opts.embeddings = make_provider(sv_endpoint, sv_prompts.string(), sv_mock, sv_dim);
      SceneService service(opts);
      service.load_async([ckpt = sv_ckpt] { return io::read_checkpoint(ckpt); });
      out << fmt::format("serving on {}:{}\n", sv_host, port) << std::flush;
      if (!service.listen(sv_host, port)) throw Error(fmt::format("serve: cannot listen on {}:{}", sv_host, port));
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace segsplat
