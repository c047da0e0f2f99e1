#include "segsplat/service.hpp"

#include <charconv>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "segsplat/io.hpp"

namespace segsplat {

using nlohmann::json;

Imaged render_highlight(const SceneModel& scene, const Camerad& cam, double time, ObjectId id, Granularity level) {
  const auto members = object_members(scene, id, level);
  const ViewRender full = render_view(scene, cam, time);
  std::vector<int> labels(full.splats.size(), 0);
  std::vector<char> is_member(scene.gaussians.size(), 0);
  for (auto i : members) is_member[i] = 1;
  for (std::size_t k = 0; k < full.splats.size(); ++k) labels[k] = is_member[full.splats[k].source];
  const auto w = label_weights<double>(full.splats, full.result, labels, 2, scene.config.render);
  Imaged out = full.result.image;
  for (Eigen::Index p = 0; p < out.pixel_count(); ++p) {
    const double total = w(p, 0) + w(p, 1);
    const double share = total > 0 ? w(p, 1) / total : 0.0;
    out.rgb.row(p) *= share + 0.2 * (1.0 - share);
  }
  return out;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string base_url, int dimension)
    : url_(std::move(base_url)), dim_(dimension) {}

Eigen::VectorXf HttpEmbeddingProvider::embed(std::string_view text) const {
  httplib::Client client(url_);
  client.set_connection_timeout(5);
  client.set_read_timeout(30);
  const auto res = client.Post("/embed", json{{"text", std::string(text)}}.dump(), "application/json");
  if (!res) throw Error(fmt::format("embedding endpoint {} unreachable", url_));
  if (res->status != 200) throw Error(fmt::format("embedding endpoint answered {}", res->status));
  std::vector<float> v;
  try {
    v = json::parse(res->body).at("vector").get<std::vector<float>>();
  } catch (const json::exception&) {
    throw Error("embedding endpoint returned no vector");
  }
  if (static_cast<int>(v.size()) != dim_)
    throw Error(fmt::format("embedding endpoint returned {} values, expected {}", v.size(), dim_));
  Eigen::VectorXf out = Eigen::Map<Eigen::VectorXf>(v.data(), dim_);
  if (!(out.norm() > 0)) throw Error("embedding endpoint returned a zero vector");
  return out.normalized();
}

namespace {

HttpReply error_reply(int status, const std::string& message) {
  return {status, "application/json", json{{"error", message}}.dump()};
}

HttpReply not_ready(const std::optional<std::string>& load_error) {
  return error_reply(503, load_error ? "scene failed to load: " + *load_error : "scene is loading");
}

std::optional<double> parse_number(const std::string& s) {
  double v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<long long> parse_integer(const std::string& s) {
  long long v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) return std::nullopt;
  return v;
}

// Level named explicitly, else the level holding the id.
std::optional<Granularity> locate(const SceneModel& scene, ObjectId id, const std::map<std::string, std::string>& params) {
  if (auto it = params.find("level"); it != params.end()) return parse_granularity(it->second);
  for (Granularity g : kAllLevels)
    if (scene.objects.find(g, id)) return g;
  const ObjectId target = scene.masks.resolve(id);
  for (Granularity g : kAllLevels)
    if (scene.objects.find(g, target)) return g;
  return std::nullopt;
}

}  // namespace

struct SceneService::Server {
  httplib::Server http;
};

SceneService::SceneService(ServiceOptions options) : options_(std::move(options)) {
  if (options_.workers < 1) throw Error("service: workers must be at least 1");
}

SceneService::~SceneService() {
  stop();
  if (loader_.joinable()) loader_.join();
}

void SceneService::load_async(std::function<SceneModel()> loader) {
  if (loader_.joinable()) loader_.join();
  loader_ = std::thread([this, loader = std::move(loader)] {
    try {
      set_scene(loader());
    } catch (const std::exception& e) {
      std::lock_guard lock(mutex_);
      load_error_ = e.what();
    }
  });
}

void SceneService::set_scene(SceneModel scene) {
  auto snap = std::make_shared<const SceneModel>(std::move(scene));
  std::lock_guard lock(mutex_);
  scene_ = std::move(snap);
  load_error_.reset();
}

bool SceneService::ready() const { return snapshot() != nullptr; }

std::optional<std::string> SceneService::load_error() const {
  std::lock_guard lock(mutex_);
  return load_error_;
}

std::shared_ptr<const SceneModel> SceneService::snapshot() const {
  std::lock_guard lock(mutex_);
  return scene_;
}

HttpReply SceneService::get_scene() const {
  const auto scene = snapshot();
  if (!scene) return not_ready(load_error());
  json objects = json::array();
  for (Granularity g : kAllLevels)
    for (const auto& [id, set] : scene->objects.sets(g)) {
      json o{{"id", id}, {"level", std::string(to_string(g))}, {"gaussians", set.gaussians.size()},
             {"has_embedding", set.embedding.has_value()}};
      if (set.parents) o["parents"] = {{"middle", set.parents->first}, {"large", set.parents->second}};
      objects.push_back(o);
    }
  json body{{"objects", objects},
            {"granularities", {"small", "middle", "large"}},
            {"cameras", io::cameras_json(scene->cameras)},
            {"gaussians", scene->gaussians.size()},
            {"dynamic", scene->dynamic()},
            {"iteration", scene->iteration}};
  return {200, "application/json", body.dump()};
}

HttpReply SceneService::post_query(const std::string& body) const {
  const auto scene = snapshot();
  if (!scene) return not_ready(load_error());
  json req;
  try {
    req = json::parse(body);
  } catch (const json::parse_error&) {
    return error_reply(400, "body is not valid JSON");
  }
  if (!req.is_object()) return error_reply(400, "body must be a JSON object");
  for (const auto& [k, v] : req.items())
    if (k != "text" && k != "embedding" && k != "granularity" && k != "top_k")
      return error_reply(400, fmt::format("unknown field '{}'", k));
  if (req.contains("text") == req.contains("embedding"))
    return error_reply(400, "give exactly one of 'text' or 'embedding'");

  std::optional<Granularity> level;
  std::size_t top_k = 5;
  try {
    if (req.contains("granularity") && !req.at("granularity").is_null())
      level = parse_granularity(req.at("granularity").get<std::string>());
    if (req.contains("top_k")) {
      const auto k = req.at("top_k").get<long long>();
      if (k < 0) return error_reply(400, "top_k must be non-negative");
      top_k = static_cast<std::size_t>(k);
    }
  } catch (const json::exception&) {
    return error_reply(400, "granularity must be a string and top_k an integer");
  } catch (const Error& e) {
    return error_reply(400, e.what());
  }

  Eigen::VectorXf q;
  json echo;
  if (req.contains("embedding")) {
    std::vector<float> v;
    try {
      v = req.at("embedding").get<std::vector<float>>();
    } catch (const json::exception&) {
      return error_reply(400, "embedding must be an array of numbers");
    }
    q = Eigen::Map<Eigen::VectorXf>(v.data(), static_cast<Eigen::Index>(v.size()));
  } else {
    if (!req.at("text").is_string()) return error_reply(400, "text must be a string");
    const std::string text = req.at("text").get<std::string>();
    if (!options_.embeddings)
      return error_reply(400, "text queries need an embedding endpoint; none is configured (send 'embedding' instead)");
    try {
      q = options_.embeddings->embed(text);
    } catch (const Error& e) {
      return error_reply(400, e.what());
    }
    echo = text;
  }
  try {
    const QueryResult result = query(q, *scene, level, top_k);
    json out = io::query_json(result);
    if (!echo.is_null()) out["text"] = echo;
    return {200, "application/json", out.dump()};
  } catch (const Error& e) {
    return error_reply(400, e.what());
  }
}

HttpReply SceneService::get_render(const std::map<std::string, std::string>& params) const {
  const auto scene = snapshot();
  if (!scene) return not_ready(load_error());
  for (const auto& [k, v] : params)
    if (k != "camera" && k != "object" && k != "level" && k != "time")
      return error_reply(400, fmt::format("unknown parameter '{}'", k));
  long long cam_index = 0;
  if (auto it = params.find("camera"); it != params.end()) {
    const auto v = parse_integer(it->second);
    if (!v) return error_reply(400, "camera must be an integer");
    cam_index = *v;
  }
  if (cam_index < 0 || cam_index >= static_cast<long long>(scene->cameras.size()))
    return error_reply(404, fmt::format("no camera {}", cam_index));
  const Camerad& cam = scene->cameras[static_cast<std::size_t>(cam_index)];
  double time = cam.time;
  if (auto it = params.find("time"); it != params.end()) {
    const auto v = parse_number(it->second);
    if (!v || *v < 0 || *v > 1) return error_reply(400, "time must be a number in [0, 1]");
    time = *v;
  }
  try {
    Imaged image;
    if (auto it = params.find("object"); it != params.end()) {
      const auto id = parse_integer(it->second);
      if (!id || *id < 0 || *id > std::numeric_limits<ObjectId>::max())
        return error_reply(400, "object must be a non-negative integer");
      const auto level = locate(*scene, static_cast<ObjectId>(*id), params);
      if (!level) return error_reply(404, fmt::format("unknown object {}", *id));
      image = render_highlight(*scene, cam, time, static_cast<ObjectId>(*id), *level);
    } else {
      image = render_view(*scene, cam, time).result.image;
    }
    const auto png = io::encode_png(image);
    return {200, "image/png", std::string(png.begin(), png.end())};
  } catch (const Error& e) {
    const std::string msg = e.what();
    return error_reply(msg.starts_with("unknown object") ? 404 : 400, msg);
  }
}

HttpReply SceneService::get_export(const std::string& object, const std::map<std::string, std::string>& params) const {
  const auto scene = snapshot();
  if (!scene) return not_ready(load_error());
  for (const auto& [k, v] : params)
    if (k != "level") return error_reply(400, fmt::format("unknown parameter '{}'", k));
  const auto id = parse_integer(object);
  if (!id || *id < 0 || *id > std::numeric_limits<ObjectId>::max())
    return error_reply(400, "object id must be a non-negative integer");
  try {
    const auto level = locate(*scene, static_cast<ObjectId>(*id), params);
    if (!level) return error_reply(404, fmt::format("unknown object {}", *id));
    const auto members = object_members(*scene, static_cast<ObjectId>(*id), *level);
    return {200, "application/octet-stream", io::gaussians_ply(scene->gaussians, &members)};
  } catch (const Error& e) {
    const std::string msg = e.what();
    return error_reply(msg.starts_with("unknown object") ? 404 : 400, msg);
  }
}

namespace {

std::map<std::string, std::string> params_of(const httplib::Request& req) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : req.params) out[k] = v;
  return out;
}

void send(httplib::Response& res, const HttpReply& reply) {
  res.status = reply.status;
  res.set_content(reply.body, reply.content_type);
}

}  // namespace

void SceneService::setup() {
  if (server_) return;
  server_ = std::make_unique<Server>();
  auto& http = server_->http;
  const int workers = options_.workers;
  http.new_task_queue = [workers] { return new httplib::ThreadPool(static_cast<std::size_t>(workers)); };
  http.Get("/scene", [this](const httplib::Request&, httplib::Response& res) { send(res, get_scene()); });
  http.Post("/query", [this](const httplib::Request& req, httplib::Response& res) { send(res, post_query(req.body)); });
  http.Get("/render", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, get_render(params_of(req)));
  });
  http.Get(R"(/export/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, get_export(req.matches[1], params_of(req)));
  });
}

bool SceneService::listen(const std::string& host, int port) {
  setup();
  return server_->http.listen(host, port);
}

int SceneService::start(const std::string& host) {
  if (server_thread_.joinable()) throw Error("service: already running");
  setup();
  const int port = server_->http.bind_to_any_port(host);
  if (port < 0) throw Error(fmt::format("service: cannot bind {}", host));
  server_thread_ = std::thread([this] { server_->http.listen_after_bind(); });
  server_->http.wait_until_ready();
  return port;
}

void SceneService::stop() {
  if (server_) server_->http.stop();
  if (server_thread_.joinable()) server_thread_.join();
}

}  // namespace segsplat
