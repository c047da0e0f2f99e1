#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "segsplat/scene.hpp"
#include "segsplat/semantics.hpp"

namespace segsplat {

/// Full render with everything outside the object's footprint dimmed to
/// 20% (weighted by the object's share of each pixel's compositing weight).
Imaged render_highlight(const SceneModel& scene, const Camerad& cam, double time, ObjectId id, Granularity level);

/// Text embeddings from an external endpoint: POST {url}/embed {"text"} -> {"vector"}.
class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  HttpEmbeddingProvider(std::string base_url, int dimension);
  int dimension() const override { return dim_; }
  Eigen::VectorXf embed(std::string_view text) const override;

 private:
  std::string url_;
  int dim_;
};

struct ServiceOptions {
  int workers = 4;
  std::shared_ptr<const EmbeddingProvider> embeddings;  // null: prompt strings are rejected
};

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Read-only HTTP front end over one scene snapshot. Every endpoint answers
/// 503 until a scene is installed.
class SceneService {
 public:
  explicit SceneService(ServiceOptions options = {});
  ~SceneService();
  SceneService(const SceneService&) = delete;
  SceneService& operator=(const SceneService&) = delete;

  /// Installs the scene produced by `loader` on a background thread.
  void load_async(std::function<SceneModel()> loader);
  void set_scene(SceneModel scene);
  bool ready() const;
  /// Message of a failed load, if any.
  std::optional<std::string> load_error() const;

  // Endpoint logic, independent of the socket layer.
  HttpReply get_scene() const;
  HttpReply post_query(const std::string& body) const;
  HttpReply get_render(const std::map<std::string, std::string>& params) const;
  HttpReply get_export(const std::string& object, const std::map<std::string, std::string>& params) const;

  /// Binds and serves until stop(); returns false when binding fails.
  bool listen(const std::string& host, int port);
  /// Binds to a free port and serves on a background thread; returns the port.
  int start(const std::string& host = "127.0.0.1");
  void stop();

 private:
  std::shared_ptr<const SceneModel> snapshot() const;
  void setup();
  struct Server;

  ServiceOptions options_;
  mutable std::mutex mutex_;
  std::shared_ptr<const SceneModel> scene_;
  std::optional<std::string> load_error_;
  std::thread loader_;
  std::unique_ptr<Server> server_;
  std::thread server_thread_;
};

}  // namespace segsplat
