#include <gtest/gtest.h>

#include <future>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "scenes.hpp"
#include "segsplat/io.hpp"
#include "segsplat/service.hpp"

#include <httplib.h>

using namespace segsplat;
using segsplat::testing::labeled_scene;
using nlohmann::json;

namespace {

std::string embedding_body(const Eigen::VectorXf& v, const std::string& extra = "") {
  json j{{"embedding", std::vector<float>(v.data(), v.data() + v.size())}, {"top_k", 0}};
  if (!extra.empty()) j["granularity"] = extra;
  return j.dump();
}

std::string error_of(const HttpReply& r) { return json::parse(r.body).at("error").get<std::string>(); }

}  // namespace

TEST(Service, UnavailableUntilLoaded) {
  SceneService service;
  std::promise<void> release;
  auto gate = release.get_future().share();
  service.load_async([gate] {
    gate.wait();
    return labeled_scene();
  });
  EXPECT_FALSE(service.ready());
  EXPECT_EQ(service.get_scene().status, 503);
  EXPECT_EQ(service.post_query(embedding_body(Eigen::VectorXf::Unit(6, 3))).status, 503);
  EXPECT_EQ(service.get_render({{"camera", "0"}}).status, 503);
  EXPECT_EQ(service.get_export("4", {}).status, 503);
  release.set_value();
  for (int i = 0; i < 500 && !service.ready(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  ASSERT_TRUE(service.ready());
  EXPECT_EQ(service.get_scene().status, 200);
}

TEST(Service, FailedLoadStaysUnavailable) {
  SceneService service;
  service.load_async([]() -> SceneModel { throw Error("bad checkpoint"); });
  for (int i = 0; i < 500 && !service.load_error(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  ASSERT_TRUE(service.load_error());
  const auto r = service.get_scene();
  EXPECT_EQ(r.status, 503);
  EXPECT_NE(error_of(r).find("bad checkpoint"), std::string::npos);
}

TEST(Service, SceneSummary) {
  SceneService service;
  service.set_scene(labeled_scene());
  const json j = json::parse(service.get_scene().body);
  EXPECT_EQ(j.at("objects").size(), 6u);
  EXPECT_EQ(j.at("cameras").size(), 4u);
  EXPECT_FALSE(j.at("dynamic").get<bool>());
  int with_embedding = 0;
  for (const auto& o : j.at("objects")) with_embedding += o.at("has_embedding").get<bool>();
  EXPECT_EQ(with_embedding, 3);
}

TEST(Service, BadRequests) {
  SceneService service;
  service.set_scene(labeled_scene());
  const std::string v = embedding_body(Eigen::VectorXf::Unit(6, 3));
  EXPECT_EQ(service.post_query("{not json").status, 400);
  EXPECT_EQ(service.post_query("[1, 2]").status, 400);
  EXPECT_EQ(service.post_query(R"({"embedding": [1, 0], "text": "cup"})").status, 400);
  EXPECT_EQ(service.post_query(R"({"top_k": 3})").status, 400);
  EXPECT_EQ(service.post_query(R"({"embedding": [1, 0, 0, 0, 0, 0], "colour": 1})").status, 400);
  EXPECT_EQ(service.post_query(R"({"embedding": [1, 0, 0, 0, 0, 0], "granularity": "tiny"})").status, 400);
  EXPECT_EQ(service.post_query(R"({"embedding": [1, 0, 0, 0, 0, 0], "top_k": -1})").status, 400);
  EXPECT_EQ(service.post_query(R"({"embedding": [1, 0]})").status, 400);
  EXPECT_EQ(service.post_query(R"({"embedding": ["a"]})").status, 400);
  const auto text = service.post_query(R"({"text": "red ball"})");
  EXPECT_EQ(text.status, 400);
  EXPECT_NE(error_of(text).find("embedding endpoint"), std::string::npos);
  EXPECT_EQ(service.post_query(v).status, 200);

  EXPECT_EQ(service.get_render({{"camera", "9"}}).status, 404);
  EXPECT_EQ(service.get_render({{"camera", "x"}}).status, 400);
  EXPECT_EQ(service.get_render({{"camera", "0"}, {"time", "1.5"}}).status, 400);
  EXPECT_EQ(service.get_render({{"camera", "0"}, {"zoom", "2"}}).status, 400);
  EXPECT_EQ(service.get_render({{"camera", "0"}, {"object", "99"}}).status, 404);
  EXPECT_EQ(service.get_export("99", {}).status, 404);
  EXPECT_EQ(service.get_export("four", {}).status, 400);
  EXPECT_EQ(service.get_export("4", {{"lod", "1"}}).status, 400);
}

TEST(Service, QueryMatchesLibrary) {
  const SceneModel scene = labeled_scene();
  SceneService service;
  service.set_scene(scene);
  const Eigen::VectorXf q = Eigen::VectorXf::Unit(6, 4) + 0.5f * Eigen::VectorXf::Unit(6, 3);
  const json got = json::parse(service.post_query(embedding_body(q, "small")).body);
  const QueryResult expected = query(q, scene, Granularity::Small);
  ASSERT_EQ(got.at("ranked").size(), expected.ranked.size());
  for (std::size_t i = 0; i < expected.ranked.size(); ++i) {
    EXPECT_EQ(got["ranked"][i].at("id").get<ObjectId>(), expected.ranked[i].id);
    EXPECT_NEAR(got["ranked"][i].at("score").get<double>(), expected.ranked[i].score, 1e-12);
  }
  EXPECT_EQ(got["ranked"][0].at("id").get<ObjectId>(), 5u);
}

TEST(Service, TextQueriesUseProvider) {
  const SceneModel scene = labeled_scene();
  ServiceOptions opts;
  opts.embeddings = std::make_shared<FileEmbeddingProvider>(
      6, std::map<std::string, Eigen::VectorXf>{{"green bottle", Eigen::VectorXf::Unit(6, 4)}});
  SceneService service(opts);
  service.set_scene(scene);
  const auto r = service.post_query(R"({"text": "green bottle", "top_k": 1})");
  ASSERT_EQ(r.status, 200);
  const json j = json::parse(r.body);
  EXPECT_EQ(j.at("ranked").size(), 1u);
  EXPECT_EQ(j["ranked"][0].at("id").get<ObjectId>(), 5u);
  EXPECT_EQ(service.post_query(R"({"text": "teapot"})").status, 400);
}

TEST(Service, RenderAndExportPayloads) {
  const SceneModel scene = labeled_scene();
  SceneService service;
  service.set_scene(scene);
  const auto png = service.get_render({{"camera", "1"}, {"object", "4"}});
  ASSERT_EQ(png.status, 200);
  EXPECT_EQ(png.content_type, "image/png");
  EXPECT_EQ(png.body.substr(1, 3), "PNG");
  const auto ply = service.get_export("4", {{"level", "small"}});
  ASSERT_EQ(ply.status, 200);
  EXPECT_EQ(ply.body, io::gaussians_ply(scene.gaussians, &scene.objects.find(Granularity::Small, 4)->gaussians));
  EXPECT_EQ(service.get_export("40", {}).body, ply.body);
}

TEST(Service, HighlightDimsOutsideObject) {
  const SceneModel scene = labeled_scene();
  const Camerad& cam = scene.cameras[0];
  const Imaged full = render_view(scene, cam, 0.0).result.image;
  const Imaged lit = render_highlight(scene, cam, 0.0, 4, Granularity::Small);
  const BinaryMask inside = scene.masks.mask(Granularity::Small, 0, 4);
  ASSERT_TRUE(inside.any());
  bool dimmed = false;
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const auto a = lit.at(x, y), b = full.at(x, y);
      EXPECT_LE((a - b).maxCoeff(), 1e-12);
      EXPECT_GE((a - 0.2 * b).minCoeff(), -1e-12);
      if (!inside(y, x) && b.maxCoeff() > 0.1 && (a - 0.2 * b).abs().maxCoeff() < 1e-9) dimmed = true;
    }
  EXPECT_TRUE(dimmed);
}

TEST(Service, ConcurrentQueriesMatchSequential) {
  const SceneModel scene = labeled_scene();
  SceneService service;
  service.set_scene(scene);
  const int port = service.start();
  std::mt19937_64 rng(12);
  std::normal_distribution<float> n;
  std::vector<std::string> bodies, sequential;
  for (int i = 0; i < 100; ++i) {
    bodies.push_back(embedding_body(Eigen::VectorXf::NullaryExpr(6, [&] { return n(rng); })));
    sequential.push_back(service.post_query(bodies.back()).body);
  }
  std::vector<std::future<std::pair<int, std::string>>> replies;
  for (int i = 0; i < 100; ++i)
    replies.push_back(std::async(std::launch::async, [&, i] {
      httplib::Client client("127.0.0.1", port);
      client.set_read_timeout(30);
      const auto res = client.Post("/query", bodies[i], "application/json");
      return res ? std::pair{res->status, res->body} : std::pair{-1, httplib::to_string(res.error())};
    }));
  for (int i = 0; i < 100; ++i) {
    const auto [status, body] = replies[i].get();
    EXPECT_EQ(status, 200);
    EXPECT_EQ(body, sequential[i]);
  }
  httplib::Client client("127.0.0.1", port);
  const auto missing = client.Get("/render?camera=17");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  service.stop();
}

TEST(HttpEmbeddings, PostsTextAndValidates) {
  httplib::Server stub;
  stub.Post("/embed", [](const httplib::Request& req, httplib::Response& res) {
    const std::string text = json::parse(req.body).at("text");
    if (text == "short") {
      res.set_content(json{{"vector", {1.0, 0.0}}}.dump(), "application/json");
      return;
    }
    res.set_content(json{{"vector", {0.0, 3.0, 4.0}}}.dump(), "application/json");
  });
  const int port = stub.bind_to_any_port("127.0.0.1");
  std::thread t([&] { stub.listen_after_bind(); });
  stub.wait_until_ready();
  const HttpEmbeddingProvider p("http://127.0.0.1:" + std::to_string(port), 3);
  const auto v = p.embed("cup");
  EXPECT_NEAR(v(2), 0.8f, 1e-6);
  EXPECT_EQ(p.embed("cup"), v);
  EXPECT_THROW(p.embed("short"), Error);
  stub.stop();
  t.join();
}
