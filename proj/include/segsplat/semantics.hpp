#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "segsplat/core.hpp"
#include "segsplat/masks.hpp"
#include "segsplat/scene.hpp"

namespace segsplat {

/// Per (object, frame) crop embeddings, all unit length and one dimension.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(int dimension = 512) : dim_(dimension) {}

  int dimension() const { return dim_; }
  std::size_t size() const { return views_.size(); }

  /// Stores `v` normalized; throws on dimension mismatch or zero vectors.
  void add(ObjectId id, int frame, const Eigen::VectorXf& v);

  const std::map<std::pair<ObjectId, int>, Eigen::VectorXf>& views() const { return views_; }

 private:
  int dim_;
  std::map<std::pair<ObjectId, int>, Eigen::VectorXf> views_;
};

struct Association {
  Eigen::VectorXf embedding;
  int views_used = 0;
  bool fell_back = false;  // every view was partial
};

/// Mean of the object's non-partial view embeddings, normalized. Views
/// recorded under ids that were merged into `id` count as its own.
Association associate(ObjectId id, Granularity level, const EmbeddingTable& table, const TrackedMasks& masks);

/// Attaches an embedding to every object set that has views; warnings name
/// the objects left without one or that fell back to partial views.
std::vector<std::string> associate_all(SceneModel& scene, const EmbeddingTable& table);

struct QueryHit {
  ObjectId id = kBackground;
  Granularity level = Granularity::Small;
  double score = 0.0;
  std::vector<std::uint32_t> gaussians;
};

struct QueryResult {
  std::vector<QueryHit> ranked;  // descending score; ties by level then id
};

/// Ranks objects with embeddings by cosine similarity to `text`. With no
/// level every granularity competes. `top_k` = 0 keeps all.
QueryResult query(const Eigen::VectorXf& text, const SceneModel& scene, std::optional<Granularity> level = {},
                  std::size_t top_k = 0);

/// Source of text-query embeddings.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual int dimension() const = 0;
  /// Unit vector for `text`; throws when the prompt cannot be embedded.
  virtual Eigen::VectorXf embed(std::string_view text) const = 0;
};

/// Deterministic hash-to-unit-vector embeddings for tests and demos.
class MockEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit MockEmbeddingProvider(int dimension = 512) : dim_(dimension) {}
  int dimension() const override { return dim_; }
  Eigen::VectorXf embed(std::string_view text) const override;

 private:
  int dim_;
};

/// Prompt embeddings precomputed by the preprocessing adapter.
class FileEmbeddingProvider : public EmbeddingProvider {
 public:
  FileEmbeddingProvider(int dimension, std::map<std::string, Eigen::VectorXf> prompts);
  int dimension() const override { return dim_; }
  Eigen::VectorXf embed(std::string_view text) const override;
  const std::map<std::string, Eigen::VectorXf>& prompts() const { return prompts_; }

 private:
  int dim_;
  std::map<std::string, Eigen::VectorXf> prompts_;
};

}  // namespace segsplat
