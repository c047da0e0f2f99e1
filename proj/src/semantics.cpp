#include "segsplat/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

namespace segsplat {

namespace {

Eigen::VectorXf unit(const Eigen::VectorXf& v, const char* what) {
  const double n = v.cast<double>().norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw Error(std::string(what) + ": zero or non-finite vector");
  return (v.cast<double>() / n).cast<float>();
}

}  // namespace

void EmbeddingTable::add(ObjectId id, int frame, const Eigen::VectorXf& v) {
  if (v.size() != dim_)
    throw Error(fmt::format("embedding for object {} frame {}: dimension {} != {}", id, frame, v.size(), dim_));
  views_[{id, frame}] = unit(v, "embedding");
}

Association associate(ObjectId id, Granularity level, const EmbeddingTable& table, const TrackedMasks& masks) {
  Eigen::VectorXd kept = Eigen::VectorXd::Zero(table.dimension());
  Eigen::VectorXd all = Eigen::VectorXd::Zero(table.dimension());
  int n_kept = 0, n_all = 0;
  for (const auto& [key, v] : table.views()) {
    if (masks.resolve(key.first) != id) continue;
    all += v.cast<double>();
    ++n_all;
    if (masks.is_partial(level, id, key.second) || masks.is_partial(level, key.first, key.second)) continue;
    kept += v.cast<double>();
    ++n_kept;
  }
  if (n_all == 0) throw Error(fmt::format("object {} has no views", id));
  Association out;
  out.fell_back = n_kept == 0;
  const Eigen::VectorXd mean = out.fell_back ? all / n_all : kept / n_kept;
  out.views_used = out.fell_back ? n_all : n_kept;
  const double norm = mean.norm();
  if (!(norm > 0.0)) throw Error(fmt::format("object {}: view embeddings cancel out", id));
  out.embedding = (mean / norm).cast<float>();
  return out;
}

std::vector<std::string> associate_all(SceneModel& scene, const EmbeddingTable& table) {
  std::vector<std::string> warnings;
  for (Granularity g : kAllLevels) {
    for (auto& [id, set] : scene.objects.sets(g)) {
      try {
        const Association a = associate(id, g, table, scene.masks);
        set.embedding = a.embedding;
        if (a.fell_back)
          warnings.push_back(fmt::format("object {} at {}: all views partial, using all views", id, to_string(g)));
      } catch (const Error& e) {
        set.embedding.reset();
        warnings.push_back(fmt::format("object {} at {}: {}", id, to_string(g), e.what()));
      }
    }
  }
  return warnings;
}

QueryResult query(const Eigen::VectorXf& text, const SceneModel& scene, std::optional<Granularity> level,
                  std::size_t top_k) {
  const Eigen::VectorXd q = unit(text, "query").cast<double>();
  QueryResult out;
  bool any_object = false;
  for (Granularity g : kAllLevels) {
    if (level && *level != g) continue;
    for (const auto& [id, set] : scene.objects.sets(g)) {
      any_object = true;
      if (!set.embedding) continue;
      if (set.embedding->size() != q.size())
        throw Error(fmt::format("query dimension {} != embedding dimension {}", q.size(), set.embedding->size()));
      const Eigen::VectorXd e = set.embedding->cast<double>();
      const double score = q.dot(e) / e.norm();
      out.ranked.push_back({id, g, score, set.gaussians});
    }
  }
  if (!any_object) throw Error("query: empty registry");
  if (out.ranked.empty()) throw Error("query: no object has an embedding");
  std::stable_sort(out.ranked.begin(), out.ranked.end(), [](const QueryHit& a, const QueryHit& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.level != b.level) return a.level < b.level;
    return a.id < b.id;
  });
  if (top_k > 0 && out.ranked.size() > top_k) out.ranked.resize(top_k);
  return out;
}

Eigen::VectorXf MockEmbeddingProvider::embed(std::string_view text) const {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::mt19937_64 rng(h);
  std::normal_distribution<double> n;
  Eigen::VectorXd v(dim_);
  for (int i = 0; i < dim_; ++i) v(i) = n(rng);
  return (v / v.norm()).cast<float>();
}

FileEmbeddingProvider::FileEmbeddingProvider(int dimension, std::map<std::string, Eigen::VectorXf> prompts)
    : dim_(dimension), prompts_(std::move(prompts)) {
  for (auto& [text, v] : prompts_) {
    if (v.size() != dim_) throw Error(fmt::format("prompt '{}': dimension {} != {}", text, v.size(), dim_));
    v = unit(v, "prompt embedding");
  }
}

Eigen::VectorXf FileEmbeddingProvider::embed(std::string_view text) const {
  auto it = prompts_.find(std::string(text));
  if (it == prompts_.end()) throw Error(fmt::format("no embedding for prompt '{}'", text));
  return it->second;
}

}  // namespace segsplat
