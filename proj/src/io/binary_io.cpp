#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "segsplat/io.hpp"

namespace segsplat::io {

namespace {

constexpr char kEmbeddingMagic[4] = {'S', 'S', 'E', 'M'};
constexpr std::uint32_t kEmbeddingVersion = 1;
constexpr char kCheckpointMagic[4] = {'S', 'S', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

class Writer {
 public:
  template <typename T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    bytes_.append(buf, sizeof(T));
  }
  void raw(const char* p, std::size_t n) { bytes_.append(p, n); }
  void str(const std::string& s) {
    put<std::uint64_t>(s.size());
    bytes_ += s;
  }
  template <typename Derived>
  void doubles(const Eigen::DenseBase<Derived>& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) put<double>(m(r, c));
  }
  std::string take() { return std::move(bytes_); }

 private:
  std::string bytes_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void raw(char* out, std::size_t n) {
    need(n);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::string str() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename Derived>
  void doubles(Eigen::DenseBase<Derived>& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = get<double>();
  }
  /// Guards element counts read from the file against its remaining size.
  std::size_t count(std::size_t n, std::size_t min_bytes_each) {
    if (min_bytes_each > 0 && n > (bytes_.size() - pos_) / min_bytes_each) fail("implausible element count");
    return n;
  }
  bool done() const { return pos_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& msg) const { throw Error(fmt::format("{}: {}", what_, msg)); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) fail("truncated");
  }
  const std::string& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

void write_id_map(Writer& w, const IdMap& m) {
  // (value, run) pairs over row-major pixels
  std::vector<std::pair<std::uint32_t, std::uint32_t>> runs;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const std::uint32_t v = m.data()[i];
    if (!runs.empty() && runs.back().first == v) ++runs.back().second;
    else runs.push_back({v, 1});
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(runs.size()));
  for (const auto& [v, n] : runs) {
    w.put(v);
    w.put(n);
  }
}

IdMap read_id_map(Reader& r, int width, int height) {
  IdMap m(height, width);
  const std::size_t runs = r.count(r.get<std::uint32_t>(), 8);
  std::size_t pos = 0;
  for (std::size_t k = 0; k < runs; ++k) {
    const auto v = r.get<std::uint32_t>();
    const auto n = r.get<std::uint32_t>();
    if (pos + n > static_cast<std::size_t>(m.size())) r.fail("id map runs exceed the map");
    std::fill(m.data() + pos, m.data() + pos + n, v);
    pos += n;
  }
  if (pos != static_cast<std::size_t>(m.size())) r.fail("id map runs do not cover the map");
  return m;
}

}  // namespace

void write_embeddings(const fs::path& path, const EmbeddingTable& table) {
  Writer w;
  w.raw(kEmbeddingMagic, 4);
  w.put(kEmbeddingVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(table.dimension()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(table.size()));
  for (const auto& [key, v] : table.views()) {
    w.put<std::uint32_t>(key.first);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(key.second));
    for (Eigen::Index k = 0; k < v.size(); ++k) w.put<float>(v(k));
  }
  write_file(path, w.take());
}

EmbeddingTable read_embeddings(const fs::path& path) {
  const std::string bytes = read_file(path);
  Reader r(bytes, path.string());
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kEmbeddingMagic, 4) != 0) r.fail("not an embedding file");
  const auto version = r.get<std::uint32_t>();
  if (version != kEmbeddingVersion) r.fail(fmt::format("unsupported version {}", version));
  const auto dim = r.get<std::uint32_t>();
  if (dim == 0) r.fail("zero dimension");
  const std::size_t count = r.count(r.get<std::uint32_t>(), 8 + 4 * static_cast<std::size_t>(dim));
  EmbeddingTable table(static_cast<int>(dim));
  for (std::size_t i = 0; i < count; ++i) {
    const auto id = r.get<std::uint32_t>();
    const auto frame = r.get<std::uint32_t>();
    Eigen::VectorXf v(dim);
    for (std::uint32_t k = 0; k < dim; ++k) v(k) = r.get<float>();
    try {
      table.add(id, static_cast<int>(frame), v);
    } catch (const Error& e) {
      r.fail(fmt::format("record {}: {}", i, e.what()));
    }
  }
  if (!r.done()) r.fail("trailing bytes");
  return table;
}

std::string checkpoint_bytes(const SceneModel& scene) {
  Writer w;
  w.raw(kCheckpointMagic, 4);
  w.put(kCheckpointVersion);
  json config{{"train", to_json(scene.config)}};
  config["deformation"] = scene.deformation ? to_json(scene.deformation->config()) : json();
  w.str(config.dump());
  w.put<std::uint64_t>(scene.seed);
  w.put<std::int32_t>(scene.iteration);
  w.str(cameras_json(scene.cameras).dump());

  const auto& g = scene.gaussians;
  w.put<std::uint64_t>(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    w.doubles(g.means[i]);
    w.doubles(g.rotations[i]);
    w.doubles(g.log_scales[i]);
    w.put<double>(g.opacity_logits[i]);
    w.doubles(g.colors[i]);
    w.put<std::uint32_t>(g.ids[i].large);
    w.put<std::uint32_t>(g.ids[i].middle);
    w.put<std::uint32_t>(g.ids[i].small);
  }

  std::vector<const ObjectSet*> embedded;
  for (Granularity level : kAllLevels)
    for (const auto& [id, set] : scene.objects.sets(level))
      if (set.embedding) embedded.push_back(&set);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(embedded.size()));
  for (const ObjectSet* s : embedded) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(s->level));
    w.put<std::uint32_t>(s->id);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s->embedding->size()));
    for (Eigen::Index k = 0; k < s->embedding->size(); ++k) w.put<float>((*s->embedding)(k));
  }

  w.put<std::uint8_t>(scene.deformation ? 1 : 0);
  if (scene.deformation) {
    const auto& layers = scene.deformation->layers();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(layers.size()));
    for (const auto& l : layers) {
      w.put<std::uint32_t>(static_cast<std::uint32_t>(l.weight.rows()));
      w.put<std::uint32_t>(static_cast<std::uint32_t>(l.weight.cols()));
      w.doubles(l.weight);
      w.doubles(l.bias);
    }
  }

  const TrackedMasks& m = scene.masks;
  w.put<std::int32_t>(m.width());
  w.put<std::int32_t>(m.height());
  w.put<std::int32_t>(m.frame_count());
  for (Granularity level : kAllLevels)
    for (int f = 0; f < m.frame_count(); ++f) write_id_map(w, m.map(level, f));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.forwarding().size()));
  for (const auto& [from, to] : m.forwarding()) {
    w.put<std::uint32_t>(from);
    w.put<std::uint32_t>(to);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.partial().size()));
  for (const auto& p : m.partial()) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(p.level));
    w.put<std::uint32_t>(p.object);
    w.put<std::int32_t>(p.frame);
  }
  return w.take();
}

SceneModel checkpoint_from_bytes(const std::string& bytes) {
  Reader r(bytes, "checkpoint");
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) r.fail("not a checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) r.fail(fmt::format("unsupported version {}", version));

  SceneModel scene;
  std::optional<DeformationConfig> field_config;
  try {
    const json config = json::parse(r.str());
    from_json(config.at("train"), scene.config);
    if (!config.at("deformation").is_null()) {
      DeformationConfig d;
      from_json(config.at("deformation"), d);
      field_config = d;
    }
  } catch (const json::exception& e) {
    r.fail(fmt::format("config block: {}", e.what()));
  }
  scene.seed = r.get<std::uint64_t>();
  scene.iteration = r.get<std::int32_t>();
  try {
    scene.cameras = cameras_from_json(json::parse(r.str()));
  } catch (const json::exception& e) {
    r.fail(fmt::format("camera block: {}", e.what()));
  }

  const std::size_t n = r.count(r.get<std::uint64_t>(), 14 * 8 + 12);
  scene.gaussians.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Gaussian<double> g;
    r.doubles(g.mean);
    r.doubles(g.rotation);
    r.doubles(g.log_scale);
    g.opacity_logit = r.get<double>();
    r.doubles(g.color);
    g.ids.large = r.get<std::uint32_t>();
    g.ids.middle = r.get<std::uint32_t>();
    g.ids.small = r.get<std::uint32_t>();
    scene.gaussians.push_back(g);
  }
  scene.rebuild_objects();

  const std::size_t embedded = r.count(r.get<std::uint32_t>(), 9);
  for (std::size_t k = 0; k < embedded; ++k) {
    const auto level = r.get<std::uint8_t>();
    if (level > 2) r.fail("bad granularity");
    const auto id = r.get<std::uint32_t>();
    const auto dim = r.count(r.get<std::uint32_t>(), 4);
    Eigen::VectorXf v(static_cast<Eigen::Index>(dim));
    for (std::size_t d = 0; d < dim; ++d) v(static_cast<Eigen::Index>(d)) = r.get<float>();
    ObjectSet* set = scene.objects.find(static_cast<Granularity>(level), id);
    if (!set) r.fail(fmt::format("embedding for unknown object {}", id));
    set->embedding = std::move(v);
  }

  if (r.get<std::uint8_t>()) {
    if (!field_config) r.fail("deformation weights without a deformation config");
    DeformationField<double> field(*field_config, 0);
    const std::size_t layers = r.count(r.get<std::uint32_t>(), 8);
    if (layers != field.layers().size()) r.fail("deformation layer count differs from its config");
    for (auto& l : field.layers()) {
      const auto rows = r.get<std::uint32_t>();
      const auto cols = r.get<std::uint32_t>();
      if (rows != l.weight.rows() || cols != l.weight.cols()) r.fail("deformation layer shape differs from its config");
      r.doubles(l.weight);
      r.doubles(l.bias);
    }
    scene.deformation = std::move(field);
  } else if (field_config) {
    r.fail("deformation config without weights");
  }

  const int width = r.get<std::int32_t>();
  const int height = r.get<std::int32_t>();
  const int frames = r.get<std::int32_t>();
  if (width < 0 || height < 0 || frames < 0) r.fail("negative mask dimensions");
  scene.masks = TrackedMasks(width, height, frames);
  for (Granularity level : kAllLevels)
    for (int f = 0; f < frames; ++f) scene.masks.map(level, f) = read_id_map(r, width, height);
  scene.masks.refresh_tracks();
  const std::size_t merges = r.count(r.get<std::uint32_t>(), 8);
  for (std::size_t k = 0; k < merges; ++k) {
    const auto from = r.get<std::uint32_t>();
    scene.masks.set_forwarding(from, r.get<std::uint32_t>());
  }
  const std::size_t partial = r.count(r.get<std::uint32_t>(), 9);
  for (std::size_t k = 0; k < partial; ++k) {
    const auto level = r.get<std::uint8_t>();
    if (level > 2) r.fail("bad granularity");
    const auto id = r.get<std::uint32_t>();
    scene.masks.flag_partial(static_cast<Granularity>(level), id, r.get<std::int32_t>());
  }
  if (!r.done()) r.fail("trailing bytes");
  return scene;
}

void write_checkpoint(const fs::path& path, const SceneModel& scene) { write_file(path, checkpoint_bytes(scene)); }

SceneModel read_checkpoint(const fs::path& path) { return checkpoint_from_bytes(read_file(path)); }

void write_metrics_csv(const fs::path& path, const TrainLog& log) {
  std::string out = "iteration,render_loss,object_loss_small,object_loss_middle,object_loss_large,total_loss,psnr,gaussians\n";
  for (const auto& row : log.rows) {
    out += fmt::format("{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},", row.iteration, row.render_loss, row.object_loss[0],
                       row.object_loss[1], row.object_loss[2], row.total_loss);
    if (!std::isnan(row.psnr)) out += fmt::format("{:.6f}", row.psnr);
    out += fmt::format(",{}\n", row.gaussians);
  }
  write_file(path, out);
}

}  // namespace segsplat::io
