#include <cstring>
#include <sstream>

#include <fmt/format.h>

#include "segsplat/io.hpp"

namespace segsplat::io {

namespace {

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

struct PlyProperty {
  std::string name;
  PlyType type;
  bool list = false;
  PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

struct PlyHeader {
  bool binary = false;
  std::vector<PlyElement> elements;
  std::size_t body_offset = 0;
};

PlyType parse_type(const std::string& t, const fs::path& path) {
  if (t == "char" || t == "int8") return PlyType::Int8;
  if (t == "uchar" || t == "uint8") return PlyType::UInt8;
  if (t == "short" || t == "int16") return PlyType::Int16;
  if (t == "ushort" || t == "uint16") return PlyType::UInt16;
  if (t == "int" || t == "int32") return PlyType::Int32;
  if (t == "uint" || t == "uint32") return PlyType::UInt32;
  if (t == "float" || t == "float32") return PlyType::Float32;
  if (t == "double" || t == "float64") return PlyType::Float64;
  throw Error(fmt::format("{}: unknown PLY type '{}'", path.string(), t));
}

std::size_t type_size(PlyType t) {
  switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8: return 1;
    case PlyType::Int16:
    case PlyType::UInt16: return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
  }
  return 0;
}

PlyHeader parse_header(const std::string& bytes, const fs::path& path) {
  PlyHeader h;
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const std::size_t end = bytes.find('\n', pos);
    if (end == std::string::npos) throw Error(fmt::format("{}: truncated PLY header", path.string()));
    std::string line = bytes.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };
  if (next_line() != "ply") throw Error(fmt::format("{}: missing 'ply' magic", path.string()));
  for (;;) {
    const std::string line = next_line();
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "end_header") break;
    if (key == "comment" || key == "obj_info" || key.empty()) continue;
    if (key == "format") {
      std::string fmt_name;
      ss >> fmt_name;
      if (fmt_name == "ascii") h.binary = false;
      else if (fmt_name == "binary_little_endian") h.binary = true;
      else throw Error(fmt::format("{}: unsupported PLY format '{}'", path.string(), fmt_name));
    } else if (key == "element") {
      PlyElement e;
      ss >> e.name >> e.count;
      h.elements.push_back(e);
    } else if (key == "property") {
      if (h.elements.empty()) throw Error(fmt::format("{}: property before element", path.string()));
      std::string type;
      ss >> type;
      PlyProperty p;
      if (type == "list") {
        std::string count_type, item_type;
        ss >> count_type >> item_type >> p.name;
        p.list = true;
        p.count_type = parse_type(count_type, path);
        p.type = parse_type(item_type, path);
      } else {
        ss >> p.name;
        p.type = parse_type(type, path);
      }
      h.elements.back().properties.push_back(p);
    } else {
      throw Error(fmt::format("{}: unexpected header line '{}'", path.string(), line));
    }
  }
  h.body_offset = pos;
  return h;
}

double read_binary(const char* p, PlyType t) {
  switch (t) {
    case PlyType::Int8: { std::int8_t v; std::memcpy(&v, p, 1); return v; }
    case PlyType::UInt8: { std::uint8_t v; std::memcpy(&v, p, 1); return v; }
    case PlyType::Int16: { std::int16_t v; std::memcpy(&v, p, 2); return v; }
    case PlyType::UInt16: { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
    case PlyType::Int32: { std::int32_t v; std::memcpy(&v, p, 4); return v; }
    case PlyType::UInt32: { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
    case PlyType::Float32: { float v; std::memcpy(&v, p, 4); return v; }
    case PlyType::Float64: { double v; std::memcpy(&v, p, 8); return v; }
  }
  return 0.0;
}

// Rows of the named element, one vector of property values per row (list
// properties are skipped).
std::vector<std::vector<double>> read_element(const std::string& bytes, const PlyHeader& h, const std::string& name,
                                              const fs::path& path) {
  std::vector<std::vector<double>> rows;
  std::size_t pos = h.body_offset;
  std::istringstream ascii(h.binary ? std::string() : bytes.substr(h.body_offset));
  for (const auto& e : h.elements) {
    const bool wanted = e.name == name;
    if (wanted) rows.reserve(e.count);
    for (std::size_t r = 0; r < e.count; ++r) {
      std::vector<double> row;
      for (const auto& p : e.properties) {
        if (h.binary) {
          if (p.list) {
            if (pos + type_size(p.count_type) > bytes.size()) throw Error(fmt::format("{}: truncated PLY body", path.string()));
            const auto n = static_cast<std::size_t>(read_binary(bytes.data() + pos, p.count_type));
            pos += type_size(p.count_type) + n * type_size(p.type);
            continue;
          }
          if (pos + type_size(p.type) > bytes.size()) throw Error(fmt::format("{}: truncated PLY body", path.string()));
          if (wanted) row.push_back(read_binary(bytes.data() + pos, p.type));
          pos += type_size(p.type);
        } else {
          if (p.list) {
            std::size_t n = 0;
            if (!(ascii >> n)) throw Error(fmt::format("{}: truncated PLY body", path.string()));
            for (std::size_t k = 0; k < n; ++k) {
              double skip;
              ascii >> skip;
            }
            continue;
          }
          double v;
          if (!(ascii >> v)) throw Error(fmt::format("{}: truncated PLY body", path.string()));
          if (wanted) row.push_back(v);
        }
      }
      if (wanted) rows.push_back(std::move(row));
    }
    if (wanted) return rows;
  }
  throw Error(fmt::format("{}: no '{}' element", path.string(), name));
}

const PlyElement& find_element(const PlyHeader& h, const std::string& name, const fs::path& path) {
  for (const auto& e : h.elements)
    if (e.name == name) return e;
  throw Error(fmt::format("{}: no '{}' element", path.string(), name));
}

// Column of each property name among the non-list properties, -1 when absent.
std::map<std::string, int> columns(const PlyElement& e) {
  std::map<std::string, int> out;
  int c = 0;
  for (const auto& p : e.properties)
    if (!p.list) out[p.name] = c++;
  return out;
}

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

}  // namespace

PointCloud read_point_ply(const fs::path& path) {
  const std::string bytes = read_file(path);
  const PlyHeader h = parse_header(bytes, path);
  const PlyElement& vertex = find_element(h, "vertex", path);
  const auto col = columns(vertex);
  for (const char* k : {"x", "y", "z"})
    if (!col.contains(k)) throw Error(fmt::format("{}: vertex has no '{}' property", path.string(), k));
  const bool has_color = col.contains("red") && col.contains("green") && col.contains("blue");
  double color_scale = 1.0;
  if (has_color) {
    for (const auto& p : vertex.properties)
      if (p.name == "red" && p.type == PlyType::UInt8) color_scale = 1.0 / 255.0;
      else if (p.name == "red" && p.type == PlyType::UInt16) color_scale = 1.0 / 65535.0;
  }
  const auto rows = read_element(bytes, h, "vertex", path);
  PointCloud out;
  out.positions.reserve(rows.size());
  for (const auto& r : rows) {
    out.positions.emplace_back(r[col.at("x")], r[col.at("y")], r[col.at("z")]);
    if (has_color)
      out.colors.push_back(Vec3<double>(r[col.at("red")], r[col.at("green")], r[col.at("blue")]) * color_scale);
    else
      out.colors.push_back(Vec3<double>::Constant(0.5));
  }
  return out;
}

void write_point_ply(const fs::path& path, const PointCloud& points) {
  std::string out = fmt::format(
      "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n"
      "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
      points.positions.size());
  for (std::size_t i = 0; i < points.positions.size(); ++i) {
    for (int k = 0; k < 3; ++k) put(out, static_cast<float>(points.positions[i](k)));
    for (int k = 0; k < 3; ++k) {
      const double c = i < points.colors.size() ? points.colors[i](k) : 0.5;
      put(out, static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0)));
    }
  }
  write_file(path, out);
}

namespace {
constexpr const char* kGaussianProps[] = {"x", "y", "z", "rot_0", "rot_1", "rot_2", "rot_3", "scale_0", "scale_1",
                                          "scale_2", "opacity", "red", "green", "blue"};
}

std::string gaussians_ply(const GaussianCloud<double>& cloud, const std::vector<std::uint32_t>* subset) {
  const std::size_t n = subset ? subset->size() : cloud.size();
  std::string out = fmt::format("ply\nformat binary_little_endian 1.0\nelement vertex {}\n", n);
  for (const char* p : kGaussianProps) out += fmt::format("property double {}\n", p);
  out += "property uint large_id\nproperty uint middle_id\nproperty uint small_id\nend_header\n";
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = subset ? (*subset)[k] : k;
    if (i >= cloud.size()) throw Error(fmt::format("gaussians_ply: index {} out of range", i));
    for (int c = 0; c < 3; ++c) put(out, cloud.means[i](c));
    for (int c = 0; c < 4; ++c) put(out, cloud.rotations[i](c));
    for (int c = 0; c < 3; ++c) put(out, cloud.log_scales[i](c));
    put(out, cloud.opacity_logits[i]);
    for (int c = 0; c < 3; ++c) put(out, cloud.colors[i](c));
    put(out, cloud.ids[i].large);
    put(out, cloud.ids[i].middle);
    put(out, cloud.ids[i].small);
  }
  return out;
}

void write_gaussians_ply(const fs::path& path, const GaussianCloud<double>& cloud,
                         const std::vector<std::uint32_t>* subset) {
  write_file(path, gaussians_ply(cloud, subset));
}

GaussianCloud<double> read_gaussians_ply(const fs::path& path) {
  const std::string bytes = read_file(path);
  const PlyHeader h = parse_header(bytes, path);
  const auto col = columns(find_element(h, "vertex", path));
  for (const char* k : kGaussianProps)
    if (!col.contains(k)) throw Error(fmt::format("{}: vertex has no '{}' property", path.string(), k));
  const auto rows = read_element(bytes, h, "vertex", path);
  auto id = [&](const std::vector<double>& r, const char* k) -> ObjectId {
    const auto it = col.find(k);
    return it == col.end() ? kBackground : static_cast<ObjectId>(r[it->second]);
  };
  GaussianCloud<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    Gaussian<double> g;
    g.mean = {r[col.at("x")], r[col.at("y")], r[col.at("z")]};
    g.rotation = {r[col.at("rot_0")], r[col.at("rot_1")], r[col.at("rot_2")], r[col.at("rot_3")]};
    g.log_scale = {r[col.at("scale_0")], r[col.at("scale_1")], r[col.at("scale_2")]};
    g.opacity_logit = r[col.at("opacity")];
    g.color = {r[col.at("red")], r[col.at("green")], r[col.at("blue")]};
    g.ids = {id(r, "large_id"), id(r, "middle_id"), id(r, "small_id")};
    out.push_back(g);
  }
  return out;
}

}  // namespace segsplat::io
