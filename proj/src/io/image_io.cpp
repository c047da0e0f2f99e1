#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <fmt/format.h>
#include <png.h>

#include "segsplat/io.hpp"

namespace segsplat::io {

namespace {

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::vector<std::uint8_t> bytes;

  PngWriter() {
    png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error("png: cannot create writer");
    info = png_create_info_struct(png);
    if (!info) {
      png_destroy_write_struct(&png, nullptr);
      throw Error("png: cannot create info");
    }
  }
  ~PngWriter() { png_destroy_write_struct(&png, &info); }

  static void on_write(png_structp p, png_bytep data, png_size_t n) {
    auto* self = static_cast<PngWriter*>(png_get_io_ptr(p));
    self->bytes.insert(self->bytes.end(), data, data + n);
  }
  static void on_flush(png_structp) {}

  // rows: height rows of width * channels * (depth / 8) bytes each
  std::vector<std::uint8_t> encode(int width, int height, int color_type, int depth,
                                   std::vector<std::vector<std::uint8_t>>& rows) {
    if (setjmp(png_jmpbuf(png))) throw Error("png: encoding failed");
    png_set_write_fn(png, this, on_write, on_flush);
    png_set_IHDR(png, info, width, height, depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_write_info(png, info);
    for (auto& row : rows) png_write_row(png, row.data());
    png_write_end(png, nullptr);
    return std::move(bytes);
  }
};

struct Decoded {
  int width = 0;
  int height = 0;
  int channels = 0;
  int depth = 0;
  std::vector<std::vector<std::uint8_t>> rows;

  double sample(int x, int y, int c) const {
    const auto& r = rows[static_cast<std::size_t>(y)];
    const std::size_t i = static_cast<std::size_t>(x) * channels + c;
    if (depth == 16) return (r[2 * i] << 8 | r[2 * i + 1]) / 65535.0;
    return r[i] / 255.0;
  }
  std::uint32_t raw16(int x, int y) const {
    const auto& r = rows[static_cast<std::size_t>(y)];
    const std::size_t i = static_cast<std::size_t>(x) * channels;
    if (depth == 16) return static_cast<std::uint32_t>(r[2 * i] << 8 | r[2 * i + 1]);
    return r[i];
  }
};

struct ReadState {
  const std::string* data;
  std::size_t pos = 0;
};

void on_read(png_structp p, png_bytep out, png_size_t n) {
  auto* st = static_cast<ReadState*>(png_get_io_ptr(p));
  if (st->pos + n > st->data->size()) png_error(p, "truncated");
  std::memcpy(out, st->data->data() + st->pos, n);
  st->pos += n;
}

Decoded decode(const std::string& bytes, const fs::path& path) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8))
    throw Error(fmt::format("{}: not a PNG file", path.string()));
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  Decoded out;
  ReadState st{&bytes};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(fmt::format("{}: corrupt PNG", path.string()));
  }
  png_set_read_fn(png, &st, on_read);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.depth = png_get_bit_depth(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  out.rows.assign(static_cast<std::size_t>(out.height), std::vector<std::uint8_t>(row_bytes));
  for (auto& r : out.rows) png_read_row(png, r.data(), nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

std::uint8_t to_byte(double v) {
  if (!std::isfinite(v)) v = 0.0;
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open {}", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(fmt::format("write failed: {}", path.string()));
}

std::vector<std::uint8_t> encode_png(const Imaged& image) {
  std::vector<std::vector<std::uint8_t>> rows(static_cast<std::size_t>(image.height));
  for (int y = 0; y < image.height; ++y) {
    auto& r = rows[static_cast<std::size_t>(y)];
    r.resize(static_cast<std::size_t>(image.width) * 3);
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) r[static_cast<std::size_t>(x) * 3 + c] = to_byte(image.at(x, y)(c));
  }
  PngWriter w;
  return w.encode(image.width, image.height, PNG_COLOR_TYPE_RGB, 8, rows);
}

void write_png(const fs::path& path, const Imaged& image) {
  const auto bytes = encode_png(image);
  write_file(path, std::string(bytes.begin(), bytes.end()));
}

Imaged read_png(const fs::path& path) {
  const Decoded d = decode(read_file(path), path);
  Imaged out(d.width, d.height);
  const bool gray = d.channels <= 2;
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y)(c) = d.sample(x, y, gray ? 0 : c);
  return out;
}

void write_id_png(const fs::path& path, const IdMap& map) {
  std::vector<std::vector<std::uint8_t>> rows(static_cast<std::size_t>(map.rows()));
  for (Eigen::Index y = 0; y < map.rows(); ++y) {
    auto& r = rows[static_cast<std::size_t>(y)];
    r.resize(static_cast<std::size_t>(map.cols()) * 2);
    for (Eigen::Index x = 0; x < map.cols(); ++x) {
      const std::uint32_t id = map(y, x);
      if (id > 0xFFFF) throw Error(fmt::format("{}: id {} does not fit a 16-bit map", path.string(), id));
      r[static_cast<std::size_t>(x) * 2] = static_cast<std::uint8_t>(id >> 8);
      r[static_cast<std::size_t>(x) * 2 + 1] = static_cast<std::uint8_t>(id & 0xFF);
    }
  }
  PngWriter w;
  const auto bytes = w.encode(static_cast<int>(map.cols()), static_cast<int>(map.rows()), PNG_COLOR_TYPE_GRAY, 16, rows);
  write_file(path, std::string(bytes.begin(), bytes.end()));
}

IdMap read_id_png(const fs::path& path) {
  const Decoded d = decode(read_file(path), path);
  if (d.channels != 1) throw Error(fmt::format("{}: id map must be single-channel", path.string()));
  IdMap out(d.height, d.width);
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x) out(y, x) = d.raw16(x, y);
  return out;
}

void write_planar_f32(const fs::path& path, const Imaged& image) {
  std::string bytes(static_cast<std::size_t>(image.pixel_count()) * 3 * sizeof(float), '\0');
  char* p = bytes.data();
  for (int c = 0; c < 3; ++c)
    for (Eigen::Index i = 0; i < image.pixel_count(); ++i) {
      const float v = static_cast<float>(image.rgb(i, c));
      std::memcpy(p, &v, sizeof v);
      p += sizeof v;
    }
  write_file(path, bytes);
}

Imaged read_planar_f32(const fs::path& path, int width, int height) {
  const std::string bytes = read_file(path);
  Imaged out(width, height);
  if (bytes.size() != static_cast<std::size_t>(out.pixel_count()) * 3 * sizeof(float))
    throw Error(fmt::format("{}: expected {}x{} planar float image", path.string(), width, height));
  const char* p = bytes.data();
  for (int c = 0; c < 3; ++c)
    for (Eigen::Index i = 0; i < out.pixel_count(); ++i) {
      float v;
      std::memcpy(&v, p, sizeof v);
      out.rgb(i, c) = v;
      p += sizeof v;
    }
  return out;
}

}  // namespace segsplat::io
