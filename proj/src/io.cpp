#include "chipstitch/io.hpp"

#include <png.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include "json.hpp"
#include <sstream>

namespace chipstitch::io {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

std::string where(const fs::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line) + ": ";
}

int parse_int(std::string_view text, std::string_view what) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw Error(ErrorFamily::kFormat, "bad integer for " + std::string(what) + ": '" +
                                          std::string(text) + "'");
  }
  return value;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorFamily::kIo, "cannot read " + path.string());
  return in;
}

// Calls fn(line_number, fields) for every non-blank, non-comment line.
template <typename Fn>
void for_each_record(const fs::path& path, char sep, Fn&& fn) {
  auto in = open_in(path);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    fn(number, split(line, sep));
  }
}

BoundingBox parse_box(const std::vector<std::string_view>& f, std::size_t first) {
  BoundingBox box{parse_number(f[first], "xmin"), parse_number(f[first + 1], "ymin"),
                  parse_number(f[first + 2], "xmax"), parse_number(f[first + 3], "ymax")};
  if (!box.valid()) throw Error(ErrorFamily::kFormat, "box has xmin > xmax or ymin > ymax");
  return box;
}

std::string box_fields(const BoundingBox& b) {
  return format_number(b.xmin) + ',' + format_number(b.ymin) + ',' + format_number(b.xmax) + ',' +
         format_number(b.ymax);
}

}  // namespace

std::string format_number(double value) {
  if (value == 0.0) value = 0.0;  // drop negative zero
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw Error(ErrorFamily::kFormat, "cannot format number");
  return std::string(buf, ptr);
}

double parse_number(std::string_view text, std::string_view what) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) {
    throw Error(ErrorFamily::kFormat,
                "bad number for " + std::string(what) + ": '" + std::string(text) + "'");
  }
  return value;
}

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorFamily::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorFamily::kIo, "write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ----------------------------------------------------------------------------
// PNG
// ----------------------------------------------------------------------------

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

// setjmp stays in these helpers, which hold no C++ objects.
struct PngHeader {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int channels = 0;
};

bool png_read_header(png_structp png, png_infop info, std::FILE* f, PngHeader* out) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  out->width = png_get_image_width(png, info);
  out->height = png_get_image_height(png, info);
  out->channels = png_get_channels(png, info);
  return true;
}

bool png_read_body(png_structp png, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_image(png, rows);
  png_read_end(png, nullptr);
  return true;
}

bool png_write_all(png_structp png, png_infop info, std::FILE* f, png_uint_32 width,
                   png_uint_32 height, int bands, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, f);
  png_set_IHDR(png, info, width, height, 8, bands == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 3);
  png_write_info(png, info);
  png_write_rows(png, rows, height);
  png_write_end(png, nullptr);
  return true;
}

}  // namespace

RasterImage read_png(const fs::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error(ErrorFamily::kIo, "cannot read image " + path.string());
  png_byte header[8] = {};
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw Error(ErrorFamily::kIo, "not a PNG file: " + path.string());
  }

  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorFamily::kIo, "libpng initialisation failed");
  }
  const auto fail = [&]() {
    png_destroy_read_struct(&png, &info, nullptr);
    return Error(ErrorFamily::kIo, "cannot decode " + path.string() + ": " + message);
  };

  PngHeader h;
  if (!png_read_header(png, info, file.get(), &h)) throw fail();
  RasterImage img;
  img.width = static_cast<int>(h.width);
  img.height = static_cast<int>(h.height);
  img.bands = h.channels;
  img.name = path.stem().string();
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.bands);
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) {
    rows[y] = img.pixels.data() + static_cast<std::size_t>(y) * img.width * img.bands;
  }
  if (!png_read_body(png, rows.data())) throw fail();
  png_destroy_read_struct(&png, &info, nullptr);
  if (img.bands != 1 && img.bands != 3) {
    throw Error(ErrorFamily::kIo, "unsupported band count in " + path.string());
  }
  return img;
}

void write_png(const fs::path& path, const RasterImage& image) {
  if (image.bands != 1 && image.bands != 3) {
    throw Error(ErrorFamily::kInvalidArgument, "PNG output needs 1 or 3 bands");
  }
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw Error(ErrorFamily::kIo, "cannot write image " + path.string());

  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorFamily::kIo, "libpng initialisation failed");
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
  for (int y = 0; y < image.height; ++y) {
    rows[y] = const_cast<png_bytep>(image.pixels.data()) +
              static_cast<std::size_t>(y) * image.width * image.bands;
  }
  const bool ok = png_write_all(png, info, file.get(), static_cast<png_uint_32>(image.width),
                                static_cast<png_uint_32>(image.height), image.bands, rows.data());
  png_destroy_write_struct(&png, &info);
  if (!ok) throw Error(ErrorFamily::kIo, "cannot encode " + path.string() + ": " + message);
  if (std::fflush(file.get()) != 0) throw Error(ErrorFamily::kIo, "write failed for " + path.string());
}

fs::path sidecar_path(const fs::path& image_path) {
  fs::path p = image_path;
  p.replace_extension(".json");
  return p;
}

RasterImage load_image(const fs::path& image_path) {
  RasterImage img = read_png(image_path);
  const auto sidecar = sidecar_path(image_path);
  if (!fs::exists(sidecar)) {
    throw Error(ErrorFamily::kIo, "missing gsd sidecar " + sidecar.string() + " for " +
                                      image_path.string());
  }
  try {
    const auto meta = nlohmann::json::parse(read_text(sidecar));
    img.gsd = meta.at("gsd_m").get<double>();
    if (meta.contains("name")) img.name = meta.at("name").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorFamily::kFormat, "bad sidecar " + sidecar.string() + ": " + e.what());
  }
  img.validate();
  validate_parent_name(img.name);
  return img;
}

void save_image(const fs::path& image_path, const RasterImage& image) {
  image.validate();
  write_png(image_path, image);
  nlohmann::ordered_json meta;
  meta["name"] = image.name;
  meta["gsd_m"] = image.gsd;
  write_text(sidecar_path(image_path), meta.dump(2) + "\n");
}

// ----------------------------------------------------------------------------
// Manifest
// ----------------------------------------------------------------------------

ManifestEntry manifest_entry(const TileRecord& tile, std::string_view ext) {
  return {tile.cutout_name(ext), tile.parent_name, tile.row, tile.col, tile.height, tile.width};
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::string text;
  for (const auto& e : entries) {
    text += e.cutout_name + '\t' + e.parent_name + '\t' + std::to_string(e.row) + '\t' +
            std::to_string(e.col) + '\t' + std::to_string(e.height) + '\t' + std::to_string(e.width) +
            '\n';
  }
  write_text(path, text);
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::vector<ManifestEntry> entries;
  for_each_record(path, '\t', [&](std::size_t line, const std::vector<std::string_view>& f) {
    try {
      if (f.size() != 6) throw Error(ErrorFamily::kFormat, "expected 6 tab-separated fields");
      ManifestEntry e{std::string(f[0]), std::string(f[1]), parse_int(f[2], "row"),
                      parse_int(f[3], "col"), parse_int(f[4], "h"), parse_int(f[5], "w")};
      const auto parsed = parse_cutout_name(e.cutout_name);
      if (parsed.parent != e.parent_name || parsed.row != e.row || parsed.col != e.col ||
          parsed.height != e.height || parsed.width != e.width) {
        throw Error(ErrorFamily::kFormat, "cutout name disagrees with the other fields");
      }
      entries.push_back(std::move(e));
    } catch (const Error& err) {
      throw Error(ErrorFamily::kFormat, where(path, line) + err.what());
    }
  });
  return entries;
}

fs::path write_tiles(const fs::path& dir, std::span<const TileRecord> tiles) {
  std::vector<ManifestEntry> entries;
  entries.reserve(tiles.size());
  for (const auto& tile : tiles) {
    entries.push_back(manifest_entry(tile));
    write_png(dir / entries.back().cutout_name, tile.as_image(1.0));
  }
  const auto manifest = dir / "manifest.tsv";
  write_manifest(manifest, entries);
  return manifest;
}

// ----------------------------------------------------------------------------
// Detections and labels
// ----------------------------------------------------------------------------

std::vector<TileDetectionRow> read_tile_detections(const fs::path& path, const ClassTable& classes) {
  std::vector<TileDetectionRow> rows;
  for_each_record(path, ',', [&](std::size_t line, const std::vector<std::string_view>& f) {
    try {
      if (f.size() != 7) throw Error(ErrorFamily::kFormat, "expected 7 comma-separated fields");
      TileDetectionRow row;
      row.cutout_name = std::string(f[0]);
      row.line = line;
      row.detection.class_id = classes.id_of(f[1]);
      row.detection.box = parse_box(f, 2);
      row.detection.confidence = sanitize_confidence(parse_number(f[6], "confidence"));
      row.detection.frame = TileLocal{0};
      rows.push_back(std::move(row));
    } catch (const Error& err) {
      throw Error(ErrorFamily::kFormat, where(path, line) + err.what());
    }
  });
  return rows;
}

void write_tile_detections(const fs::path& path, const std::vector<std::string>& cutout_names,
                           const std::vector<std::vector<Detection>>& per_tile,
                           const ClassTable& classes) {
  std::string text;
  for (std::size_t i = 0; i < per_tile.size(); ++i) {
    for (const auto& d : per_tile[i]) {
      text += cutout_names.at(i) + ',' + classes.name(d.class_id) + ',' + box_fields(d.box) + ',' +
              format_number(d.confidence) + '\n';
    }
  }
  write_text(path, text);
}

std::vector<GlobalDetectionRow> read_global_detections(const fs::path& path,
                                                       const ClassTable& classes) {
  std::vector<GlobalDetectionRow> rows;
  for_each_record(path, ',', [&](std::size_t line, const std::vector<std::string_view>& f) {
    try {
      if (f.size() != 7) throw Error(ErrorFamily::kFormat, "expected 7 comma-separated fields");
      GlobalDetectionRow row;
      row.parent_name = std::string(f[0]);
      row.detection.class_id = classes.id_of(f[1]);
      row.detection.box = parse_box(f, 2);
      row.detection.confidence = sanitize_confidence(parse_number(f[6], "confidence"));
      row.detection.frame = Global{};
      rows.push_back(std::move(row));
    } catch (const Error& err) {
      throw Error(ErrorFamily::kFormat, where(path, line) + err.what());
    }
  });
  return rows;
}

std::string format_global_detections(std::string_view parent_name,
                                     const std::vector<Detection>& detections,
                                     const ClassTable& classes) {
  std::string text;
  for (const auto& d : detections) {
    text += std::string(parent_name) + ',' + classes.name(d.class_id) + ',' + box_fields(d.box) +
            ',' + format_number(d.confidence) + '\n';
  }
  return text;
}

void write_global_detections(const fs::path& path, std::string_view parent_name,
                             const std::vector<Detection>& detections, const ClassTable& classes) {
  write_text(path, format_global_detections(parent_name, detections, classes));
}

std::vector<GroundTruthLabel> read_labels(const fs::path& path, const ClassTable& classes) {
  std::vector<GroundTruthLabel> labels;
  for_each_record(path, ',', [&](std::size_t line, const std::vector<std::string_view>& f) {
    try {
      if (f.size() != 5) throw Error(ErrorFamily::kFormat, "expected 5 comma-separated fields");
      labels.push_back({classes.id_of(f[0]), parse_box(f, 1)});
    } catch (const Error& err) {
      throw Error(ErrorFamily::kFormat, where(path, line) + err.what());
    }
  });
  return labels;
}

void write_labels(const fs::path& path, const std::vector<GroundTruthLabel>& labels,
                  const ClassTable& classes) {
  std::string text;
  for (const auto& l : labels) text += classes.name(l.class_id) + ',' + box_fields(l.box) + '\n';
  write_text(path, text);
}

std::vector<TrainingListEntry> read_training_list(const fs::path& path) {
  std::vector<TrainingListEntry> entries;
  const auto base = path.parent_path();
  for_each_record(path, '\t', [&](std::size_t line, const std::vector<std::string_view>& f) {
    if (f.size() != 2 || f[0].empty() || f[1].empty()) {
      throw Error(ErrorFamily::kFormat,
                  where(path, line) + "expected image path and label path separated by a tab");
    }
    fs::path image(f[0]);
    fs::path labels(f[1]);
    if (image.is_relative()) image = base / image;
    if (labels.is_relative()) labels = base / labels;
    entries.emplace_back(image, labels);
  });
  return entries;
}

void write_training_list(const fs::path& path, const std::vector<TrainingListEntry>& entries) {
  std::string text;
  for (const auto& [image, labels] : entries) text += image.string() + '\t' + labels.string() + '\n';
  write_text(path, text);
}

}  // namespace chipstitch::io
