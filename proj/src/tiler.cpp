#include "chipstitch/tiler.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "chipstitch/parallel.hpp"

namespace chipstitch {

void TileSpec::validate() const {
  if (window < 1) {
    throw Error(ErrorFamily::kInvalidArgument, "tile window must be >= 1 pixel");
  }
  if (!(overlap >= 0.0 && overlap < 1.0)) {
    throw Error(ErrorFamily::kInvalidArgument, "tile overlap must lie in [0, 1)");
  }
  stride();
}

int TileSpec::stride() const {
  // The epsilon absorbs representation error, e.g. 100 * (1 - 0.3) = 69.999...
  const int s = static_cast<int>(std::floor(window * (1.0 - overlap) + 1e-9));
  if (s < 1) {
    throw Error(ErrorFamily::kInvalidArgument,
                "overlap " + std::to_string(overlap) + " leaves a zero stride for window " +
                    std::to_string(window));
  }
  return s;
}

std::vector<int> plan_axis(int extent, const TileSpec& spec) {
  spec.validate();
  if (extent < 1) throw Error(ErrorFamily::kInvalidArgument, "image extent must be >= 1");
  std::vector<int> offsets{0};
  if (extent <= spec.window) return offsets;
  const int stride = spec.stride();
  int offset = 0;
  while (offset + spec.window < extent) {
    offset += stride;
    if (offset + spec.window >= extent) offset = extent - spec.window;
    offsets.push_back(offset);
  }
  return offsets;
}

std::vector<TileOffset> plan_tiles(int image_width, int image_height, const TileSpec& spec) {
  const auto rows = plan_axis(image_height, spec);
  const auto cols = plan_axis(image_width, spec);
  std::vector<TileOffset> plan;
  plan.reserve(rows.size() * cols.size());
  for (int r : rows) {
    for (int c : cols) plan.push_back({r, c});
  }
  return plan;
}

void validate_parent_name(std::string_view parent) {
  if (parent.empty()) {
    throw Error(ErrorFamily::kInvalidArgument, "parent name must be non-empty");
  }
  if (parent.find('|') != std::string_view::npos) {
    throw Error(ErrorFamily::kInvalidArgument,
                "parent name '" + std::string(parent) + "' contains the reserved delimiter '|'");
  }
}

std::string cutout_name(std::string_view parent, int row, int col, int height, int width,
                        std::string_view ext) {
  validate_parent_name(parent);
  if (ext.empty() || ext.find('|') != std::string_view::npos) {
    throw Error(ErrorFamily::kInvalidArgument, "cutout extension must be non-empty without '|'");
  }
  if (row < 0 || col < 0 || height < 1 || width < 1) {
    throw Error(ErrorFamily::kInvalidArgument, "cutout offsets must be >= 0 and sizes >= 1");
  }
  std::string name(parent);
  name += '|';
  name += std::to_string(row) + '_' + std::to_string(col) + '_' + std::to_string(height) + '_' +
          std::to_string(width);
  name += '.';
  name += ext;
  return name;
}

namespace {

int parse_field(std::string_view text, std::string_view field, std::string_view whole, int min) {
  int value = 0;
  const bool digits_only =
      !text.empty() && text.find_first_not_of("0123456789") == std::string_view::npos;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (!digits_only || ec != std::errc{} || ptr != text.data() + text.size() || value < min) {
    throw Error(ErrorFamily::kFormat, "malformed cutout name '" + std::string(whole) +
                                          "': bad " + std::string(field) + " field '" +
                                          std::string(text) + "'");
  }
  return value;
}

}  // namespace

CutoutName parse_cutout_name(std::string_view name) {
  const auto bar = name.find('|');
  if (bar == std::string_view::npos) {
    throw Error(ErrorFamily::kFormat,
                "malformed cutout name '" + std::string(name) + "': missing '|' delimiter");
  }
  if (name.find('|', bar + 1) != std::string_view::npos) {
    throw Error(ErrorFamily::kFormat,
                "malformed cutout name '" + std::string(name) + "': more than one '|'");
  }
  CutoutName out;
  out.parent = std::string(name.substr(0, bar));
  if (out.parent.empty()) {
    throw Error(ErrorFamily::kFormat,
                "malformed cutout name '" + std::string(name) + "': empty parent field");
  }
  const std::string_view rest = name.substr(bar + 1);
  const auto dot = rest.find('.');
  if (dot == std::string_view::npos || dot + 1 == rest.size()) {
    throw Error(ErrorFamily::kFormat,
                "malformed cutout name '" + std::string(name) + "': missing ext field");
  }
  out.ext = std::string(rest.substr(dot + 1));
  std::string_view stem = rest.substr(0, dot);

  constexpr std::string_view kFields[4] = {"row", "col", "height", "width"};
  int values[4] = {};
  for (int i = 0; i < 4; ++i) {
    const auto sep = stem.find('_');
    const bool last = i == 3;
    if (last != (sep == std::string_view::npos)) {
      throw Error(ErrorFamily::kFormat, "malformed cutout name '" + std::string(name) +
                                            "': expected 4 '_'-separated fields at " +
                                            std::string(kFields[i]));
    }
    const std::string_view token = last ? stem : stem.substr(0, sep);
    values[i] = parse_field(token, kFields[i], name, i < 2 ? 0 : 1);
    if (!last) stem = stem.substr(sep + 1);
  }
  out.row = values[0];
  out.col = values[1];
  out.height = values[2];
  out.width = values[3];
  return out;
}

std::string TileRecord::cutout_name(std::string_view ext) const {
  return chipstitch::cutout_name(parent_name, row, col, height, width, ext);
}

RasterImage TileRecord::as_image(double gsd) const {
  RasterImage img;
  img.name = cutout_name();
  img.width = pixel_width();
  img.height = pixel_height();
  img.bands = bands;
  img.gsd = gsd;
  img.pixels = pixels;
  return img;
}

std::vector<TileRecord> extract_tiles(const RasterImage& image, const TileSpec& spec, int upsample,
                                      int workers) {
  image.validate();
  validate_parent_name(image.name);
  if (upsample < 1) throw Error(ErrorFamily::kInvalidArgument, "upsample factor must be >= 1");
  const auto plan = plan_tiles(image.width, image.height, spec);
  const int h = std::min(spec.window, image.height);
  const int w = std::min(spec.window, image.width);
  const std::size_t bands = static_cast<std::size_t>(image.bands);

  std::vector<TileRecord> tiles(plan.size());
  parallel_for(plan.size(), workers, [&](std::size_t i) {
    TileRecord& t = tiles[i];
    t.parent_name = image.name;
    t.row = plan[i].row;
    t.col = plan[i].col;
    t.height = h;
    t.width = w;
    t.parent_height = image.height;
    t.parent_width = image.width;
    t.bands = image.bands;
    t.upsample = upsample;
    const std::size_t pw = static_cast<std::size_t>(w) * upsample;
    t.pixels.resize(static_cast<std::size_t>(h) * upsample * pw * bands);
    for (int y = 0; y < h * upsample; ++y) {
      const int sy = t.row + y / upsample;
      std::uint8_t* dst = t.pixels.data() + static_cast<std::size_t>(y) * pw * bands;
      if (upsample == 1) {
        const std::uint8_t* src = image.pixels.data() + image.index(t.col, sy);
        std::copy(src, src + static_cast<std::size_t>(w) * bands, dst);
        continue;
      }
      for (std::size_t x = 0; x < pw; ++x) {
        const std::uint8_t* src =
            image.pixels.data() + image.index(t.col + static_cast<int>(x) / upsample, sy);
        std::copy(src, src + bands, dst + x * bands);
      }
    }
  });
  return tiles;
}

std::vector<GroundTruthLabel> labels_inside(const std::vector<GroundTruthLabel>& labels,
                                            const BoundingBox& rect) {
  std::vector<GroundTruthLabel> out;
  for (const auto& label : labels) {
    const double area = label.box.area();
    if (area <= 0.0) continue;
    const double inside = intersection_area(label.box, rect);
    if (inside / area > 0.5) {
      const BoundingBox clipped{std::max(label.box.xmin, rect.xmin), std::max(label.box.ymin, rect.ymin),
                                std::min(label.box.xmax, rect.xmax), std::min(label.box.ymax, rect.ymax)};
      out.push_back({label.class_id, clipped});
    }
  }
  return out;
}

}  // namespace chipstitch
