#pragma once

// Sliding-window partitioning of large rasters into overlapping cutouts.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "chipstitch/core.hpp"

namespace chipstitch {

struct TileSpec {
  int window = 416;       // square cutout side, pixels
  double overlap = 0.15;  // fraction of the window shared by neighbours

  void validate() const;
  /// floor(window * (1 - overlap)); throws when it reaches 0.
  int stride() const;
};

struct TileOffset {
  int row = 0;
  int col = 0;
  friend bool operator==(const TileOffset&, const TileOffset&) = default;
};

/// One cutout. Coordinates are in the pixel frame of the raster it was cut
/// from. When `upsample` > 1 the pixel buffer holds the cutout enlarged by
/// that factor (nearest neighbour), i.e. (height*upsample) x (width*upsample).
struct TileRecord {
  std::string parent_name;
  int row = 0;
  int col = 0;
  int height = 0;
  int width = 0;
  int parent_height = 0;
  int parent_width = 0;
  int bands = 1;
  int upsample = 1;
  std::vector<std::uint8_t> pixels;

  int pixel_width() const { return width * upsample; }
  int pixel_height() const { return height * upsample; }
  /// Tile rectangle in the parent frame.
  BoundingBox rect() const {
    return {static_cast<double>(col), static_cast<double>(row), static_cast<double>(col + width),
            static_cast<double>(row + height)};
  }
  std::string cutout_name(std::string_view ext = "png") const;
  /// Pixel buffer as a standalone raster (gsd supplied by the caller).
  RasterImage as_image(double gsd) const;
};

/// Offsets along one axis: 0, stride, 2*stride, ..., the last clamped so
/// the final window abuts the edge.
std::vector<int> plan_axis(int extent, const TileSpec& spec);

/// Row-major list of tile offsets covering a width x height raster.
std::vector<TileOffset> plan_tiles(int image_width, int image_height, const TileSpec& spec);

/// `parent|row_col_h_w.ext`
std::string cutout_name(std::string_view parent, int row, int col, int height, int width,
                        std::string_view ext);

struct CutoutName {
  std::string parent;
  int row = 0;
  int col = 0;
  int height = 0;
  int width = 0;
  std::string ext;
  friend bool operator==(const CutoutName&, const CutoutName&) = default;
};

/// Inverse of cutout_name. Throws kFormat naming the offending field.
CutoutName parse_cutout_name(std::string_view name);

/// Throws kInvalidArgument when `parent` cannot round-trip through the schema.
void validate_parent_name(std::string_view parent);

/// Copy every planned cutout out of `image`. `upsample` enlarges each cutout
/// by nearest neighbour. Output order is the plan order regardless of `workers`.
std::vector<TileRecord> extract_tiles(const RasterImage& image, const TileSpec& spec,
                                      int upsample = 1, int workers = 1);

/// Ground-truth labels visible in a rectangle: those with more than half of
/// their area inside. Boxes are clipped to the rectangle and kept in the
/// input frame.
std::vector<GroundTruthLabel> labels_inside(const std::vector<GroundTruthLabel>& labels,
                                            const BoundingBox& rect);

}  // namespace chipstitch
