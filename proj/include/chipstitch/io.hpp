#pragma once

// File formats: PNG rasters with a JSON gsd sidecar, the tile manifest,
// detection files, label files and training lists.

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "chipstitch/core.hpp"
#include "chipstitch/tiler.hpp"

namespace chipstitch::io {

namespace fs = std::filesystem;

/// Shortest decimal text that parses back to the same double.
std::string format_number(double value);
/// Locale-independent decimal parse; throws kFormat with `what` in the message.
double parse_number(std::string_view text, std::string_view what);

// ----------------------------------------------------------------------------
// Rasters
// ----------------------------------------------------------------------------

/// `scene.png` -> `scene.json`
fs::path sidecar_path(const fs::path& image_path);

/// 8-bit gray or RGB PNG. gsd and name come from the caller.
RasterImage read_png(const fs::path& path);
void write_png(const fs::path& path, const RasterImage& image);

/// PNG plus mandatory sidecar {"name": ..., "gsd_m": ...}.
RasterImage load_image(const fs::path& image_path);
void save_image(const fs::path& image_path, const RasterImage& image);

// ----------------------------------------------------------------------------
// Manifest (tab-separated: cutout_name, parent_name, row, col, h, w)
// ----------------------------------------------------------------------------

struct ManifestEntry {
  std::string cutout_name;
  std::string parent_name;
  int row = 0;
  int col = 0;
  int height = 0;
  int width = 0;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

ManifestEntry manifest_entry(const TileRecord& tile, std::string_view ext = "png");
void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const fs::path& path);

/// Writes every tile as `<cutout_name>` into `dir` plus `dir/manifest.tsv`.
/// Returns the manifest path.
fs::path write_tiles(const fs::path& dir, std::span<const TileRecord> tiles);

// ----------------------------------------------------------------------------
// Detection files
// ----------------------------------------------------------------------------

/// One row of a tile-local detection file.
struct TileDetectionRow {
  std::string cutout_name;
  Detection detection;
  std::size_t line = 0;
};

/// cutout_name, class_name, xmin, ymin, xmax, ymax, confidence
std::vector<TileDetectionRow> read_tile_detections(const fs::path& path, const ClassTable& classes);
void write_tile_detections(const fs::path& path, const std::vector<std::string>& cutout_names,
                           const std::vector<std::vector<Detection>>& per_tile,
                           const ClassTable& classes);

/// parent_name, class_name, xmin, ymin, xmax, ymax, confidence
struct GlobalDetectionRow {
  std::string parent_name;
  Detection detection;
};
std::vector<GlobalDetectionRow> read_global_detections(const fs::path& path,
                                                       const ClassTable& classes);
void write_global_detections(const fs::path& path, std::string_view parent_name,
                             const std::vector<Detection>& detections, const ClassTable& classes);
std::string format_global_detections(std::string_view parent_name,
                                     const std::vector<Detection>& detections,
                                     const ClassTable& classes);

// ----------------------------------------------------------------------------
// Labels: class_name, xmin, ymin, xmax, ymax
// ----------------------------------------------------------------------------

std::vector<GroundTruthLabel> read_labels(const fs::path& path, const ClassTable& classes);
void write_labels(const fs::path& path, const std::vector<GroundTruthLabel>& labels,
                  const ClassTable& classes);

/// Training list: image path <TAB> label path, one chip per line.
using TrainingListEntry = std::pair<fs::path, fs::path>;
std::vector<TrainingListEntry> read_training_list(const fs::path& path);
void write_training_list(const fs::path& path, const std::vector<TrainingListEntry>& entries);

/// Writes `text` to `path`, creating parent directories.
void write_text(const fs::path& path, std::string_view text);
std::string read_text(const fs::path& path);

}  // namespace chipstitch::io
