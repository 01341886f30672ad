#pragma once

// Windowed detection at one or more ground scales, merged into one
// global detection set.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "chipstitch/core.hpp"
#include "chipstitch/detectors.hpp"
#include "chipstitch/stitcher.hpp"
#include "chipstitch/tiler.hpp"

namespace chipstitch {

/// One ensemble member: a ground window presented to a detector at a fixed
/// pixel size, responsible for a subset of classes.
struct ScaleProfile {
  std::string name;
  double window_m = 124.8;
  int window_px = 416;
  std::vector<int> classes;
  std::shared_ptr<const Detector> detector;

  void validate() const;
};

struct EnsembleConfig {
  std::vector<ScaleProfile> profiles;
  double nms_iou = 0.5;

  /// Profiles valid, class subsets disjoint and covering `classes`.
  void validate(const ClassTable& classes) const;
};

/// Resolution at which a profile's tiles reach the detector (m/px).
double effective_gsd(const ScaleProfile& profile);

/// Area-averaging downsample by a real factor >= 1 (source pixels per output
/// pixel). Output is max(1, round(extent / factor)) per axis; the gsd is
/// multiplied by the factor.
RasterImage downsample_area(const RasterImage& image, double factor, std::string name);

/// Bring an image to the profile's effective gsd. Images already at that gsd
/// come back unchanged; finer images are area-averaged; coarser images are
/// rejected (no upsampling).
RasterImage resample_for_profile(const RasterImage& image, const ScaleProfile& profile);

/// How cutouts are cut and presented to the detector.
struct TilingConfig {
  TileSpec spec;
  int upsample = 1;  // nearest-neighbour enlargement of each cutout
};

/// Cut at window_px / 2 native pixels and enlarge each cutout 2x so the
/// detector still sees window_px, simulating doubled resolution.
TilingConfig simulate_2x(const RasterImage& image, int window_px, double overlap = 0.15);

struct StageTimings {
  double tile_seconds = 0.0;
  double detector_seconds = 0.0;  // summed per-tile detect time
  double detect_stage_seconds = 0.0;  // elapsed time of the detection stage
  double stitch_seconds = 0.0;
};

struct WindowedResult {
  GlobalDetectionSet detections;
  StageTimings timings;
  std::size_t tile_count = 0;
};

/// tile -> detect -> stitch on one raster. When `classes` is set, detections
/// of other classes are dropped before stitching.
WindowedResult run_windowed(const RasterImage& image, const TilingConfig& tiling,
                            const Detector& detector, double nms_iou, int workers = 1,
                            double native_per_pixel = 1.0, const std::string& profile = "",
                            const std::optional<std::vector<int>>& classes = std::nullopt);

/// Run every profile (resample, tile, detect, stitch), map coarse boxes back
/// to native pixels and merge with class-wise NMS. Provenance records the
/// originating profile.
WindowedResult run_ensemble(const RasterImage& image, const EnsembleConfig& cfg,
                            const TileSpec& tile_spec, int workers = 1);

/// Ratio of coarse-profile to fine-profile tile counts over a square region,
/// both profiles presenting spec.window pixels per tile.
double chip_count_ratio(double image_extent_m, double fine_window_m, double coarse_window_m,
                        const TileSpec& spec = {});

}  // namespace chipstitch
