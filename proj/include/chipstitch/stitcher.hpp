#pragma once

// Tile-local -> global coordinate remapping and class-wise non-maximal
// suppression across tile seams.

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chipstitch/core.hpp"
#include "chipstitch/tiler.hpp"

namespace chipstitch {

/// Where a global detection came from.
struct Provenance {
  int tile_row = 0;
  int tile_col = 0;
  std::string profile;
  friend bool operator==(const Provenance&, const Provenance&) = default;
  friend auto operator<=>(const Provenance&, const Provenance&) = default;
};

struct GlobalDetectionSet {
  std::string parent_name;
  std::vector<Detection> detections;  // all Global frame
  std::vector<Provenance> provenance;  // parallel to detections
};

/// Translate a tile's detections by (+col, +row) into its parent's frame,
/// undoing any upsampling, and clamp to the parent bounds.
std::vector<Detection> globalize(const std::vector<Detection>& dets, const TileRecord& tile);

/// Indices of the detections that survive class-wise greedy NMS, in the
/// canonical output order. `tie_break` (optional, parallel to dets) orders
/// detections whose class, confidence and box are all equal.
std::vector<std::size_t> nms_keep(std::span<const Detection> dets, double nms_iou,
                                  std::span<const Provenance> tie_break = {});

/// Class-wise greedy NMS. A same-class box is suppressed when its IoU with a
/// kept box is strictly greater than `nms_iou`. Output in detection_less order.
std::vector<Detection> global_nms(const std::vector<Detection>& dets, double nms_iou);

/// Same, carrying provenance along.
GlobalDetectionSet global_nms(const GlobalDetectionSet& set, double nms_iou);

struct TileDetections {
  TileRecord tile;  // pixels are not needed here and may be empty
  std::vector<Detection> detections;
};

/// Globalize every tile and merge with global_nms. All tiles must share a
/// parent. The result does not depend on the order of `per_tile`.
GlobalDetectionSet stitch(std::span<const TileDetections> per_tile, double nms_iou,
                          const std::string& profile = "");

}  // namespace chipstitch
