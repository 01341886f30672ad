#pragma once

// Training-data preparation: chip cutting, rotation, HSV jitter,
// resolution degradation and point-label to box conversion.

#include <cstdint>
#include <vector>

#include "chipstitch/core.hpp"
#include "chipstitch/tiler.hpp"

namespace chipstitch {

struct LabeledChip {
  RasterImage image;
  std::vector<GroundTruthLabel> labels;  // chip-local pixels
};

/// Multiplicative range for one HSV channel.
struct ScaleRange {
  double lo = 1.0;
  double hi = 1.0;
};

struct AugmentSpec {
  std::vector<double> rotation_angles{0.0};  // degrees, counter-clockwise on screen
  ScaleRange hue;
  ScaleRange saturation;
  ScaleRange value;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Rotate a square chip about its centre. Pixels are resampled bilinearly
/// with `fill` outside the source; each label becomes the axis-aligned hull
/// of its rotated corners, clipped to the chip. Labels clipped to zero area
/// are dropped.
LabeledChip rotate_chip(const LabeledChip& chip, double angle_deg, std::uint8_t fill = 0);

/// Scale H, S and V by factors drawn from the spec's ranges (one draw per
/// call, seeded by spec.seed and `stream`). Hue wraps; S and V clamp to [0,1].
RasterImage hsv_jitter(const RasterImage& image, const AugmentSpec& spec, std::uint64_t stream = 0);

/// Gaussian blur (replicated edges) then 2x2 area decimation. Dimensions are
/// floor-halved and the gsd doubles.
RasterImage degrade_resolution(const RasterImage& image, double sigma_px = 1.0);

/// Square box of side object_m / gsd pixels centred on (cx, cy). Not clamped.
BoundingBox centroid_to_box(double cx, double cy, double object_m, double gsd);

struct ChipCutOptions {
  double overlap = 0.15;
  double empty_fraction = 0.0;  // share of label-free chips kept
  std::uint64_t seed = 0;
};

/// Cut an image into round(chip_window_m / gsd)-pixel chips. A label goes to
/// every chip holding more than half of its area, clipped to that chip.
std::vector<LabeledChip> cut_training_chips(const RasterImage& image,
                                            const std::vector<GroundTruthLabel>& labels,
                                            double chip_window_m, const ChipCutOptions& options = {});

/// Pixel side of the chips cut_training_chips would produce.
int chip_window_px(double chip_window_m, double gsd);

}  // namespace chipstitch
