#pragma once

// Per-tile detector contract and the built-in implementations.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "chipstitch/core.hpp"
#include "chipstitch/tiler.hpp"

namespace chipstitch {

/// What a detector knows about the tile it is looking at.
struct TileContext {
  std::size_t tile_id = 0;
  /// Native (ground-truth frame) pixels per pixel of the frame the tile was
  /// cut from. 1 for the plain pipeline, > 1 for coarse scale profiles.
  double native_per_pixel = 1.0;
};

struct BatchResult {
  std::vector<std::vector<Detection>> per_tile;  // slot i belongs to tiles[i]
  double detector_seconds = 0.0;                 // summed per-tile detect time
};

/// A detector maps tiles to tile-local detections. Implementations must be
/// callable from several threads at once.
class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::string identifier() const = 0;
  virtual BatchResult detect_all(std::span<const TileRecord> tiles, double native_per_pixel,
                                 int workers) const = 0;
};

/// Detector that handles one tile at a time; batches fan out over workers.
class TileDetector : public Detector {
 public:
  virtual std::vector<Detection> detect(const TileRecord& tile, const TileContext& ctx) const = 0;
  BatchResult detect_all(std::span<const TileRecord> tiles, double native_per_pixel,
                         int workers) const override;
};

// ----------------------------------------------------------------------------
// Ground-truth oracle
// ----------------------------------------------------------------------------

struct UniformRange {
  double lo = 0.0;
  double hi = 0.0;
};

/// Confidence distributions for true and false positives.
struct ConfidenceLaw {
  UniformRange true_positive{0.7, 1.0};
  UniformRange false_positive{0.05, 0.7};
};

struct OracleNoiseModel {
  double dropout_prob = 0.0;  // per-object miss rate
  double fp_rate = 0.0;       // expected false positives per tile (Poisson mean)
  double jitter_px = 0.0;     // max uniform perturbation of each box edge
  ConfidenceLaw confidence;
  std::uint64_t seed = 0;
  /// Size of false positives when there are no labels to borrow one from.
  double fallback_fp_size_px = 10.0;

  /// No misses, no false positives, no jitter, every detection at confidence 1.
  static OracleNoiseModel noiseless();
  void validate() const;
};

/// Tile-local detections derived from global ground truth. Deterministic for
/// a fixed (seed, tile position).
std::vector<Detection> oracle_detect(const TileRecord& tile, const std::vector<GroundTruthLabel>& gt,
                                     const OracleNoiseModel& noise, const TileContext& ctx = {});

class OracleDetector : public TileDetector {
 public:
  OracleDetector(std::vector<GroundTruthLabel> gt, OracleNoiseModel noise);
  std::string identifier() const override { return "oracle"; }
  std::vector<Detection> detect(const TileRecord& tile, const TileContext& ctx) const override;

 private:
  std::vector<GroundTruthLabel> gt_;
  OracleNoiseModel noise_;
};

// ----------------------------------------------------------------------------
// Prediction-grid simulator
// ----------------------------------------------------------------------------

struct GridSimConfig {
  int downsample = 32;
  int boxes_per_cell = 5;
  void validate() const;
};

/// Ground truth filtered through a single-shot prediction grid: each cell
/// holds at most boxes_per_cell objects (largest first).
std::vector<Detection> gridsim_detect(const TileRecord& tile, const std::vector<GroundTruthLabel>& gt,
                                      const GridSimConfig& cfg, const TileContext& ctx = {});

class GridSimDetector : public TileDetector {
 public:
  GridSimDetector(std::vector<GroundTruthLabel> gt, GridSimConfig cfg);
  std::string identifier() const override { return "gridsim"; }
  std::vector<Detection> detect(const TileRecord& tile, const TileContext& ctx) const override;

 private:
  std::vector<GroundTruthLabel> gt_;
  GridSimConfig cfg_;
};

/// Size of a single-shot detector's final layer: boxes * (classes + 5).
int nf_layer_size(int n_boxes, int n_classes);

struct GridDims {
  int width = 0;
  int height = 0;
  friend bool operator==(const GridDims&, const GridDims&) = default;
};

/// Prediction grid for a square input: ceil(window / downsample) per side.
GridDims grid_dims(int window, int downsample);

// ----------------------------------------------------------------------------
// External process adapter
// ----------------------------------------------------------------------------

struct ExternalDetections {
  std::vector<std::string> cutout_names;         // manifest order
  std::vector<std::vector<Detection>> per_tile;  // aligned with cutout_names
};

/// Run `command_template` once over a manifest. The template must contain
/// `{input}` (manifest path) and `{output}` (detection file to write); an
/// optional `{workdir}` is also substituted. Rows are bound to tiles by
/// cutout name.
ExternalDetections external_detect(const std::filesystem::path& manifest_path,
                                   const std::filesystem::path& workdir,
                                   const std::string& command_template, const ClassTable& classes);

/// Writes each batch of tiles and a manifest into `workdir`, then defers to
/// external_detect. One process invocation per batch.
class ExternalDetector : public Detector {
 public:
  ExternalDetector(std::string command_template, std::filesystem::path workdir, ClassTable classes);
  std::string identifier() const override { return "external"; }
  BatchResult detect_all(std::span<const TileRecord> tiles, double native_per_pixel,
                         int workers) const override;

 private:
  std::string command_template_;
  std::filesystem::path workdir_;
  ClassTable classes_;
};

}  // namespace chipstitch
