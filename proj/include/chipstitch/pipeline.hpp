#pragma once

// End-to-end orchestration behind the command-line tool.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "chipstitch/augment.hpp"
#include "chipstitch/core.hpp"
#include "chipstitch/detectors.hpp"
#include "chipstitch/eval.hpp"
#include "chipstitch/multiscale.hpp"
#include "chipstitch/tiler.hpp"
#include "json.hpp"

namespace chipstitch {

namespace fs = std::filesystem;

/// Parsed JSON run configuration. Relative paths are resolved against the
/// config file's directory.
struct PipelineConfig {
  fs::path base_dir;
  fs::path image;
  std::optional<fs::path> ground_truth;
  ClassTable classes;
  TileSpec tiling;
  bool simulate_2x = false;
  nlohmann::json detector;                  // detector binding for the plain pipeline
  std::optional<nlohmann::json> ensemble;   // {"profiles": [...]}
  double nms_iou = 0.5;
  EvalConfig eval;
  int workers = 1;
  std::uint64_t seed = 0;
  fs::path output = "out";

  void validate() const;
};

PipelineConfig parse_config(const nlohmann::json& doc, const fs::path& base_dir);
PipelineConfig load_config(const fs::path& path);

/// Command-line overrides, applied on top of a loaded config.
struct ConfigOverrides {
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  std::optional<int> window_px;
  std::optional<double> overlap;
  std::optional<double> nms_iou;
  std::optional<fs::path> output;
};
void apply_overrides(PipelineConfig& cfg, const ConfigOverrides& overrides);

ClassTable parse_classes(const nlohmann::json& classes);

/// Build a detector from its JSON binding ({"type": "oracle" | "gridsim" | "external", ...}).
std::shared_ptr<const Detector> make_detector(const nlohmann::json& binding,
                                              const PipelineConfig& cfg,
                                              const std::vector<GroundTruthLabel>& gt,
                                              const std::string& tag = "main");

struct RunOutcome {
  GlobalDetectionSet detections;
  std::optional<EvalReport> report;
  StageTimings timings;
  double wall_seconds = 0.0;
  double area_km2 = 0.0;
  std::size_t tile_count = 0;
  Throughput rate;
  fs::path detections_path;
};

/// tile -> detect -> stitch (or the scale ensemble) -> optional evaluation.
/// Writes detections.csv and, when ground truth is configured, report.txt,
/// report.csv and pr_curves.dat into cfg.output.
RunOutcome cmd_run(const PipelineConfig& cfg);

/// cmd_run plus a throughput summary; returns the printed text.
std::string cmd_benchmark(const PipelineConfig& cfg, RunOutcome* outcome = nullptr);

/// Cut an image into cutouts + manifest. Returns the number of tiles.
std::size_t cmd_tile(const fs::path& image_path, const fs::path& out_dir, const TileSpec& spec,
                     int workers = 1);

/// Run the configured detector over a manifest's cutouts, writing a
/// tile-local detection file.
void cmd_detect(const PipelineConfig& cfg, const fs::path& manifest_path, const fs::path& out_path);

/// Globalize + NMS a tile-local detection file. Returns the global set.
GlobalDetectionSet cmd_stitch(const fs::path& manifest_path, const fs::path& detections_path,
                              const ClassTable& classes, double nms_iou, const fs::path& out_path);

/// Score a global detection file against a label file.
EvalReport cmd_evaluate(const fs::path& detections_path, const fs::path& gt_path,
                        const ClassTable& classes, const EvalConfig& cfg, const fs::path& out_dir);

// ----------------------------------------------------------------------------
// Synthetic scenes
// ----------------------------------------------------------------------------

struct SceneObjectSpec {
  std::string class_name;
  int count = 0;
  double size_m = 3.0;
  std::vector<int> intensity{230};  // one value per band, or one for all
  bool small_object = false;
};

struct SceneSpec {
  std::string name = "scene";
  double gsd_m = 0.3;
  int width_px = 1000;
  int height_px = 1000;
  int bands = 1;
  std::uint64_t seed = 0;
  int background_mean = 90;
  int background_spread = 20;
  double max_overlap = 0.0;  // largest IoU allowed between two objects
  std::vector<SceneObjectSpec> objects;

  ClassTable classes() const;
};

SceneSpec parse_scene_spec(const nlohmann::json& doc);

struct SyntheticScene {
  RasterImage image;
  std::vector<GroundTruthLabel> labels;
  ClassTable classes;
};

/// Render rectangles on a noisy background. Deterministic per seed.
SyntheticScene synthesize_scene(const SceneSpec& spec);

/// Writes <name>.png, <name>.json (sidecar) and <name>_gt.csv into out_dir.
SyntheticScene cmd_synth(const SceneSpec& spec, const fs::path& out_dir);

// ----------------------------------------------------------------------------
// Augmentation
// ----------------------------------------------------------------------------

struct AugmentJob {
  fs::path train_list;
  ClassTable classes;
  AugmentSpec spec;
  fs::path output = "augmented";
};

AugmentJob parse_augment_job(const nlohmann::json& doc, const fs::path& base_dir);

/// Rotate and HSV-jitter every chip of a training list. Returns the number
/// of chips written; also writes output/train.txt.
std::size_t cmd_augment(const AugmentJob& job);

}  // namespace chipstitch
