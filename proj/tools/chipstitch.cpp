// chipstitch command-line tool.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "chipstitch/io.hpp"
#include "chipstitch/pipeline.hpp"

namespace {

using namespace chipstitch;
using json = nlohmann::json;

int exit_code(ErrorFamily family) {
  switch (family) {
    case ErrorFamily::kInvalidArgument: return 3;
    case ErrorFamily::kIo: return 4;
    case ErrorFamily::kFormat: return 5;
    case ErrorFamily::kConfig: return 6;
    case ErrorFamily::kProcess: return 7;
    case ErrorFamily::kFrame: return 8;
  }
  return 1;
}

json read_json(const fs::path& path) {
  try {
    return json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorFamily::kConfig, path.string() + ": " + e.what());
  }
}

struct Common {
  std::string config;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  std::optional<int> window_px;
  std::optional<double> overlap;
  std::optional<double> nms_iou;
  std::string out;

  ConfigOverrides overrides() const {
    ConfigOverrides o{workers, seed, window_px, overlap, nms_iou, std::nullopt};
    if (!out.empty()) o.output = out;
    return o;
  }
  PipelineConfig load() const {
    PipelineConfig cfg = load_config(config);
    apply_overrides(cfg, overrides());
    return cfg;
  }
};

void add_tuning(CLI::App* cmd, Common& c) {
  cmd->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--window-px", c.window_px, "Tile window in pixels");
  cmd->add_option("--overlap", c.overlap, "Tile overlap fraction");
  cmd->add_option("--nms-iou", c.nms_iou, "NMS IoU threshold");
}

void print_run(const RunOutcome& run) {
  std::cout << "tiles " << run.tile_count << "\n"
            << "detections " << run.detections.detections.size() << " -> "
            << run.detections_path.string() << "\n";
  if (run.report) std::cout << "mAP " << io::format_number(run.report->map) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Windowed object detection over large overhead images"};
  app.require_subcommand(1);
  Common c;

  auto* tile = app.add_subcommand("tile", "Cut an image into overlapping cutouts");
  std::string image;
  tile->add_option("--image", image, "PNG with gsd sidecar")->required();
  tile->add_option("--out", c.out, "Output directory")->required();
  tile->add_option("--config", c.config, "Run config (tiling section)");
  add_tuning(tile, c);

  auto* detect = app.add_subcommand("detect", "Run the configured detector over cutouts");
  std::string manifest;
  detect->add_option("--config", c.config, "Run config")->required();
  detect->add_option("--manifest", manifest, "Tile manifest")->required();
  detect->add_option("--out", c.out, "Tile-local detection file")->required();
  add_tuning(detect, c);

  auto* stitch_cmd = app.add_subcommand("stitch", "Globalize tile detections and merge with NMS");
  std::string detections;
  stitch_cmd->add_option("--config", c.config, "Run config (classes, nms_iou)")->required();
  stitch_cmd->add_option("--manifest", manifest, "Tile manifest")->required();
  stitch_cmd->add_option("--detections", detections, "Tile-local detection file")->required();
  stitch_cmd->add_option("--out", c.out, "Global detection file")->required();
  add_tuning(stitch_cmd, c);

  auto* run = app.add_subcommand("run", "tile, detect, stitch and evaluate");
  run->add_option("--config", c.config, "Run config")->required();
  run->add_option("--out", c.out, "Output directory");
  add_tuning(run, c);

  auto* bench = app.add_subcommand("benchmark", "run with a throughput report");
  bench->add_option("--config", c.config, "Run config")->required();
  bench->add_option("--out", c.out, "Output directory");
  add_tuning(bench, c);

  auto* synth = app.add_subcommand("synth", "Render a synthetic scene with ground truth");
  synth->add_option("--config", c.config, "Scene spec")->required();
  synth->add_option("--out", c.out, "Output directory")->required();
  synth->add_option("--seed", c.seed, "Override the scene seed");

  auto* augment = app.add_subcommand("augment", "Rotate and jitter training chips");
  augment->add_option("--config", c.config, "Augmentation spec")->required();
  augment->add_option("--out", c.out, "Output directory");
  augment->add_option("--seed", c.seed, "Override the jitter seed");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a global detection file");
  std::string gt;
  evaluate_cmd->add_option("--config", c.config, "Run config (classes, evaluation)")->required();
  evaluate_cmd->add_option("--detections", detections, "Global detection file")->required();
  evaluate_cmd->add_option("--gt", gt, "Ground-truth label file")->required();
  evaluate_cmd->add_option("--out", c.out, "Report directory")->required();
  add_tuning(evaluate_cmd, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*tile) {
      TileSpec spec;
      int workers = 1;
      if (!c.config.empty()) {
        const auto cfg = c.load();
        spec = cfg.tiling;
        workers = cfg.workers;
      }
      if (c.window_px) spec.window = *c.window_px;
      if (c.overlap) spec.overlap = *c.overlap;
      if (c.workers) workers = *c.workers;
      std::cout << cmd_tile(image, c.out, spec, workers) << "\n";
    } else if (*detect) {
      auto cfg = load_config(c.config);
      auto o = c.overrides();
      o.output.reset();
      apply_overrides(cfg, o);
      cmd_detect(cfg, manifest, c.out);
    } else if (*stitch_cmd) {
      auto cfg = load_config(c.config);
      auto o = c.overrides();
      o.output.reset();
      apply_overrides(cfg, o);
      const auto set = cmd_stitch(manifest, detections, cfg.classes, cfg.nms_iou, c.out);
      std::cout << set.detections.size() << "\n";
    } else if (*run) {
      print_run(cmd_run(c.load()));
    } else if (*bench) {
      std::cout << cmd_benchmark(c.load());
    } else if (*synth) {
      const json doc = read_json(c.config);
      SceneSpec spec = parse_scene_spec(doc);
      if (c.seed) spec.seed = *c.seed;
      const auto scene = cmd_synth(spec, c.out);
      std::cout << scene.labels.size() << "\n";
    } else if (*augment) {
      const json doc = read_json(c.config);
      AugmentJob job = parse_augment_job(doc, fs::path(c.config).parent_path());
      if (!c.out.empty()) job.output = c.out;
      if (c.seed) job.spec.seed = *c.seed;
      std::cout << cmd_augment(job) << "\n";
    } else if (*evaluate_cmd) {
      auto cfg = load_config(c.config);
      auto o = c.overrides();
      o.output.reset();
      apply_overrides(cfg, o);
      const auto report = cmd_evaluate(detections, gt, cfg.classes, cfg.eval, c.out);
      std::cout << format_report_text(report);
    }
  } catch (const Error& e) {
    std::cerr << "error[" << error_family_name(e.family()) << "]: " << e.what() << "\n";
    return exit_code(e.family());
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
