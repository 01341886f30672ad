#include "chipstitch/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <unordered_map>

#include "chipstitch/io.hpp"
#include "chipstitch/stitcher.hpp"

namespace chipstitch {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

[[noreturn]] void config_error(const std::string& message) {
  throw Error(ErrorFamily::kConfig, message);
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.is_object()) config_error(where + " must be an object");
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    config_error(where + "." + key + " has the wrong type");
  }
}

UniformRange parse_range(const json& obj, const char* key, UniformRange fallback,
                         const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number() || !(*it)[1].is_number()) {
    config_error(where + "." + key + " must be a [lo, hi] pair");
  }
  return {(*it)[0].get<double>(), (*it)[1].get<double>()};
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return base / p;
}

EvalConfig parse_eval(const json& doc, double nms_iou) {
  EvalConfig cfg;
  cfg.nms_iou = nms_iou;
  const auto it = doc.find("evaluation");
  if (it == doc.end() || it->is_null()) return cfg;
  const json& ev = *it;
  cfg.iou_default = get_or(ev, "iou_default", cfg.iou_default, "evaluation");
  cfg.iou_small_object = get_or(ev, "iou_small_object", cfg.iou_small_object, "evaluation");
  if (const auto t = ev.find("thresholds"); t != ev.end() && !t->is_null()) {
    if (t->is_array()) {
      cfg.thresholds.clear();
      for (const auto& v : *t) {
        if (!v.is_number()) config_error("evaluation.thresholds must hold numbers");
        cfg.thresholds.push_back(v.get<double>());
      }
    } else {
      const double lo = get_or(*t, "min", 0.05, "evaluation.thresholds");
      const double hi = get_or(*t, "max", 0.95, "evaluation.thresholds");
      const int count = get_or(*t, "count", 30, "evaluation.thresholds");
      if (count < 1) config_error("evaluation.thresholds.count must be >= 1");
      cfg.thresholds = EvalConfig::linspace(lo, hi, count);
    }
  }
  return cfg;
}

std::vector<GroundTruthLabel> load_ground_truth(const PipelineConfig& cfg) {
  if (!cfg.ground_truth) return {};
  return io::read_labels(*cfg.ground_truth, cfg.classes);
}

// Detector time for throughput: summed per-tile time, bounded by the
// elapsed time of the detection stage so parallel runs keep wall >= detector.
double detector_time(const StageTimings& t) {
  double det = t.detector_seconds;
  if (t.detect_stage_seconds > 0.0) det = std::min(det, t.detect_stage_seconds);
  return std::max(det, 1e-9);
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

// ----------------------------------------------------------------------------
// Configuration
// ----------------------------------------------------------------------------

void PipelineConfig::validate() const {
  if (workers < 1) config_error("workers must be >= 1");
  if (image.empty()) config_error("config needs an image path");
  if (!fs::exists(image)) throw Error(ErrorFamily::kIo, "image not found: " + image.string());
  if (ground_truth && !fs::exists(*ground_truth)) {
    throw Error(ErrorFamily::kIo, "ground truth not found: " + ground_truth->string());
  }
  if (classes.empty()) config_error("config declares no classes");
  tiling.validate();
  if (!(nms_iou > 0.0 && nms_iou <= 1.0)) config_error("nms_iou must lie in (0, 1]");
  eval.validate();
  if (!ensemble && !detector.is_object()) config_error("config needs a detector binding");
}

ClassTable parse_classes(const json& classes) {
  if (!classes.is_array() || classes.empty()) config_error("classes must be a non-empty array");
  std::vector<ClassInfo> out;
  for (const auto& c : classes) {
    ClassInfo info;
    info.id = static_cast<int>(out.size());
    if (c.is_string()) {
      info.name = c.get<std::string>();
    } else {
      info.name = get_or<std::string>(c, "name", "", "classes[]");
      info.small_object = get_or(c, "small_object", false, "classes[]");
    }
    if (info.name.empty()) config_error("every class needs a name");
    out.push_back(std::move(info));
  }
  try {
    return ClassTable(std::move(out));
  } catch (const Error& e) {
    config_error(e.what());
  }
}

PipelineConfig parse_config(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) config_error("config root must be an object");
  PipelineConfig cfg;
  cfg.base_dir = base_dir;
  cfg.image = resolve(base_dir, get_or<std::string>(doc, "image", "", "config"));
  if (const auto gt = get_or<std::string>(doc, "ground_truth", "", "config"); !gt.empty()) {
    cfg.ground_truth = resolve(base_dir, gt);
  }
  if (!doc.contains("classes")) config_error("config needs a classes list");
  cfg.classes = parse_classes(doc.at("classes"));

  if (const auto t = doc.find("tiling"); t != doc.end() && !t->is_null()) {
    cfg.tiling.window = get_or(*t, "window_px", cfg.tiling.window, "tiling");
    cfg.tiling.overlap = get_or(*t, "overlap", cfg.tiling.overlap, "tiling");
    cfg.simulate_2x = get_or(*t, "simulate_2x", false, "tiling");
  }
  if (const auto d = doc.find("detector"); d != doc.end() && !d->is_null()) cfg.detector = *d;
  if (const auto e = doc.find("ensemble"); e != doc.end() && !e->is_null()) cfg.ensemble = *e;
  cfg.nms_iou = get_or(doc, "nms_iou", cfg.nms_iou, "config");
  cfg.eval = parse_eval(doc, cfg.nms_iou);
  cfg.workers = get_or(doc, "workers", cfg.workers, "config");
  cfg.seed = get_or<std::uint64_t>(doc, "seed", cfg.seed, "config");
  cfg.output = resolve(base_dir, get_or<std::string>(doc, "output", "out", "config"));
  try {
    cfg.tiling.validate();
  } catch (const Error& e) {
    config_error(e.what());
  }
  return cfg;
}

PipelineConfig load_config(const fs::path& path) {
  const std::string text = io::read_text(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    config_error(path.string() + ": " + e.what());
  }
  return parse_config(doc, path.parent_path());
}

void apply_overrides(PipelineConfig& cfg, const ConfigOverrides& o) {
  if (o.workers) cfg.workers = *o.workers;
  if (o.seed) cfg.seed = *o.seed;
  if (o.window_px) cfg.tiling.window = *o.window_px;
  if (o.overlap) cfg.tiling.overlap = *o.overlap;
  if (o.nms_iou) {
    cfg.nms_iou = *o.nms_iou;
    cfg.eval.nms_iou = *o.nms_iou;
  }
  if (o.output) cfg.output = *o.output;
}

std::shared_ptr<const Detector> make_detector(const json& binding, const PipelineConfig& cfg,
                                              const std::vector<GroundTruthLabel>& gt,
                                              const std::string& tag) {
  const std::string where = "detector(" + tag + ")";
  const auto type = get_or<std::string>(binding, "type", "", where);
  if (type == "oracle") {
    if (!cfg.ground_truth) config_error("the oracle detector needs ground_truth");
    OracleNoiseModel noise = OracleNoiseModel::noiseless();
    if (const auto n = binding.find("noise"); n != binding.end() && !n->is_null()) {
      const std::string nw = where + ".noise";
      noise = OracleNoiseModel{};
      noise.dropout_prob = get_or(*n, "dropout_prob", 0.0, nw);
      noise.fp_rate = get_or(*n, "fp_rate", 0.0, nw);
      noise.jitter_px = get_or(*n, "jitter_px", 0.0, nw);
      noise.confidence.true_positive = parse_range(*n, "tp_confidence", {0.7, 1.0}, nw);
      noise.confidence.false_positive = parse_range(*n, "fp_confidence", {0.05, 0.7}, nw);
      noise.seed = get_or<std::uint64_t>(*n, "seed", 0, nw);
    }
    noise.seed += cfg.seed;
    try {
      noise.validate();
    } catch (const Error& e) {
      config_error(where + ": " + e.what());
    }
    return std::make_shared<OracleDetector>(gt, noise);
  }
  if (type == "gridsim") {
    if (!cfg.ground_truth) config_error("the gridsim detector needs ground_truth");
    GridSimConfig g;
    g.downsample = get_or(binding, "downsample", g.downsample, where);
    g.boxes_per_cell = get_or(binding, "boxes_per_cell", g.boxes_per_cell, where);
    try {
      g.validate();
    } catch (const Error& e) {
      config_error(where + ": " + e.what());
    }
    return std::make_shared<GridSimDetector>(gt, g);
  }
  if (type == "external") {
    const auto command = get_or<std::string>(binding, "command", "", where);
    if (command.empty()) config_error(where + " needs a command");
    const auto workdir = get_or<std::string>(binding, "workdir", "", where);
    const fs::path dir =
        workdir.empty() ? cfg.output / ("external_" + tag) : resolve(cfg.base_dir, workdir);
    return std::make_shared<ExternalDetector>(command, dir, cfg.classes);
  }
  config_error(where + ": unknown detector type '" + type + "'");
}

// ----------------------------------------------------------------------------
// Commands
// ----------------------------------------------------------------------------

RunOutcome cmd_run(const PipelineConfig& cfg) {
  cfg.validate();
  const auto start = Clock::now();
  const RasterImage image = io::load_image(cfg.image);
  const auto gt = load_ground_truth(cfg);

  WindowedResult result;
  if (cfg.ensemble) {
    const json& ens = *cfg.ensemble;
    EnsembleConfig ec;
    ec.nms_iou = get_or(ens, "nms_iou", cfg.nms_iou, "ensemble");
    if (!ens.contains("profiles") || !ens.at("profiles").is_array()) {
      config_error("ensemble needs a profiles array");
    }
    for (const auto& p : ens.at("profiles")) {
      ScaleProfile profile;
      profile.name = get_or<std::string>(p, "name", "", "ensemble.profiles[]");
      profile.window_m = get_or(p, "window_m", profile.window_m, "ensemble.profiles[]");
      profile.window_px = get_or(p, "window_px", profile.window_px, "ensemble.profiles[]");
      for (const auto& c : get_or(p, "classes", json::array(), "ensemble.profiles[]")) {
        if (!c.is_string()) config_error("profile classes must be names");
        const auto id = cfg.classes.find(c.get<std::string>());
        if (!id) config_error("profile '" + profile.name + "' routes unknown class '" +
                              c.get<std::string>() + "'");
        profile.classes.push_back(*id);
      }
      const json binding = p.contains("detector") ? p.at("detector") : cfg.detector;
      if (!binding.is_object()) config_error("profile '" + profile.name + "' has no detector");
      profile.detector = make_detector(binding, cfg, gt, profile.name);
      ec.profiles.push_back(std::move(profile));
    }
    ec.validate(cfg.classes);
    result = run_ensemble(image, ec, cfg.tiling, cfg.workers);
  } else {
    const auto detector = make_detector(cfg.detector, cfg, gt);
    const TilingConfig tiling = cfg.simulate_2x
                                    ? simulate_2x(image, cfg.tiling.window, cfg.tiling.overlap)
                                    : TilingConfig{cfg.tiling, 1};
    result = run_windowed(image, tiling, *detector, cfg.nms_iou, cfg.workers);
  }

  RunOutcome out;
  out.detections = std::move(result.detections);
  out.timings = result.timings;
  out.tile_count = result.tile_count;
  out.area_km2 = image.area_km2();
  out.detections_path = cfg.output / "detections.csv";
  io::write_global_detections(out.detections_path, image.name, out.detections.detections,
                              cfg.classes);
  out.wall_seconds = seconds_since(start);
  const double det = detector_time(out.timings);
  out.rate = throughput(out.area_km2, det, std::max(out.wall_seconds, det));

  if (cfg.ground_truth) {
    const EvalImage eval_image{out.detections.detections, gt};
    EvalReport report = evaluate(std::span<const EvalImage>(&eval_image, 1), cfg.classes, cfg.eval);
    report.area_km2 = out.area_km2;
    report.throughput_km2_per_s = out.rate.rate_km2_per_s;
    report.overhead_factor = out.rate.overhead_factor;
    io::write_text(cfg.output / "report.txt", format_report_text(report));
    io::write_text(cfg.output / "report.csv", format_report_csv(report));
    io::write_text(cfg.output / "pr_curves.dat", format_pr_columns(report));
    out.report = std::move(report);
  }
  return out;
}

std::string cmd_benchmark(const PipelineConfig& cfg, RunOutcome* outcome) {
  RunOutcome run = cmd_run(cfg);
  std::string text;
  text += "area_km2 " + io::format_number(run.area_km2) + "\n";
  text += "tiles " + std::to_string(run.tile_count) + "\n";
  text += "workers " + std::to_string(cfg.workers) + "\n";
  text += "tile_seconds " + fmt("%.6f", run.timings.tile_seconds) + "\n";
  text += "detector_seconds " + fmt("%.6f", detector_time(run.timings)) + "\n";
  text += "stitch_seconds " + fmt("%.6f", run.timings.stitch_seconds) + "\n";
  text += "wall_seconds " + fmt("%.6f", run.wall_seconds) + "\n";
  text += "rate_km2_per_s " + fmt("%.6g", run.rate.rate_km2_per_s) + "\n";
  text += "overhead_factor " + fmt("%.6f", run.rate.overhead_factor) + "\n";
  if (run.report) text += "mAP " + fmt("%.6f", run.report->map) + "\n";
  io::write_text(cfg.output / "benchmark.txt", text);
  if (outcome) *outcome = std::move(run);
  return text;
}

std::size_t cmd_tile(const fs::path& image_path, const fs::path& out_dir, const TileSpec& spec,
                     int workers) {
  const RasterImage image = io::load_image(image_path);
  const auto tiles = extract_tiles(image, spec, 1, workers);
  io::write_tiles(out_dir, tiles);
  return tiles.size();
}

namespace {

struct ManifestTiles {
  std::vector<TileRecord> tiles;
  std::vector<std::string> names;
};

ManifestTiles tiles_from_manifest(const fs::path& manifest_path, bool load_pixels) {
  const auto entries = io::read_manifest(manifest_path);
  if (entries.empty()) {
    throw Error(ErrorFamily::kFormat, manifest_path.string() + ": manifest lists no tiles");
  }
  int parent_h = 0, parent_w = 0;
  for (const auto& e : entries) {
    if (e.parent_name != entries.front().parent_name) {
      throw Error(ErrorFamily::kFormat,
                  manifest_path.string() + ": manifest mixes several parent images");
    }
    parent_h = std::max(parent_h, e.row + e.height);
    parent_w = std::max(parent_w, e.col + e.width);
  }
  ManifestTiles out;
  const fs::path dir = manifest_path.parent_path();
  for (const auto& e : entries) {
    TileRecord t;
    t.parent_name = e.parent_name;
    t.row = e.row;
    t.col = e.col;
    t.height = e.height;
    t.width = e.width;
    t.parent_height = parent_h;
    t.parent_width = parent_w;
    if (load_pixels) {
      const RasterImage px = io::read_png(dir / e.cutout_name);
      if (px.width != e.width || px.height != e.height) {
        throw Error(ErrorFamily::kFormat, e.cutout_name + ": pixel size disagrees with manifest");
      }
      t.bands = px.bands;
      t.pixels = px.pixels;
    }
    out.names.push_back(e.cutout_name);
    out.tiles.push_back(std::move(t));
  }
  return out;
}

}  // namespace

void cmd_detect(const PipelineConfig& cfg, const fs::path& manifest_path, const fs::path& out_path) {
  const auto gt = load_ground_truth(cfg);
  const auto detector = make_detector(cfg.detector, cfg, gt);
  const auto mt = tiles_from_manifest(manifest_path, true);
  const auto batch = detector->detect_all(mt.tiles, 1.0, cfg.workers);
  io::write_tile_detections(out_path, mt.names, batch.per_tile, cfg.classes);
}

GlobalDetectionSet cmd_stitch(const fs::path& manifest_path, const fs::path& detections_path,
                              const ClassTable& classes, double nms_iou, const fs::path& out_path) {
  const auto mt = tiles_from_manifest(manifest_path, false);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < mt.names.size(); ++i) index.emplace(mt.names[i], i);

  std::vector<TileDetections> per_tile(mt.tiles.size());
  for (std::size_t i = 0; i < mt.tiles.size(); ++i) per_tile[i].tile = mt.tiles[i];
  for (const auto& row : io::read_tile_detections(detections_path, classes)) {
    const auto it = index.find(row.cutout_name);
    if (it == index.end()) {
      throw Error(ErrorFamily::kFormat, detections_path.string() + ":" + std::to_string(row.line) +
                                            ": cutout '" + row.cutout_name +
                                            "' is not in the manifest");
    }
    Detection d = row.detection;
    d.frame = TileLocal{it->second};
    per_tile[it->second].detections.push_back(d);
  }
  GlobalDetectionSet set = stitch(per_tile, nms_iou);
  io::write_global_detections(out_path, set.parent_name, set.detections, classes);
  return set;
}

EvalReport cmd_evaluate(const fs::path& detections_path, const fs::path& gt_path,
                        const ClassTable& classes, const EvalConfig& cfg, const fs::path& out_dir) {
  EvalImage image;
  for (const auto& row : io::read_global_detections(detections_path, classes)) {
    image.detections.push_back(row.detection);
  }
  image.ground_truth = io::read_labels(gt_path, classes);
  EvalReport report = evaluate(std::span<const EvalImage>(&image, 1), classes, cfg);
  io::write_text(out_dir / "report.txt", format_report_text(report));
  io::write_text(out_dir / "report.csv", format_report_csv(report));
  io::write_text(out_dir / "pr_curves.dat", format_pr_columns(report));
  return report;
}

// ----------------------------------------------------------------------------
// Synthetic scenes
// ----------------------------------------------------------------------------

ClassTable SceneSpec::classes() const {
  std::vector<ClassInfo> out;
  for (const auto& o : objects) {
    const bool known = std::any_of(out.begin(), out.end(),
                                   [&](const ClassInfo& c) { return c.name == o.class_name; });
    if (!known) out.push_back({static_cast<int>(out.size()), o.class_name, o.small_object});
  }
  return ClassTable(std::move(out));
}

SceneSpec parse_scene_spec(const json& doc) {
  if (!doc.is_object()) config_error("scene spec must be an object");
  SceneSpec s;
  s.name = get_or(doc, "name", s.name, "scene");
  s.gsd_m = get_or(doc, "gsd_m", s.gsd_m, "scene");
  if (!(s.gsd_m > 0.0)) config_error("scene.gsd_m must be > 0");
  if (doc.contains("extent_m")) {
    const double extent = get_or(doc, "extent_m", 0.0, "scene");
    s.width_px = s.height_px = static_cast<int>(std::lround(extent / s.gsd_m));
  }
  s.width_px = get_or(doc, "width_px", s.width_px, "scene");
  s.height_px = get_or(doc, "height_px", s.height_px, "scene");
  s.bands = get_or(doc, "bands", s.bands, "scene");
  s.seed = get_or<std::uint64_t>(doc, "seed", s.seed, "scene");
  if (const auto bg = doc.find("background"); bg != doc.end() && !bg->is_null()) {
    s.background_mean = get_or(*bg, "mean", s.background_mean, "scene.background");
    s.background_spread = get_or(*bg, "spread", s.background_spread, "scene.background");
  }
  s.max_overlap = get_or(doc, "max_overlap", s.max_overlap, "scene");
  for (const auto& o : get_or(doc, "objects", json::array(), "scene")) {
    SceneObjectSpec obj;
    obj.class_name = get_or<std::string>(o, "class", "", "scene.objects[]");
    if (obj.class_name.empty()) config_error("every scene object needs a class");
    obj.count = get_or(o, "count", 0, "scene.objects[]");
    obj.size_m = get_or(o, "size_m", obj.size_m, "scene.objects[]");
    obj.small_object = get_or(o, "small_object", false, "scene.objects[]");
    if (const auto it = o.find("intensity"); it != o.end()) {
      try {
        obj.intensity = it->is_array() ? it->get<std::vector<int>>() : std::vector<int>{it->get<int>()};
      } catch (const json::exception&) {
        config_error("scene object intensity must be an integer or a list of integers");
      }
    }
    s.objects.push_back(std::move(obj));
  }
  return s;
}

SyntheticScene synthesize_scene(const SceneSpec& spec) {
  if (spec.width_px < 1 || spec.height_px < 1) {
    throw Error(ErrorFamily::kInvalidArgument, "scene extent must be at least 1 px");
  }
  if (spec.bands != 1 && spec.bands != 3) {
    throw Error(ErrorFamily::kInvalidArgument, "scene bands must be 1 or 3");
  }
  if (!(spec.max_overlap >= 0.0 && spec.max_overlap < 1.0)) {
    throw Error(ErrorFamily::kInvalidArgument, "max_overlap must lie in [0, 1)");
  }
  validate_parent_name(spec.name);

  SyntheticScene scene;
  scene.classes = spec.classes();
  scene.image = RasterImage::blank(spec.name, spec.width_px, spec.height_px, spec.bands, spec.gsd_m);

  std::mt19937_64 rng(spec.seed);
  const int lo = std::clamp(spec.background_mean - spec.background_spread, 0, 255);
  const int hi = std::clamp(spec.background_mean + spec.background_spread, 0, 255);
  std::uniform_int_distribution<int> noise(lo, std::max(lo, hi));
  for (auto& px : scene.image.pixels) px = static_cast<std::uint8_t>(noise(rng));

  double max_side = 1.0;
  for (const auto& o : spec.objects) max_side = std::max(max_side, o.size_m / spec.gsd_m);
  const double cell = std::ceil(max_side);
  const auto cell_of = [&](double v) { return static_cast<long long>(std::floor(v / cell)); };
  const auto key = [](long long cx, long long cy) { return (cx << 32) ^ (cy & 0xffffffffLL); };
  std::unordered_map<long long, std::vector<std::size_t>> grid;

  constexpr int kAttempts = 10000;
  for (const auto& o : spec.objects) {
    if (o.count < 0) throw Error(ErrorFamily::kInvalidArgument, "object count must be >= 0");
    const int cls = scene.classes.id_of(o.class_name);
    const double side = o.size_m / spec.gsd_m;
    if (!(side > 0.0) || side > spec.width_px || side > spec.height_px) {
      throw Error(ErrorFamily::kInvalidArgument,
                  "objects of class '" + o.class_name + "' do not fit in the scene");
    }
    if (o.intensity.size() != 1 && o.intensity.size() != static_cast<std::size_t>(spec.bands)) {
      throw Error(ErrorFamily::kInvalidArgument, "intensity needs one value or one per band");
    }
    const int span_x = spec.width_px - static_cast<int>(std::ceil(side));
    const int span_y = spec.height_px - static_cast<int>(std::ceil(side));
    std::uniform_int_distribution<int> px(0, std::max(0, span_x));
    std::uniform_int_distribution<int> py(0, std::max(0, span_y));

    for (int n = 0; n < o.count; ++n) {
      bool placed = false;
      for (int attempt = 0; attempt < kAttempts && !placed; ++attempt) {
        const double x0 = px(rng);
        const double y0 = py(rng);
        const BoundingBox box =
            clamp_box(centroid_to_box(x0 + side / 2.0, y0 + side / 2.0, o.size_m, spec.gsd_m),
                      spec.width_px, spec.height_px);
        bool clear = true;
        for (long long cy = cell_of(box.ymin - cell); cy <= cell_of(box.ymax) && clear; ++cy) {
          for (long long cx = cell_of(box.xmin - cell); cx <= cell_of(box.xmax) && clear; ++cx) {
            const auto it = grid.find(key(cx, cy));
            if (it == grid.end()) continue;
            for (std::size_t j : it->second) {
              const BoundingBox& other = scene.labels[j].box;
              const bool conflict = spec.max_overlap == 0.0 ? intersection_area(box, other) > 0.0
                                                            : iou(box, other) > spec.max_overlap;
              if (conflict) {
                clear = false;
                break;
              }
            }
          }
        }
        if (!clear) continue;
        grid[key(cell_of(box.xmin), cell_of(box.ymin))].push_back(scene.labels.size());
        scene.labels.push_back({cls, box});
        placed = true;
      }
      if (!placed) {
        throw Error(ErrorFamily::kInvalidArgument,
                    "infeasible density: could not place object " + std::to_string(n + 1) + " of " +
                        std::to_string(o.count) + " for class '" + o.class_name + "'");
      }
    }
  }

  // Paint pixels whose centres fall inside each box.
  for (const auto& label : scene.labels) {
    const auto& o = *std::find_if(spec.objects.begin(), spec.objects.end(), [&](const auto& s) {
      return s.class_name == scene.classes.name(label.class_id);
    });
    const int x_lo = static_cast<int>(std::ceil(label.box.xmin - 0.5));
    const int x_hi = static_cast<int>(std::ceil(label.box.xmax - 0.5));
    const int y_lo = static_cast<int>(std::ceil(label.box.ymin - 0.5));
    const int y_hi = static_cast<int>(std::ceil(label.box.ymax - 0.5));
    for (int y = std::max(0, y_lo); y < std::min(spec.height_px, y_hi); ++y) {
      for (int x = std::max(0, x_lo); x < std::min(spec.width_px, x_hi); ++x) {
        for (int b = 0; b < spec.bands; ++b) {
          const int v = o.intensity.size() == 1 ? o.intensity[0] : o.intensity[b];
          scene.image.at(x, y, b) = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
        }
      }
    }
  }
  return scene;
}

SyntheticScene cmd_synth(const SceneSpec& spec, const fs::path& out_dir) {
  SyntheticScene scene = synthesize_scene(spec);
  fs::create_directories(out_dir);
  io::save_image(out_dir / (spec.name + ".png"), scene.image);
  io::write_labels(out_dir / (spec.name + "_gt.csv"), scene.labels, scene.classes);
  return scene;
}

// ----------------------------------------------------------------------------
// Augmentation
// ----------------------------------------------------------------------------

AugmentJob parse_augment_job(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) config_error("augment spec must be an object");
  AugmentJob job;
  job.train_list = resolve(base_dir, get_or<std::string>(doc, "train_list", "", "augment"));
  if (job.train_list.empty()) config_error("augment spec needs a train_list");
  if (!doc.contains("classes")) config_error("augment spec needs a classes list");
  job.classes = parse_classes(doc.at("classes"));
  if (const auto r = doc.find("rotations"); r != doc.end()) {
    try {
      job.spec.rotation_angles = r->get<std::vector<double>>();
    } catch (const json::exception&) {
      config_error("augment.rotations must be a list of angles");
    }
  }
  const auto scale = [&](const char* key) {
    const UniformRange r = parse_range(doc, key, {1.0, 1.0}, "augment");
    return ScaleRange{r.lo, r.hi};
  };
  job.spec.hue = scale("hue");
  job.spec.saturation = scale("saturation");
  job.spec.value = scale("value");
  job.spec.seed = get_or<std::uint64_t>(doc, "seed", 0, "augment");
  job.output = resolve(base_dir, get_or<std::string>(doc, "output", "augmented", "augment"));
  try {
    job.spec.validate();
  } catch (const Error& e) {
    config_error(e.what());
  }
  return job;
}

std::size_t cmd_augment(const AugmentJob& job) {
  job.spec.validate();
  const auto entries = io::read_training_list(job.train_list);
  const auto unit = [](const ScaleRange& r) { return r.lo == 1.0 && r.hi == 1.0; };
  const bool jitter = !(unit(job.spec.hue) && unit(job.spec.saturation) && unit(job.spec.value));

  fs::create_directories(job.output);
  std::vector<io::TrainingListEntry> written;
  std::uint64_t stream = 0;
  for (const auto& [image_path, label_path] : entries) {
    LabeledChip chip;
    if (fs::exists(io::sidecar_path(image_path))) {
      chip.image = io::load_image(image_path);
    } else {
      chip.image = io::read_png(image_path);
      chip.image.name = image_path.stem().string();
    }
    chip.labels = io::read_labels(label_path, job.classes);
    if (jitter && chip.image.bands != 3) {
      throw Error(ErrorFamily::kInvalidArgument,
                  image_path.string() + ": HSV jitter needs a 3-band chip");
    }
    const std::string stem = image_path.stem().string();
    for (double angle : job.spec.rotation_angles) {
      LabeledChip out = rotate_chip(chip, angle);
      if (jitter) out.image = hsv_jitter(out.image, job.spec, stream);
      ++stream;
      const std::string base = stem + "_r" + io::format_number(angle);
      const fs::path img = job.output / (base + ".png");
      const fs::path lbl = job.output / (base + ".csv");
      io::write_png(img, out.image);
      io::write_labels(lbl, out.labels, job.classes);
      written.emplace_back(img.filename(), lbl.filename());
    }
  }
  io::write_training_list(job.output / "train.txt", written);
  return written.size();
}

}  // namespace chipstitch
