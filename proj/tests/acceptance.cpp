// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (0 when all pass).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "chipstitch/detectors.hpp"
#include "chipstitch/eval.hpp"
#include "chipstitch/io.hpp"
#include "chipstitch/multiscale.hpp"
#include "chipstitch/pipeline.hpp"
#include "chipstitch/stitcher.hpp"
#include "chipstitch/tiler.hpp"
#include "nms_oracle.hpp"
#include "test_util.hpp"

using namespace chipstitch;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!out.pass) ++failures;
  std::printf("[%s] %2d %-28s %s (%.2f s)\n", out.pass ? "PASS" : "FAIL", id, title, out.detail.c_str(),
              secs);
  std::fflush(stdout);
}

std::string str(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

double elapsed_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

Outcome tiling_coverage() {
  const auto start = std::chrono::steady_clock::now();
  const TileSpec spec{416, 0.15};
  const int min_overlap = 62;
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<int> size(50, 5000);
  int worst_overlap = 416;
  for (int i = 0; i < 200; ++i) {
    const int w = size(rng), h = size(rng);
    const auto tiles = plan_tiles(w, h, spec);
    // The plan must be the full product of its row and column offsets;
    // then per-axis coverage implies coverage of every pixel.
    std::set<int> rows, cols;
    for (const auto& t : tiles) {
      rows.insert(t.row);
      cols.insert(t.col);
    }
    if (tiles.size() != rows.size() * cols.size()) return {false, "plan is not a full grid"};
    std::set<std::pair<int, int>> pairs;
    for (const auto& t : tiles) pairs.insert({t.row, t.col});
    if (pairs.size() != tiles.size()) return {false, "duplicate tiles"};
    for (const auto& [extent, offsets] : {std::pair{w, cols}, std::pair{h, rows}}) {
      std::vector<char> hit(static_cast<std::size_t>(extent), 0);
      for (int o : offsets) {
        if (o < 0) return {false, "negative offset"};
        for (int p = o; p < std::min(extent, o + spec.window); ++p) hit[p] = 1;
      }
      for (char c : hit) {
        if (!c) return {false, "uncovered pixel in " + std::to_string(w) + "x" + std::to_string(h)};
      }
      const std::vector<int> v(offsets.begin(), offsets.end());
      for (std::size_t k = 1; k < v.size(); ++k) {
        const int overlap = v[k - 1] + spec.window - v[k];
        worst_overlap = std::min(worst_overlap, overlap);
        if (overlap < min_overlap) return {false, "overlap " + std::to_string(overlap) + " px"};
      }
    }
  }
  const double secs = elapsed_since(start);
  return {secs < 10.0, "200 sizes covered, min overlap " + std::to_string(worst_overlap) + " px >= " +
                           std::to_string(min_overlap) + ", " + str("%.3f", secs) + " s < 10 s"};
}

Outcome naming_round_trip() {
  std::mt19937_64 rng(1002);
  const std::string alphabet = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-.@";
  const std::string ext_alphabet = "abcdefghijklmnopqrstuvwxyz0123456789";
  std::uniform_int_distribution<int> len(1, 24), elen(1, 4), coord(0, 1000000), dim(1, 5000);
  for (int i = 0; i < 1000; ++i) {
    CutoutName want;
    const int n = len(rng);
    for (int k = 0; k < n; ++k) want.parent += alphabet[rng() % alphabet.size()];
    const int m = elen(rng);
    for (int k = 0; k < m; ++k) want.ext += ext_alphabet[rng() % ext_alphabet.size()];
    want.row = coord(rng);
    want.col = coord(rng);
    want.height = dim(rng);
    want.width = dim(rng);
    const auto name = cutout_name(want.parent, want.row, want.col, want.height, want.width, want.ext);
    if (!(parse_cutout_name(name) == want)) return {false, "round trip failed for " + name};
  }
  const auto lit = parse_cutout_name("panama50cm|1370_1180_416_416.tif");
  const bool ok = lit == CutoutName{"panama50cm", 1370, 1180, 416, 416, "tif"};
  return {ok, "1000 random tuples round-trip; literal example parses to (panama50cm,1370,1180,416,416,tif)"};
}

Outcome nms_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1003);
  std::uniform_int_distribution<int> count(0, 200), cls(0, 3), conf(1, 50);
  std::uniform_real_distribution<double> thr(0.1, 0.9);
  std::bernoulli_distribution snap(0.5);
  for (int round = 0; round < 500; ++round) {
    std::vector<Detection> dets;
    const int n = count(rng);
    for (int k = 0; k < n; ++k) {
      auto b = testutil::random_box(rng, 150.0, 40.0);
      if (snap(rng)) b = {std::round(b.xmin), std::round(b.ymin), std::round(b.xmax), std::round(b.ymax)};
      dets.push_back({cls(rng), b, conf(rng) / 50.0});
    }
    const double t = round % 5 == 0 ? 0.5 : thr(rng);
    if (testutil::as_multiset(global_nms(dets, t)) !=
        testutil::as_multiset(testutil::brute_force_nms(dets, t))) {
      return {false, "mismatch in round " + std::to_string(round)};
    }
  }
  const double secs = elapsed_since(start);
  return {secs < 30.0, "500 random sets match the quadratic reference, " + str("%.3f", secs) + " s < 30 s"};
}

// Shared 5000x5000 scene for criteria 4, 11 and 12.
struct Scene {
  testutil::TempDir dir{"acceptance"};
  fs::path config;
  std::vector<GroundTruthLabel> labels;

  Scene() {
    SceneSpec spec;
    spec.name = "scene";
    spec.gsd_m = 0.3;
    spec.width_px = spec.height_px = 5000;
    spec.seed = 2024;
    spec.objects.push_back({"car", 500, 3.0, {230}, true});
    labels = cmd_synth(spec, dir / "data").labels;
    const json doc = {{"image", "data/scene.png"},
                      {"ground_truth", "data/scene_gt.csv"},
                      {"classes", json::array({{{"name", "car"}, {"small_object", true}}})},
                      {"tiling", {{"window_px", 416}, {"overlap", 0.15}}},
                      {"detector", {{"type", "oracle"}}},
                      {"nms_iou", 0.5},
                      {"workers", 4},
                      {"output", "out"}};
    config = dir / "run.json";
    std::ofstream(config) << doc.dump(2);
  }
};

Scene& scene() {
  static Scene s;
  return s;
}

Outcome noiseless_end_to_end() {
  const auto start = std::chrono::steady_clock::now();
  auto& sc = scene();
  const auto cfg = load_config(sc.config);
  const auto run = cmd_run(cfg);
  if (!run.report || run.report->classes.size() != 1) return {false, "no report"};
  const auto& cls = run.report->classes[0];
  if (cls.match_iou != 0.25) return {false, "car match IoU is not 0.25"};
  for (const auto& p : cls.curve) {
    if (p.precision != 1.0 || p.recall != 1.0) {
      return {false, "threshold " + str("%.4f", p.threshold) + ": precision " + str("%.6f", p.precision) +
                         " recall " + str("%.6f", p.recall)};
    }
  }
  if (cls.ap != 1.0 || run.report->map != 1.0) return {false, "AP " + str("%.6f", cls.ap)};

  const auto plan = plan_tiles(5000, 5000, cfg.tiling);
  const auto& dets = run.detections.detections;
  int straddlers = 0;
  for (const auto& gt : sc.labels) {
    int tiles_touched = 0;
    for (const auto& t : plan) {
      const BoundingBox r{double(t.col), double(t.row), double(t.col + 416), double(t.row + 416)};
      if (intersection_area(r, gt.box) > 0.0) ++tiles_touched;
    }
    int hits = 0;
    for (const auto& d : dets) hits += iou(d.box, gt.box) > 0.0;
    if (hits != 1) return {false, "object with " + std::to_string(hits) + " final detections"};
    if (tiles_touched > 1) ++straddlers;
  }
  if (dets.size() != sc.labels.size()) return {false, "detection count differs from GT count"};
  const double secs = elapsed_since(start);
  return {secs < 60.0 && straddlers > 0,
          "P=R=1 at all 30 thresholds, AP=mAP=1 at IoU 0.25; " + std::to_string(straddlers) +
              " boundary-straddling objects, each detected once; " + str("%.2f", secs) + " s < 60 s"};
}

Outcome analytic_pr_curve() {
  // 2400 cars; TPs at confidence U[0.7,1], FPs at U[0.68,0.70) with an
  // expected count of one third of the objects (FP:TP = 1:3).
  SceneSpec spec;
  spec.width_px = spec.height_px = 5000;
  spec.seed = 505;
  spec.objects.push_back({"car", 2400, 3.0, {230}, true});
  const auto synth = synthesize_scene(spec);
  const TileSpec tiling;
  const double tiles = static_cast<double>(plan_tiles(5000, 5000, tiling).size());

  OracleNoiseModel noise;
  noise.fp_rate = (2400.0 / 3.0) / tiles;
  noise.confidence.true_positive = {0.7, 1.0};
  noise.confidence.false_positive = {0.68, 0.70};
  noise.seed = 77;
  const OracleDetector detector(synth.labels, noise);
  const auto run = run_windowed(synth.image, {tiling, 1}, detector, 0.5, 4);

  const EvalConfig cfg;
  const auto curve = pr_curve(run.detections.detections, synth.labels, 0, 0.25, cfg);
  double worst_low = 0.0, worst_tab = 0.0;
  bool high_ok = true;
  for (const auto& p : curve) {
    long tp = 0, fp = 0;
    for (const auto& d : run.detections.detections) {
      if (d.confidence < p.threshold) continue;
      (d.confidence >= 0.7 ? tp : fp) += 1;
    }
    const double tab = tp + fp == 0 ? 1.0 : double(tp) / double(tp + fp);
    worst_tab = std::max(worst_tab, std::abs(tab - p.precision));
    if (p.threshold < 0.7) {
      worst_low = std::max(worst_low, std::abs(p.precision - 0.75));
    } else if (p.precision != 1.0) {
      high_ok = false;
    }
  }
  const bool ok = worst_low <= 0.03 && high_ok && worst_tab <= 1e-9 && synth.labels.size() >= 2000;
  return {ok, "max |P-0.75| below 0.7 = " + str("%.4f", worst_low) + " (<= 0.03), P=1 at >= 0.7: " +
                  (high_ok ? "yes" : "no") + ", max |P-tabulated| = " + str("%.1e", worst_tab) + " (<= 1e-9)"};
}

Outcome grid_coarseness() {
  std::mt19937_64 rng(1006);
  std::uniform_real_distribution<double> sep(8.0, 24.0), angle(0.0, 2.0 * M_PI), jitter(36.0, 60.0);
  const double half = 5.0;  // 3 m cars at 0.3 m/px
  long gt_total = 0, found16 = 0, found32 = 0, shared = 0, merged = 0, apart = 0, apart_ok = 0;
  for (int scene_idx = 0; scene_idx < 40; ++scene_idx) {
    TileRecord tile;
    tile.parent_name = "pairs";
    tile.height = tile.width = tile.parent_height = tile.parent_width = 416;
    std::vector<GroundTruthLabel> gt;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    // One pair per 96 px lattice cell, so pairs never share a 32 px cell.
    for (int gy = 0; gy < 4; ++gy) {
      for (int gx = 0; gx < 4; ++gx) {
        const double x1 = 96 * gx + jitter(rng), y1 = 96 * gy + jitter(rng);
        const double s = sep(rng), a = angle(rng);
        const double x2 = x1 + s * std::cos(a), y2 = y1 + s * std::sin(a);
        pairs.emplace_back(gt.size(), gt.size() + 1);
        gt.push_back({0, {x1 - half, y1 - half, x1 + half, y1 + half}});
        gt.push_back({0, {x2 - half, y2 - half, x2 + half, y2 + half}});
      }
    }
    const auto d16 = gridsim_detect(tile, gt, {16, 1});
    const auto d32 = gridsim_detect(tile, gt, {32, 1});
    gt_total += static_cast<long>(gt.size());
    found16 += match_detections(d16, gt, 0.25).tp;
    found32 += match_detections(d32, gt, 0.25).tp;
    const auto present = [&](const GroundTruthLabel& g) {
      for (const auto& d : d32) {
        if (d.box == g.box) return true;
      }
      return false;
    };
    for (const auto& [a, b] : pairs) {
      const auto cell = [](const BoundingBox& bx) {
        return std::pair{static_cast<int>(std::floor(bx.center_x() / 32)),
                         static_cast<int>(std::floor(bx.center_y() / 32))};
      };
      const int kept = present(gt[a]) + present(gt[b]);
      if (cell(gt[a].box) == cell(gt[b].box)) {
        ++shared;
        merged += kept == 1;
      } else {
        ++apart;
        apart_ok += kept == 2;
      }
    }
  }
  const double r16 = double(found16) / gt_total, r32 = double(found32) / gt_total;
  const bool ok = r16 > r32 && shared > 0 && merged == shared && apart_ok == apart;
  return {ok, "recall D=16 " + str("%.4f", r16) + " > D=32 " + str("%.4f", r32) + "; " +
                  std::to_string(merged) + "/" + std::to_string(shared) +
                  " same-cell pairs merged at D=32 (N_boxes=1)"};
}

Outcome chip_ratio() {
  const double r = chip_count_ratio(20000, 200, 2000);
  return {r >= 0.005 && r <= 0.015, "ratio " + str("%.5f", r) + " in [0.005, 0.015]"};
}

Outcome grid_dims_check() {
  const bool ok = grid_dims(416, 16) == GridDims{26, 26} && grid_dims(416, 32) == GridDims{13, 13} &&
                  nf_layer_size(5, 4) == 45;
  const auto a = grid_dims(416, 16), b = grid_dims(416, 32);
  return {ok, "grid_dims(416,16)=(" + std::to_string(a.width) + "," + std::to_string(a.height) +
                  "), grid_dims(416,32)=(" + std::to_string(b.width) + "," + std::to_string(b.height) +
                  "), nf_layer_size(5,4)=" + std::to_string(nf_layer_size(5, 4))};
}

Outcome simulate_2x_check() {
  const auto img = RasterImage::blank("fixed", 1664, 1664, 1, 0.3, 100);
  const auto plain = extract_tiles(img, TileSpec{416, 0.15});
  const auto sim = simulate_2x(img, 416, 0.15);
  const auto doubled = extract_tiles(img, sim.spec, sim.upsample);
  const double ratio = double(doubled.size()) / double(plain.size());
  const bool sizes = doubled.front().pixel_width() == 416;
  return {sizes && std::abs(ratio - 4.0) <= 0.15 * 4.0,
          std::to_string(plain.size()) + " -> " + std::to_string(doubled.size()) + " tiles, ratio " +
              str("%.3f", ratio) + " (4 +/- 15%)"};
}

Outcome eval_constants() {
  const EvalConfig cfg;
  const auto& t = cfg.thresholds;
  double dev = 0.0;
  const double step = (0.95 - 0.05) / 29.0;
  for (std::size_t i = 1; i < t.size(); ++i) dev = std::max(dev, std::abs(t[i] - t[i - 1] - step));
  const bool ok = t.size() == 30 && t.front() == 0.05 && t.back() == 0.95 && dev < 1e-12 &&
                  cfg.iou_default == 0.5 && cfg.iou_small_object == 0.25;
  return {ok, std::to_string(t.size()) + " thresholds " + str("%.2f", t.front()) + ".." +
                  str("%.2f", t.back()) + ", spacing deviation " + str("%.1e", dev) +
                  ", IoU " + str("%.2f", cfg.iou_default) + "/" + str("%.2f", cfg.iou_small_object)};
}

Outcome determinism() {
  auto& sc = scene();
  auto one = load_config(sc.config);
  apply_overrides(one, {1, std::nullopt, std::nullopt, std::nullopt, std::nullopt, sc.dir / "w1"});
  auto eight = load_config(sc.config);
  apply_overrides(eight, {8, std::nullopt, std::nullopt, std::nullopt, std::nullopt, sc.dir / "w8"});
  cmd_run(one);
  cmd_run(eight);
  const auto a = slurp(sc.dir / "w1" / "detections.csv");
  const auto b = slurp(sc.dir / "w8" / "detections.csv");
  return {!a.empty() && a == b, "1 and 8 workers: " + std::to_string(a.size()) + " bytes each, " +
                                    (a == b ? "identical" : "different")};
}

Outcome throughput_accounting() {
  auto& sc = scene();
  auto cfg = load_config(sc.config);
  apply_overrides(cfg, {std::nullopt, std::nullopt, std::nullopt, std::nullopt, std::nullopt, sc.dir / "bench"});
  RunOutcome run;
  const auto text = cmd_benchmark(cfg, &run);
  const double expected = std::pow(5000 * 0.3 / 1000.0, 2);
  const bool ok = std::abs(run.area_km2 - expected) < 1e-9 && std::abs(run.area_km2 - 2.25) < 1e-9 &&
                  std::isfinite(run.rate.rate_km2_per_s) && run.rate.rate_km2_per_s > 0.0 &&
                  run.rate.overhead_factor >= 1.0 && text.find("area_km2 2.25") != std::string::npos;
  return {ok, "area " + str("%.6f", run.area_km2) + " km2, rate " + str("%.4g", run.rate.rate_km2_per_s) +
                  " km2/s, overhead " + str("%.3f", run.rate.overhead_factor) + " (>= 1)"};
}

}  // namespace

int main() {
  report(1, "tiling coverage", tiling_coverage);
  report(2, "naming round-trip", naming_round_trip);
  report(3, "NMS oracle equivalence", nms_equivalence);
  report(4, "noiseless end-to-end", noiseless_end_to_end);
  report(5, "analytic PR curve", analytic_pr_curve);
  report(6, "grid coarseness", grid_coarseness);
  report(7, "chip-count ratio", chip_ratio);
  report(8, "grid dims", grid_dims_check);
  report(9, "2x simulation", simulate_2x_check);
  report(10, "evaluation constants", eval_constants);
  report(11, "determinism across workers", determinism);
  report(12, "throughput accounting", throughput_accounting);
  std::printf("%d of 12 criteria passed\n", 12 - failures);
  return failures == 0 ? 0 : 1;
}
