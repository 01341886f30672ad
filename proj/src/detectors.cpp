#include "chipstitch/detectors.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <sys/wait.h>
#include <unordered_map>

#include "chipstitch/io.hpp"
#include "chipstitch/parallel.hpp"

namespace chipstitch {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Seed from the tile's position, never from its index or the thread that
// handles it, so results do not depend on scheduling.
std::uint64_t tile_seed(std::uint64_t seed, const TileRecord& tile, double native_per_pixel) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(tile.row));
  h = splitmix64(h ^ (static_cast<std::uint64_t>(tile.col) << 1));
  h = splitmix64(h ^ static_cast<std::uint64_t>(tile.upsample));
  h = splitmix64(h ^ static_cast<std::uint64_t>(std::llround(native_per_pixel * 1e6)));
  return h;
}

double draw(std::mt19937_64& rng, const UniformRange& range) {
  if (range.hi <= range.lo) return range.lo;
  return std::uniform_real_distribution<double>(range.lo, range.hi)(rng);
}

// Ground truth visible in the tile, mapped into the detector's pixel frame.
std::vector<GroundTruthLabel> visible_local(const TileRecord& tile,
                                            const std::vector<GroundTruthLabel>& gt,
                                            double native_per_pixel) {
  std::vector<GroundTruthLabel> source_frame;
  source_frame.reserve(gt.size());
  const double inv = 1.0 / native_per_pixel;
  const BoundingBox rect = tile.rect();
  for (const auto& label : gt) {
    const BoundingBox b = native_per_pixel == 1.0 ? label.box : label.box.scaled(inv);
    if (b.xmax <= rect.xmin || b.xmin >= rect.xmax || b.ymax <= rect.ymin || b.ymin >= rect.ymax) {
      continue;
    }
    source_frame.push_back({label.class_id, b});
  }
  auto visible = labels_inside(source_frame, rect);
  for (auto& label : visible) {
    label.box = label.box.translated(-tile.col, -tile.row);
    if (tile.upsample != 1) label.box = label.box.scaled(tile.upsample);
  }
  return visible;
}

void check_range(double v, double lo, double hi, const char* what) {
  if (!(v >= lo && v <= hi)) {
    throw Error(ErrorFamily::kInvalidArgument, std::string(what) + " out of range");
  }
}

}  // namespace

BatchResult TileDetector::detect_all(std::span<const TileRecord> tiles, double native_per_pixel,
                                     int workers) const {
  BatchResult result;
  result.per_tile.resize(tiles.size());
  std::vector<double> seconds(tiles.size(), 0.0);
  parallel_for(tiles.size(), workers, [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    result.per_tile[i] = detect(tiles[i], TileContext{i, native_per_pixel});
    seconds[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  });
  for (double s : seconds) result.detector_seconds += s;
  return result;
}

// ----------------------------------------------------------------------------
// Oracle
// ----------------------------------------------------------------------------

OracleNoiseModel OracleNoiseModel::noiseless() {
  OracleNoiseModel m;
  m.confidence.true_positive = {1.0, 1.0};
  return m;
}

void OracleNoiseModel::validate() const {
  check_range(dropout_prob, 0.0, 1.0, "dropout_prob");
  if (!(fp_rate >= 0.0) || !std::isfinite(fp_rate)) {
    throw Error(ErrorFamily::kInvalidArgument, "fp_rate must be >= 0");
  }
  if (!(jitter_px >= 0.0)) throw Error(ErrorFamily::kInvalidArgument, "jitter_px must be >= 0");
  for (const auto* r : {&confidence.true_positive, &confidence.false_positive}) {
    check_range(r->lo, 0.0, 1.0, "confidence range");
    check_range(r->hi, r->lo, 1.0, "confidence range");
  }
  if (!(fallback_fp_size_px > 0.0)) {
    throw Error(ErrorFamily::kInvalidArgument, "fallback_fp_size_px must be > 0");
  }
}

std::vector<Detection> oracle_detect(const TileRecord& tile, const std::vector<GroundTruthLabel>& gt,
                                     const OracleNoiseModel& noise, const TileContext& ctx) {
  noise.validate();
  std::mt19937_64 rng(tile_seed(noise.seed, tile, ctx.native_per_pixel));
  const double pw = tile.pixel_width();
  const double ph = tile.pixel_height();
  const Frame frame = TileLocal{ctx.tile_id};

  std::vector<Detection> out;
  std::bernoulli_distribution miss(noise.dropout_prob);
  for (const auto& label : visible_local(tile, gt, ctx.native_per_pixel)) {
    if (noise.dropout_prob > 0.0 && miss(rng)) continue;
    BoundingBox box = label.box;
    if (noise.jitter_px > 0.0) {
      std::uniform_real_distribution<double> j(-noise.jitter_px, noise.jitter_px);
      const double x0 = box.xmin + j(rng), y0 = box.ymin + j(rng);
      const double x1 = box.xmax + j(rng), y1 = box.ymax + j(rng);
      box = clamp_box({std::min(x0, x1), std::min(y0, y1), std::max(x0, x1), std::max(y0, y1)}, pw, ph);
    }
    out.push_back({label.class_id, box, draw(rng, noise.confidence.true_positive), frame});
  }

  if (noise.fp_rate > 0.0) {
    const int count = std::poisson_distribution<int>(noise.fp_rate)(rng);
    const double to_pixels = tile.upsample / ctx.native_per_pixel;
    for (int k = 0; k < count; ++k) {
      int class_id = 0;
      double bw = noise.fallback_fp_size_px;
      double bh = noise.fallback_fp_size_px;
      if (!gt.empty()) {
        const auto& donor =
            gt[std::uniform_int_distribution<std::size_t>(0, gt.size() - 1)(rng)];
        class_id = donor.class_id;
        bw = donor.box.width() * to_pixels;
        bh = donor.box.height() * to_pixels;
      }
      bw = std::min(bw, pw);
      bh = std::min(bh, ph);
      const double x = std::uniform_real_distribution<double>(0.0, pw - bw)(rng);
      const double y = std::uniform_real_distribution<double>(0.0, ph - bh)(rng);
      out.push_back({class_id, {x, y, x + bw, y + bh}, draw(rng, noise.confidence.false_positive),
                     frame});
    }
  }
  return out;
}

OracleDetector::OracleDetector(std::vector<GroundTruthLabel> gt, OracleNoiseModel noise)
    : gt_(std::move(gt)), noise_(noise) {
  noise_.validate();
}

std::vector<Detection> OracleDetector::detect(const TileRecord& tile, const TileContext& ctx) const {
  return oracle_detect(tile, gt_, noise_, ctx);
}

// ----------------------------------------------------------------------------
// Grid simulator
// ----------------------------------------------------------------------------

void GridSimConfig::validate() const {
  if (downsample < 1) throw Error(ErrorFamily::kInvalidArgument, "downsample must be >= 1");
  if (boxes_per_cell < 1) throw Error(ErrorFamily::kInvalidArgument, "boxes_per_cell must be >= 1");
}

std::vector<Detection> gridsim_detect(const TileRecord& tile, const std::vector<GroundTruthLabel>& gt,
                                      const GridSimConfig& cfg, const TileContext& ctx) {
  cfg.validate();
  const auto visible = visible_local(tile, gt, ctx.native_per_pixel);
  const GridDims dims{(tile.pixel_width() + cfg.downsample - 1) / cfg.downsample,
                      (tile.pixel_height() + cfg.downsample - 1) / cfg.downsample};

  std::map<std::pair<int, int>, std::vector<std::size_t>> cells;  // (cell row, cell col)
  for (std::size_t i = 0; i < visible.size(); ++i) {
    const auto& b = visible[i].box;
    const int cx = std::clamp(static_cast<int>(std::floor(b.center_x() / cfg.downsample)), 0, dims.width - 1);
    const int cy = std::clamp(static_cast<int>(std::floor(b.center_y() / cfg.downsample)), 0, dims.height - 1);
    cells[{cy, cx}].push_back(i);
  }

  std::vector<Detection> out;
  for (auto& [cell, members] : cells) {
    std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      const auto& ba = visible[a].box;
      const auto& bb = visible[b].box;
      if (ba.area() != bb.area()) return ba.area() > bb.area();
      if (ba.center_y() != bb.center_y()) return ba.center_y() < bb.center_y();
      return ba.center_x() < bb.center_x();
    });
    const std::size_t keep = std::min(members.size(), static_cast<std::size_t>(cfg.boxes_per_cell));
    for (std::size_t k = 0; k < keep; ++k) {
      const auto& label = visible[members[k]];
      out.push_back({label.class_id, label.box, 1.0, TileLocal{ctx.tile_id}});
    }
  }
  return out;
}

GridSimDetector::GridSimDetector(std::vector<GroundTruthLabel> gt, GridSimConfig cfg)
    : gt_(std::move(gt)), cfg_(cfg) {
  cfg_.validate();
}

std::vector<Detection> GridSimDetector::detect(const TileRecord& tile, const TileContext& ctx) const {
  return gridsim_detect(tile, gt_, cfg_, ctx);
}

int nf_layer_size(int n_boxes, int n_classes) {
  if (n_boxes < 1 || n_classes < 0) {
    throw Error(ErrorFamily::kInvalidArgument, "nf_layer_size needs n_boxes >= 1, n_classes >= 0");
  }
  return n_boxes * (n_classes + 5);
}

GridDims grid_dims(int window, int downsample) {
  if (window < 1 || downsample < 1) {
    throw Error(ErrorFamily::kInvalidArgument, "grid_dims needs window >= 1 and downsample >= 1");
  }
  const int side = (window + downsample - 1) / downsample;
  return {side, side};
}

// ----------------------------------------------------------------------------
// External process
// ----------------------------------------------------------------------------

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

void replace_all(std::string& s, std::string_view from, const std::string& to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

}  // namespace

ExternalDetections external_detect(const std::filesystem::path& manifest_path,
                                   const std::filesystem::path& workdir,
                                   const std::string& command_template, const ClassTable& classes) {
  if (command_template.find("{input}") == std::string::npos ||
      command_template.find("{output}") == std::string::npos) {
    throw Error(ErrorFamily::kConfig,
                "external detector command must contain {input} and {output} placeholders");
  }
  const auto manifest = io::read_manifest(manifest_path);
  std::filesystem::create_directories(workdir);
  const auto output = workdir / "detections.csv";
  std::filesystem::remove(output);

  std::string command = command_template;
  replace_all(command, "{input}", shell_quote(manifest_path.string()));
  replace_all(command, "{output}", shell_quote(output.string()));
  replace_all(command, "{workdir}", shell_quote(workdir.string()));

  std::string diagnostics;
  FILE* pipe = ::popen((command + " 2>&1").c_str(), "r");
  if (pipe == nullptr) {
    throw Error(ErrorFamily::kProcess, "failed to launch external detector: " + command);
  }
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe) != nullptr) {
    if (diagnostics.size() < 8192) diagnostics += buf.data();
  }
  const int status = ::pclose(pipe);
  const bool ok = status != -1 && WIFEXITED(status) && WEXITSTATUS(status) == 0;
  if (!ok) {
    const int code = (status != -1 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
    throw Error(ErrorFamily::kProcess, "external detector exited with status " +
                                           std::to_string(code) + ": " + command +
                                           (diagnostics.empty() ? "" : "\n" + diagnostics));
  }
  if (!std::filesystem::exists(output)) {
    throw Error(ErrorFamily::kProcess, "external detector did not write " + output.string() +
                                           (diagnostics.empty() ? "" : "\n" + diagnostics));
  }

  ExternalDetections result;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    index.emplace(manifest[i].cutout_name, i);
    result.cutout_names.push_back(manifest[i].cutout_name);
  }
  result.per_tile.resize(manifest.size());
  for (auto& row : io::read_tile_detections(output, classes)) {
    const auto it = index.find(row.cutout_name);
    if (it == index.end()) {
      throw Error(ErrorFamily::kFormat, output.string() + ":" + std::to_string(row.line) +
                                            ": unknown cutout name '" + row.cutout_name + "'");
    }
    row.detection.frame = TileLocal{it->second};
    result.per_tile[it->second].push_back(row.detection);
  }
  return result;
}

ExternalDetector::ExternalDetector(std::string command_template, std::filesystem::path workdir,
                                   ClassTable classes)
    : command_template_(std::move(command_template)),
      workdir_(std::move(workdir)),
      classes_(std::move(classes)) {}

BatchResult ExternalDetector::detect_all(std::span<const TileRecord> tiles, double native_per_pixel,
                                         int /*workers*/) const {
  (void)native_per_pixel;
  const auto manifest = io::write_tiles(workdir_, tiles);
  const auto start = std::chrono::steady_clock::now();
  auto ext = external_detect(manifest, workdir_, command_template_, classes_);
  BatchResult result;
  result.detector_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.per_tile = std::move(ext.per_tile);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    for (auto& d : result.per_tile[i]) {
      d.box = clamp_box(d.box, tiles[i].pixel_width(), tiles[i].pixel_height());
    }
  }
  return result;
}

}  // namespace chipstitch
