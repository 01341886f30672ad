#include "chipstitch/multiscale.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "chipstitch/kernels.hpp"

namespace chipstitch {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Span {
  int first = 0;
  int last = 0;  // exclusive
  std::vector<float> weights;
};

// Source pixels covered by each output pixel of an area-averaging resize.
std::vector<Span> area_spans(int src, int dst, double factor) {
  std::vector<Span> spans(static_cast<std::size_t>(dst));
  for (int i = 0; i < dst; ++i) {
    const double lo = i * factor;
    const double hi = std::min((i + 1) * factor, static_cast<double>(src));
    Span& s = spans[i];
    s.first = std::min(static_cast<int>(std::floor(lo)), src - 1);
    s.last = std::max(s.first + 1, std::min(static_cast<int>(std::ceil(hi)), src));
    const double covered = std::max(hi - lo, 1e-12);
    for (int k = s.first; k < s.last; ++k) {
      const double overlap = std::min(hi, k + 1.0) - std::max(lo, static_cast<double>(k));
      s.weights.push_back(static_cast<float>(std::max(overlap, 0.0) / covered));
    }
    if (hi <= lo) s.weights.assign(s.weights.size(), 1.0f / static_cast<float>(s.weights.size()));
  }
  return spans;
}

std::uint8_t to_u8(float v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

void ScaleProfile::validate() const {
  if (name.empty()) throw Error(ErrorFamily::kConfig, "scale profile needs a name");
  if (!(window_m > 0.0)) {
    throw Error(ErrorFamily::kConfig, "profile '" + name + "': window_m must be > 0");
  }
  if (window_px < 1) {
    throw Error(ErrorFamily::kConfig, "profile '" + name + "': window_px must be >= 1");
  }
  if (!detector) throw Error(ErrorFamily::kConfig, "profile '" + name + "' has no detector");
}

void EnsembleConfig::validate(const ClassTable& classes) const {
  if (profiles.empty()) throw Error(ErrorFamily::kConfig, "ensemble needs at least one profile");
  if (!(nms_iou > 0.0 && nms_iou <= 1.0)) {
    throw Error(ErrorFamily::kConfig, "ensemble nms_iou must lie in (0, 1]");
  }
  std::set<int> seen;
  for (const auto& p : profiles) {
    p.validate();
    for (int c : p.classes) {
      if (!classes.contains(c)) {
        throw Error(ErrorFamily::kConfig, "profile '" + p.name + "' routes unknown class id " +
                                              std::to_string(c));
      }
      if (!seen.insert(c).second) {
        throw Error(ErrorFamily::kConfig,
                    "class '" + classes.name(c) + "' is routed to more than one profile");
      }
    }
  }
  for (const auto& c : classes.classes()) {
    if (!seen.count(c.id)) {
      throw Error(ErrorFamily::kConfig, "class '" + c.name + "' is not routed to any profile");
    }
  }
}

double effective_gsd(const ScaleProfile& profile) { return profile.window_m / profile.window_px; }

RasterImage downsample_area(const RasterImage& image, double factor, std::string name) {
  image.validate();
  if (!(factor >= 1.0) || !std::isfinite(factor)) {
    throw Error(ErrorFamily::kInvalidArgument, "downsample factor must be >= 1");
  }
  const int out_w = std::max(1, static_cast<int>(std::lround(image.width / factor)));
  const int out_h = std::max(1, static_cast<int>(std::lround(image.height / factor)));
  const auto xs = area_spans(image.width, out_w, factor);
  const auto ys = area_spans(image.height, out_h, factor);
  const int bands = image.bands;
  const std::size_t row_len = static_cast<std::size_t>(image.width) * bands;

  RasterImage out = RasterImage::blank(std::move(name), out_w, out_h, bands, image.gsd * factor);
  std::vector<float> src_row(row_len);
  std::vector<float> acc(row_len);
  for (int j = 0; j < out_h; ++j) {
    std::fill(acc.begin(), acc.end(), 0.0f);
    const Span& sy = ys[j];
    for (int k = sy.first; k < sy.last; ++k) {
      const std::uint8_t* row = image.pixels.data() + static_cast<std::size_t>(k) * row_len;
      std::copy(row, row + row_len, src_row.begin());
      kernels::accumulate_weighted(acc, src_row, sy.weights[k - sy.first]);
    }
    for (int i = 0; i < out_w; ++i) {
      const Span& sx = xs[i];
      for (int b = 0; b < bands; ++b) {
        float v = 0.0f;
        for (int k = sx.first; k < sx.last; ++k) {
          v += sx.weights[k - sx.first] * acc[static_cast<std::size_t>(k) * bands + b];
        }
        out.at(i, j, b) = to_u8(v);
      }
    }
  }
  return out;
}

RasterImage resample_for_profile(const RasterImage& image, const ScaleProfile& profile) {
  image.validate();
  const double target = effective_gsd(profile);
  const double factor = target / image.gsd;
  if (std::abs(factor - 1.0) <= 1e-9) return image;
  if (factor < 1.0) {
    throw Error(ErrorFamily::kInvalidArgument,
                "profile '" + profile.name + "' needs " + std::to_string(target) +
                    " m/px but the image is already coarser (" + std::to_string(image.gsd) +
                    " m/px); upsampling is not supported");
  }
  RasterImage out = downsample_area(image, factor, image.name + "@" + profile.name);
  out.gsd = target;
  return out;
}

TilingConfig simulate_2x(const RasterImage& image, int window_px, double overlap) {
  image.validate();
  if (window_px < 2 || window_px % 2 != 0) {
    throw Error(ErrorFamily::kInvalidArgument,
                "2x simulation needs an even window, got " + std::to_string(window_px));
  }
  TilingConfig cfg{{window_px / 2, overlap}, 2};
  cfg.spec.validate();
  return cfg;
}

WindowedResult run_windowed(const RasterImage& image, const TilingConfig& tiling,
                            const Detector& detector, double nms_iou, int workers,
                            double native_per_pixel, const std::string& profile,
                            const std::optional<std::vector<int>>& classes) {
  WindowedResult result;
  auto start = Clock::now();
  const auto tiles = extract_tiles(image, tiling.spec, tiling.upsample, workers);
  result.timings.tile_seconds = seconds_since(start);
  result.tile_count = tiles.size();

  start = Clock::now();
  auto batch = detector.detect_all(tiles, native_per_pixel, workers);
  result.timings.detect_stage_seconds = seconds_since(start);
  result.timings.detector_seconds = batch.detector_seconds;
  if (batch.per_tile.size() != tiles.size()) {
    throw Error(ErrorFamily::kProcess, "detector '" + detector.identifier() +
                                           "' returned results for the wrong number of tiles");
  }

  start = Clock::now();
  std::vector<TileDetections> per_tile(tiles.size());
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    per_tile[i].tile = tiles[i];
    per_tile[i].tile.pixels.clear();
    auto& dets = batch.per_tile[i];
    if (classes) {
      std::erase_if(dets, [&](const Detection& d) {
        return std::find(classes->begin(), classes->end(), d.class_id) == classes->end();
      });
    }
    per_tile[i].detections = std::move(dets);
  }
  result.detections = stitch(per_tile, nms_iou, profile);
  if (result.detections.parent_name.empty()) result.detections.parent_name = image.name;
  result.timings.stitch_seconds = seconds_since(start);
  return result;
}

WindowedResult run_ensemble(const RasterImage& image, const EnsembleConfig& cfg,
                            const TileSpec& tile_spec, int workers) {
  image.validate();
  if (cfg.profiles.empty()) throw Error(ErrorFamily::kConfig, "ensemble needs at least one profile");

  WindowedResult merged;
  merged.detections.parent_name = image.name;
  for (const auto& profile : cfg.profiles) {
    if (profile.classes.empty()) continue;
    try {
      profile.validate();
      const RasterImage scaled = resample_for_profile(image, profile);
      const double native_per_pixel = image.gsd == scaled.gsd ? 1.0 : scaled.gsd / image.gsd;
      const TilingConfig tiling{{profile.window_px, tile_spec.overlap}, 1};
      auto run = run_windowed(scaled, tiling, *profile.detector, cfg.nms_iou, workers,
                              native_per_pixel, profile.name, profile.classes);
      merged.tile_count += run.tile_count;
      merged.timings.tile_seconds += run.timings.tile_seconds;
      merged.timings.detector_seconds += run.timings.detector_seconds;
      merged.timings.detect_stage_seconds += run.timings.detect_stage_seconds;
      merged.timings.stitch_seconds += run.timings.stitch_seconds;
      for (std::size_t i = 0; i < run.detections.detections.size(); ++i) {
        Detection d = run.detections.detections[i];
        if (native_per_pixel != 1.0) {
          d.box = clamp_box(d.box.scaled(native_per_pixel), image.width, image.height);
        }
        merged.detections.detections.push_back(d);
        merged.detections.provenance.push_back(run.detections.provenance[i]);
      }
    } catch (const Error& e) {
      throw Error(e.family(), "profile '" + profile.name + "': " + e.what());
    }
  }
  const auto start = Clock::now();
  merged.detections = global_nms(merged.detections, cfg.nms_iou);
  merged.timings.stitch_seconds += seconds_since(start);
  return merged;
}

double chip_count_ratio(double image_extent_m, double fine_window_m, double coarse_window_m,
                        const TileSpec& spec) {
  if (!(image_extent_m > 0.0 && fine_window_m > 0.0 && coarse_window_m > 0.0)) {
    throw Error(ErrorFamily::kInvalidArgument, "chip_count_ratio needs positive extents");
  }
  if (coarse_window_m < fine_window_m) {
    throw Error(ErrorFamily::kInvalidArgument, "coarse window must not be smaller than the fine one");
  }
  auto count = [&](double window_m) {
    const double gsd = window_m / spec.window;
    const int extent_px = std::max(1, static_cast<int>(std::lround(image_extent_m / gsd)));
    return static_cast<double>(plan_tiles(extent_px, extent_px, spec).size());
  };
  return count(coarse_window_m) / count(fine_window_m);
}

}  // namespace chipstitch
