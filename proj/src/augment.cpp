#include "chipstitch/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "chipstitch/kernels.hpp"

namespace chipstitch {

namespace {

std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// Exact cos/sin at multiples of 90 degrees so quarter turns permute pixels.
std::pair<double, double> cos_sin_deg(double angle_deg) {
  double a = std::fmod(angle_deg, 360.0);
  if (a < 0.0) a += 360.0;
  if (a == 0.0) return {1.0, 0.0};
  if (a == 90.0) return {0.0, 1.0};
  if (a == 180.0) return {-1.0, 0.0};
  if (a == 270.0) return {0.0, -1.0};
  const double rad = a * std::numbers::pi / 180.0;
  return {std::cos(rad), std::sin(rad)};
}

double draw(std::mt19937_64& rng, const ScaleRange& r) {
  if (r.hi <= r.lo) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

void AugmentSpec::validate() const {
  for (const auto* r : {&hue, &saturation, &value}) {
    if (!(r->lo > 0.0) || !(r->hi >= r->lo)) {
      throw Error(ErrorFamily::kInvalidArgument, "HSV scale ranges must be positive with lo <= hi");
    }
  }
}

LabeledChip rotate_chip(const LabeledChip& chip, double angle_deg, std::uint8_t fill) {
  const RasterImage& src = chip.image;
  src.validate();
  if (src.width != src.height) {
    throw Error(ErrorFamily::kInvalidArgument,
                "rotate_chip needs a square chip, got " + std::to_string(src.width) + "x" +
                    std::to_string(src.height));
  }
  const auto [c, s] = cos_sin_deg(angle_deg);
  const int n = src.width;
  const double center = n / 2.0;

  LabeledChip out;
  out.image = RasterImage::blank(src.name, n, n, src.bands, src.gsd, fill);
  auto sample = [&](int x, int y, int b) -> double {
    if (x < 0 || y < 0 || x >= n || y >= n) return fill;
    return src.at(x, y, b);
  };
  for (int v = 0; v < n; ++v) {
    for (int u = 0; u < n; ++u) {
      // Inverse map: output pixel centre back into the source.
      const double dx = u + 0.5 - center;
      const double dy = v + 0.5 - center;
      const double sx = center + dx * c - dy * s - 0.5;
      const double sy = center + dx * s + dy * c - 0.5;
      const double fx = std::floor(sx);
      const double fy = std::floor(sy);
      const double ax = sx - fx;
      const double ay = sy - fy;
      const int x0 = static_cast<int>(fx);
      const int y0 = static_cast<int>(fy);
      if (x0 < -1 || y0 < -1 || x0 >= n || y0 >= n) continue;
      for (int b = 0; b < src.bands; ++b) {
        const double top = sample(x0, y0, b) * (1.0 - ax) + sample(x0 + 1, y0, b) * ax;
        const double bottom = sample(x0, y0 + 1, b) * (1.0 - ax) + sample(x0 + 1, y0 + 1, b) * ax;
        out.image.at(u, v, b) = to_u8(top * (1.0 - ay) + bottom * ay);
      }
    }
  }

  for (const auto& label : chip.labels) {
    const std::array<std::pair<double, double>, 4> corners{{{label.box.xmin, label.box.ymin},
                                                            {label.box.xmax, label.box.ymin},
                                                            {label.box.xmin, label.box.ymax},
                                                            {label.box.xmax, label.box.ymax}}};
    BoundingBox hull{INFINITY, INFINITY, -INFINITY, -INFINITY};
    for (const auto& [x, y] : corners) {
      const double dx = x - center;
      const double dy = y - center;
      const double rx = center + dx * c + dy * s;
      const double ry = center - dx * s + dy * c;
      hull = {std::min(hull.xmin, rx), std::min(hull.ymin, ry), std::max(hull.xmax, rx),
              std::max(hull.ymax, ry)};
    }
    hull = clamp_box(hull, n, n);
    if (hull.area() > 0.0) out.labels.push_back({label.class_id, hull});
  }
  return out;
}

RasterImage hsv_jitter(const RasterImage& image, const AugmentSpec& spec, std::uint64_t stream) {
  image.validate();
  spec.validate();
  if (image.bands != 3) {
    throw Error(ErrorFamily::kInvalidArgument,
                "hsv_jitter needs a 3-band image, got " + std::to_string(image.bands));
  }
  std::mt19937_64 rng(mix(spec.seed, stream));
  const double fh = draw(rng, spec.hue);
  const double fs = draw(rng, spec.saturation);
  const double fv = draw(rng, spec.value);

  RasterImage out = image;
  const std::size_t count = static_cast<std::size_t>(image.width) * image.height;
  for (std::size_t p = 0; p < count; ++p) {
    const double r = image.pixels[3 * p] / 255.0;
    const double g = image.pixels[3 * p + 1] / 255.0;
    const double b = image.pixels[3 * p + 2] / 255.0;
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double delta = mx - mn;
    double h = 0.0;
    if (delta > 0.0) {
      if (mx == r) {
        h = 60.0 * std::fmod((g - b) / delta, 6.0);
      } else if (mx == g) {
        h = 60.0 * ((b - r) / delta + 2.0);
      } else {
        h = 60.0 * ((r - g) / delta + 4.0);
      }
      if (h < 0.0) h += 360.0;
    }
    double sat = mx > 0.0 ? delta / mx : 0.0;
    double val = mx;

    h = std::fmod(h * fh, 360.0);
    if (h < 0.0) h += 360.0;
    sat = std::clamp(sat * fs, 0.0, 1.0);
    val = std::clamp(val * fv, 0.0, 1.0);

    const double chroma = val * sat;
    const double hp = h / 60.0;
    const double x = chroma * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r1 = 0, g1 = 0, b1 = 0;
    switch (static_cast<int>(hp) % 6) {
      case 0: r1 = chroma, g1 = x; break;
      case 1: r1 = x, g1 = chroma; break;
      case 2: g1 = chroma, b1 = x; break;
      case 3: g1 = x, b1 = chroma; break;
      case 4: r1 = x, b1 = chroma; break;
      default: r1 = chroma, b1 = x; break;
    }
    const double m = val - chroma;
    out.pixels[3 * p] = to_u8((r1 + m) * 255.0);
    out.pixels[3 * p + 1] = to_u8((g1 + m) * 255.0);
    out.pixels[3 * p + 2] = to_u8((b1 + m) * 255.0);
  }
  return out;
}

RasterImage degrade_resolution(const RasterImage& image, double sigma_px) {
  image.validate();
  if (image.width < 2 || image.height < 2) {
    throw Error(ErrorFamily::kInvalidArgument, "degrade_resolution needs an image of at least 2x2");
  }
  if (!(sigma_px >= 0.0)) throw Error(ErrorFamily::kInvalidArgument, "blur sigma must be >= 0");

  const int w = image.width;
  const int h = image.height;
  const int bands = image.bands;
  const int radius = sigma_px > 0.0 ? static_cast<int>(std::ceil(3.0 * sigma_px)) : 0;
  std::vector<float> taps(static_cast<std::size_t>(2 * radius + 1), 1.0f);
  if (radius > 0) {
    double sum = 0.0;
    std::vector<double> g(taps.size());
    for (int k = -radius; k <= radius; ++k) {
      g[k + radius] = std::exp(-0.5 * k * k / (sigma_px * sigma_px));
      sum += g[k + radius];
    }
    for (std::size_t k = 0; k < taps.size(); ++k) taps[k] = static_cast<float>(g[k] / sum);
  }

  const int out_w = w / 2;
  const int out_h = h / 2;
  RasterImage out = RasterImage::blank(image.name, out_w, out_h, bands, image.gsd * 2.0);

  const std::size_t plane = static_cast<std::size_t>(w) * h;
  std::vector<float> horiz(plane);
  std::vector<float> padded(static_cast<std::size_t>(w + 2 * radius));
  std::vector<float> rows(static_cast<std::size_t>(2 * w));
  std::vector<float> decimated(static_cast<std::size_t>(out_w));

  for (int b = 0; b < bands; ++b) {
    for (int y = 0; y < h; ++y) {
      for (int x = -radius; x < w + radius; ++x) {
        padded[x + radius] = image.at(std::clamp(x, 0, w - 1), y, b);
      }
      kernels::convolve_row(padded, taps,
                            std::span<float>(horiz).subspan(static_cast<std::size_t>(y) * w, w));
    }
    for (int j = 0; j < out_h; ++j) {
      for (int half = 0; half < 2; ++half) {
        const int y = 2 * j + half;
        std::span<float> acc = std::span<float>(rows).subspan(static_cast<std::size_t>(half) * w, w);
        std::fill(acc.begin(), acc.end(), 0.0f);
        for (int k = -radius; k <= radius; ++k) {
          const int sy = std::clamp(y + k, 0, h - 1);
          kernels::accumulate_weighted(
              acc, std::span<const float>(horiz).subspan(static_cast<std::size_t>(sy) * w, w),
              taps[k + radius]);
        }
      }
      kernels::decimate_2x2(std::span<const float>(rows).subspan(0, 2 * out_w),
                            std::span<const float>(rows).subspan(w, 2 * out_w), decimated);
      for (int i = 0; i < out_w; ++i) out.at(i, j, b) = to_u8(decimated[i]);
    }
  }
  return out;
}

BoundingBox centroid_to_box(double cx, double cy, double object_m, double gsd) {
  if (!(gsd > 0.0) || !(object_m > 0.0)) {
    throw Error(ErrorFamily::kInvalidArgument, "centroid_to_box needs positive size and gsd");
  }
  const double half = object_m / gsd / 2.0;
  return {cx - half, cy - half, cx + half, cy + half};
}

int chip_window_px(double chip_window_m, double gsd) {
  if (!(gsd > 0.0)) throw Error(ErrorFamily::kInvalidArgument, "chip cutting needs a positive gsd");
  const long px = std::lround(chip_window_m / gsd);
  if (!(chip_window_m > 0.0) || px < 1) {
    throw Error(ErrorFamily::kInvalidArgument, "chip window of " + std::to_string(chip_window_m) +
                                                   " m is smaller than one pixel");
  }
  return static_cast<int>(px);
}

std::vector<LabeledChip> cut_training_chips(const RasterImage& image,
                                            const std::vector<GroundTruthLabel>& labels,
                                            double chip_window_m, const ChipCutOptions& options) {
  image.validate();
  const int window = chip_window_px(chip_window_m, image.gsd);
  if (!(options.empty_fraction >= 0.0 && options.empty_fraction <= 1.0)) {
    throw Error(ErrorFamily::kInvalidArgument, "empty_fraction must lie in [0, 1]");
  }
  const auto tiles = extract_tiles(image, TileSpec{window, options.overlap});

  std::vector<LabeledChip> chips;
  for (const auto& tile : tiles) {
    auto inside = labels_inside(labels, tile.rect());
    if (inside.empty()) {
      std::mt19937_64 rng(mix(mix(options.seed, static_cast<std::uint64_t>(tile.row)),
                              static_cast<std::uint64_t>(tile.col)));
      if (!(std::uniform_real_distribution<double>(0.0, 1.0)(rng) < options.empty_fraction)) continue;
    }
    LabeledChip chip;
    chip.image = tile.as_image(image.gsd);
    for (auto& l : inside) l.box = l.box.translated(-tile.col, -tile.row);
    chip.labels = std::move(inside);
    chips.push_back(std::move(chip));
  }
  return chips;
}

}  // namespace chipstitch
