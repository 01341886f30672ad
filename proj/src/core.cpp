#include "chipstitch/core.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <mutex>
#include <tuple>
#include <unordered_set>

namespace chipstitch {

std::string_view error_family_name(ErrorFamily family) {
  switch (family) {
    case ErrorFamily::kInvalidArgument: return "invalid-argument";
    case ErrorFamily::kIo: return "io";
    case ErrorFamily::kFormat: return "format";
    case ErrorFamily::kConfig: return "config";
    case ErrorFamily::kProcess: return "process";
    case ErrorFamily::kFrame: return "frame";
  }
  return "unknown";
}

namespace {

std::mutex& warning_mutex() {
  static std::mutex m;
  return m;
}

WarningHandler& warning_handler() {
  static WarningHandler handler;
  return handler;
}

}  // namespace

void set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(warning_mutex());
  warning_handler() = std::move(handler);
}

void warn(std::string_view message) {
  std::lock_guard lock(warning_mutex());
  if (warning_handler()) {
    warning_handler()(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

double intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
  const double ih = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

BoundingBox clamp_box(const BoundingBox& box, double width, double height) {
  return {std::clamp(box.xmin, 0.0, width), std::clamp(box.ymin, 0.0, height),
          std::clamp(box.xmax, 0.0, width), std::clamp(box.ymax, 0.0, height)};
}

double box_area_m2(const BoundingBox& box, double gsd) {
  if (!(gsd > 0.0)) throw Error(ErrorFamily::kInvalidArgument, "gsd must be > 0");
  return box.area() * gsd * gsd;
}

bool box_less(const BoundingBox& a, const BoundingBox& b) {
  return std::tie(a.xmin, a.ymin, a.xmax, a.ymax) < std::tie(b.xmin, b.ymin, b.xmax, b.ymax);
}

RasterImage RasterImage::blank(std::string name, int width, int height, int bands, double gsd,
                               std::uint8_t fill) {
  RasterImage img;
  img.name = std::move(name);
  img.width = width;
  img.height = height;
  img.bands = bands;
  img.gsd = gsd;
  if (width < 1 || height < 1 || (bands != 1 && bands != 3)) {
    throw Error(ErrorFamily::kInvalidArgument, "raster dimensions must be positive with 1 or 3 bands");
  }
  img.pixels.assign(static_cast<std::size_t>(width) * height * bands, fill);
  img.validate();
  return img;
}

void RasterImage::validate() const {
  if (width < 1 || height < 1) {
    throw Error(ErrorFamily::kInvalidArgument,
                "raster '" + name + "' has non-positive dimensions");
  }
  if (bands != 1 && bands != 3) {
    throw Error(ErrorFamily::kInvalidArgument,
                "raster '" + name + "' must have 1 or 3 bands, got " + std::to_string(bands));
  }
  if (!(gsd > 0.0) || !std::isfinite(gsd)) {
    throw Error(ErrorFamily::kInvalidArgument, "raster '" + name + "' has non-positive gsd");
  }
  if (pixels.size() != static_cast<std::size_t>(width) * height * bands) {
    throw Error(ErrorFamily::kInvalidArgument,
                "raster '" + name + "' pixel buffer does not match width x height x bands");
  }
}

ClassTable::ClassTable(std::vector<ClassInfo> classes) : classes_(std::move(classes)) {
  std::unordered_set<std::string> names;
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i].id != static_cast<int>(i)) {
      throw Error(ErrorFamily::kConfig, "class ids must be dense from 0");
    }
    if (classes_[i].name.empty()) {
      throw Error(ErrorFamily::kConfig, "class names must be non-empty");
    }
    if (!names.insert(classes_[i].name).second) {
      throw Error(ErrorFamily::kConfig, "duplicate class name '" + classes_[i].name + "'");
    }
  }
}

ClassTable ClassTable::from_names(const std::vector<std::string>& names,
                                  const std::vector<std::string>& small_objects) {
  std::vector<ClassInfo> classes;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const bool small =
        std::find(small_objects.begin(), small_objects.end(), names[i]) != small_objects.end();
    classes.push_back({static_cast<int>(i), names[i], small});
  }
  return ClassTable(std::move(classes));
}

const ClassInfo& ClassTable::at(int id) const {
  if (!contains(id)) {
    throw Error(ErrorFamily::kInvalidArgument, "class id " + std::to_string(id) + " out of range");
  }
  return classes_[static_cast<std::size_t>(id)];
}

std::optional<int> ClassTable::find(std::string_view name) const {
  for (const auto& c : classes_) {
    if (c.name == name) return c.id;
  }
  return std::nullopt;
}

int ClassTable::id_of(std::string_view name) const {
  if (auto id = find(name)) return *id;
  throw Error(ErrorFamily::kFormat, "unknown class name '" + std::string(name) + "'");
}

double sanitize_confidence(double confidence) {
  if (std::isnan(confidence)) {
    warn("confidence is NaN; treating as 0");
    return 0.0;
  }
  if (confidence < 0.0 || confidence > 1.0) {
    const double clamped = std::clamp(confidence, 0.0, 1.0);
    warn("confidence " + std::to_string(confidence) + " outside [0,1]; clamped to " +
         std::to_string(clamped));
    return clamped;
  }
  return confidence;
}

bool detection_less(const Detection& a, const Detection& b) {
  if (a.class_id != b.class_id) return a.class_id < b.class_id;
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  // Equal confidence: the larger box first, so a complete box outranks
  // clipped copies of itself.
  const double area_a = a.box.area(), area_b = b.box.area();
  if (area_a != area_b) return area_a > area_b;
  return box_less(a.box, b.box);
}

}  // namespace chipstitch
