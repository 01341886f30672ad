#pragma once

// Geometry and domain types shared by every stage of the pipeline.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace chipstitch {

// ============================================================================
// Errors
// ============================================================================

/// Broad error categories. The CLI maps each family to its own exit code.
enum class ErrorFamily {
  kInvalidArgument,  // precondition violated by a caller-supplied value
  kIo,               // unreadable / unwritable file
  kFormat,           // malformed file content or name
  kConfig,           // invalid or incomplete configuration
  kProcess,          // external detector process failed
  kFrame,            // detection in the wrong coordinate frame
};

std::string_view error_family_name(ErrorFamily family);

class Error : public std::runtime_error {
 public:
  Error(ErrorFamily family, const std::string& message)
      : std::runtime_error(message), family_(family) {}

  ErrorFamily family() const { return family_; }

 private:
  ErrorFamily family_;
};

/// Warnings go to stderr unless a handler is installed. Thread-safe.
using WarningHandler = std::function<void(std::string_view)>;
void set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

// ============================================================================
// Geometry
// ============================================================================

/// Axis-aligned box in pixels. Origin top-left, y grows downward.
struct BoundingBox {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (xmin + xmax); }
  double center_y() const { return 0.5 * (ymin + ymax); }
  bool valid() const { return xmin <= xmax && ymin <= ymax; }

  BoundingBox translated(double dx, double dy) const {
    return {xmin + dx, ymin + dy, xmax + dx, ymax + dy};
  }
  BoundingBox scaled(double factor) const {
    return {xmin * factor, ymin * factor, xmax * factor, ymax * factor};
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Intersection over union. Two boxes with zero union area give 0.
double iou(const BoundingBox& a, const BoundingBox& b);

/// Area of the intersection of two boxes (0 when disjoint).
double intersection_area(const BoundingBox& a, const BoundingBox& b);

/// Clip every coordinate into [0, width] x [0, height].
BoundingBox clamp_box(const BoundingBox& box, double width, double height);

/// Ground area covered by a pixel-space box.
double box_area_m2(const BoundingBox& box, double gsd);

/// Lexicographic (xmin, ymin, xmax, ymax) ordering.
bool box_less(const BoundingBox& a, const BoundingBox& b);

// ============================================================================
// Raster
// ============================================================================

/// Row-major 8-bit raster, bands interleaved per pixel.
struct RasterImage {
  std::string name;
  int width = 0;
  int height = 0;
  int bands = 1;
  std::vector<std::uint8_t> pixels;
  double gsd = 1.0;  // meters per pixel

  static RasterImage blank(std::string name, int width, int height, int bands, double gsd,
                           std::uint8_t fill = 0);

  /// Throws kInvalidArgument if any invariant is broken.
  void validate() const;

  std::size_t index(int x, int y, int band = 0) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
            static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(bands) +
           static_cast<std::size_t>(band);
  }
  std::uint8_t at(int x, int y, int band = 0) const { return pixels[index(x, y, band)]; }
  std::uint8_t& at(int x, int y, int band = 0) { return pixels[index(x, y, band)]; }

  double extent_x_m() const { return width * gsd; }
  double extent_y_m() const { return height * gsd; }
  double area_km2() const { return extent_x_m() * extent_y_m() / 1.0e6; }
};

// ============================================================================
// Classes, labels, detections
// ============================================================================

struct ClassInfo {
  int id = 0;
  std::string name;
  bool small_object = false;
};

/// Ordered class list; ids are dense from 0 and names unique.
class ClassTable {
 public:
  ClassTable() = default;
  explicit ClassTable(std::vector<ClassInfo> classes);

  /// Convenience constructor assigning ids 0..n-1.
  static ClassTable from_names(const std::vector<std::string>& names,
                               const std::vector<std::string>& small_objects = {});

  std::size_t size() const { return classes_.size(); }
  bool empty() const { return classes_.empty(); }
  bool contains(int id) const { return id >= 0 && static_cast<std::size_t>(id) < classes_.size(); }
  const ClassInfo& at(int id) const;
  const std::string& name(int id) const { return at(id).name; }
  std::optional<int> find(std::string_view name) const;
  /// Like find() but throws kFormat naming the unknown class.
  int id_of(std::string_view name) const;
  const std::vector<ClassInfo>& classes() const { return classes_; }

 private:
  std::vector<ClassInfo> classes_;
};

struct GroundTruthLabel {
  int class_id = 0;
  BoundingBox box;

  friend bool operator==(const GroundTruthLabel&, const GroundTruthLabel&) = default;
};

struct TileLocal {
  std::size_t tile_id = 0;
  friend bool operator==(const TileLocal&, const TileLocal&) = default;
};
struct Global {
  friend bool operator==(const Global&, const Global&) = default;
};
using Frame = std::variant<TileLocal, Global>;

struct Detection {
  int class_id = 0;
  BoundingBox box;
  double confidence = 1.0;
  Frame frame = Global{};

  bool is_global() const { return std::holds_alternative<Global>(frame); }

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Clamp a confidence into [0, 1]; out-of-range values emit a warning.
double sanitize_confidence(double confidence);

/// Canonical detection order: class, descending confidence, descending
/// area, then box.
bool detection_less(const Detection& a, const Detection& b);

}  // namespace chipstitch
