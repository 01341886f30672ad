#include <random>
#include <string>
#include <vector>

#include "chipstitch/core.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace chipstitch;

namespace {

// Cell-counting IoU for integer boxes.
double raster_iou(int ax0, int ay0, int ax1, int ay1, int bx0, int by0, int bx1, int by1) {
  long inter = 0, uni = 0;
  const int lo = std::min(ax0, bx0) - 1, hi = std::max(ax1, bx1) + 1;
  const int ylo = std::min(ay0, by0) - 1, yhi = std::max(ay1, by1) + 1;
  for (int y = ylo; y < yhi; ++y) {
    for (int x = lo; x < hi; ++x) {
      const bool in_a = x >= ax0 && x < ax1 && y >= ay0 && y < ay1;
      const bool in_b = x >= bx0 && x < bx1 && y >= by0 && y < by1;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

TEST_CASE("iou examples") {
  CHECK(iou({0, 0, 10, 10}, {0, 0, 10, 10}) == 1.0);
  CHECK(iou({0, 0, 10, 10}, {20, 20, 30, 30}) == 0.0);
  CHECK(iou({0, 0, 10, 10}, {5, 0, 15, 10}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(iou({3, 3, 3, 3}, {3, 3, 3, 3}) == 0.0);
}

TEST_CASE("iou agrees with cell counting and is symmetric") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> pos(0, 30), side(1, 15);
  for (int i = 0; i < 400; ++i) {
    const int ax = pos(rng), ay = pos(rng), aw = side(rng), ah = side(rng);
    const int bx = pos(rng), by = pos(rng), bw = side(rng), bh = side(rng);
    const BoundingBox a{double(ax), double(ay), double(ax + aw), double(ay + ah)};
    const BoundingBox b{double(bx), double(by), double(bx + bw), double(by + bh)};
    const double v = iou(a, b);
    CHECK(v == doctest::Approx(raster_iou(ax, ay, ax + aw, ay + ah, bx, by, bx + bw, by + bh)));
    CHECK(v == iou(b, a));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("clamp_box examples") {
  CHECK(clamp_box({5, 5, 10, 10}, 100, 100) == BoundingBox{5, 5, 10, 10});
  CHECK(clamp_box({-3, -3, 10, 10}, 100, 100) == BoundingBox{0, 0, 10, 10});
  CHECK(clamp_box({90, 90, 120, 130}, 100, 100) == BoundingBox{90, 90, 100, 100});
}

TEST_CASE("box_area_m2 examples") {
  CHECK(box_area_m2({0, 0, 10, 10}, 0.3) == doctest::Approx(9.0));
  CHECK(box_area_m2({4, 4, 4, 4}, 0.3) == 0.0);
  CHECK(box_area_m2({0, 0, 416, 416}, 0.3) == doctest::Approx(15575.04));
  CHECK_THROWS_AS(box_area_m2({0, 0, 1, 1}, 0.0), Error);
}

TEST_CASE("raster validation") {
  auto img = RasterImage::blank("a", 4, 3, 3, 0.5, 7);
  CHECK(img.pixels.size() == 36);
  CHECK(img.at(3, 2, 2) == 7);
  CHECK_NOTHROW(img.validate());
  img.pixels.pop_back();
  CHECK_THROWS_AS(img.validate(), Error);
  CHECK_THROWS_AS(RasterImage::blank("a", 0, 3, 1, 1.0), Error);
  CHECK_THROWS_AS(RasterImage::blank("a", 2, 3, 2, 1.0), Error);
  auto bad_gsd = RasterImage::blank("a", 2, 2, 1, 1.0);
  bad_gsd.gsd = 0.0;
  CHECK_THROWS_AS(bad_gsd.validate(), Error);
  CHECK(RasterImage::blank("a", 5000, 5000, 1, 0.3).area_km2() == doctest::Approx(2.25));
}

TEST_CASE("class table") {
  const auto t = ClassTable::from_names({"car", "airport"}, {"car"});
  CHECK(t.size() == 2);
  CHECK(t.id_of("airport") == 1);
  CHECK(t.at(0).small_object);
  CHECK_FALSE(t.at(1).small_object);
  CHECK_FALSE(t.find("boat").has_value());
  try {
    (void)t.id_of("boat");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.family() == ErrorFamily::kFormat);
  }
  CHECK_THROWS_AS(ClassTable::from_names({"car", "car"}), Error);
  CHECK_THROWS_AS(ClassTable({{1, "car", false}}), Error);
}

TEST_CASE("confidence sanitizing warns") {
  std::vector<std::string> seen;
  set_warning_handler([&](std::string_view m) { seen.emplace_back(m); });
  CHECK(sanitize_confidence(1.7) == 1.0);
  CHECK(sanitize_confidence(-0.2) == 0.0);
  CHECK(sanitize_confidence(0.4) == 0.4);
  set_warning_handler(nullptr);
  CHECK(seen.size() == 2);
}

TEST_CASE("canonical detection order") {
  Detection a{0, {0, 0, 1, 1}, 0.5};
  Detection b{0, {0, 0, 1, 1}, 0.9};
  Detection c{1, {0, 0, 1, 1}, 0.99};
  Detection d{0, {1, 0, 2, 1}, 0.5};
  CHECK(detection_less(b, a));
  CHECK(detection_less(a, d));
  CHECK(detection_less(a, c));
  CHECK_FALSE(detection_less(a, a));
}
