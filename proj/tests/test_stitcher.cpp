#include <algorithm>
#include <random>
#include <vector>

#include "chipstitch/detectors.hpp"
#include "chipstitch/stitcher.hpp"
#include "doctest.h"
#include "nms_oracle.hpp"
#include "test_util.hpp"

using namespace chipstitch;

namespace {

TileRecord tile_at(int row, int col, int size, int parent_h, int parent_w) {
  TileRecord t;
  t.parent_name = "scene";
  t.row = row;
  t.col = col;
  t.height = t.width = size;
  t.parent_height = parent_h;
  t.parent_width = parent_w;
  return t;
}

std::vector<Detection> random_detections(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> cls(0, 2);
  std::uniform_int_distribution<int> conf_step(1, 20);  // coarse steps force ties
  std::bernoulli_distribution integral(0.5);
  std::vector<Detection> out;
  for (std::size_t i = 0; i < n; ++i) {
    BoundingBox b = testutil::random_box(rng, 60.0, 25.0);
    if (integral(rng)) b = {std::round(b.xmin), std::round(b.ymin), std::round(b.xmax), std::round(b.ymax)};
    out.push_back({cls(rng), b, conf_step(rng) / 20.0});
  }
  return out;
}

}  // namespace

TEST_CASE("globalize examples") {
  const std::vector<Detection> local{{0, {10, 20, 50, 60}, 0.9, TileLocal{0}}};
  const auto origin = globalize(local, tile_at(0, 0, 416, 5000, 5000));
  CHECK(origin[0].box == BoundingBox{10, 20, 50, 60});
  CHECK(origin[0].is_global());
  const auto shifted = globalize(local, tile_at(1370, 1180, 416, 5000, 5000));
  CHECK(shifted[0].box == BoundingBox{1190, 1390, 1230, 1430});
  CHECK(shifted[0].confidence == 0.9);
}

TEST_CASE("globalize round trip through the cutout name") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> off(0, 4000);
  for (int i = 0; i < 200; ++i) {
    const int row = off(rng), col = off(rng);
    const auto parsed = parse_cutout_name(cutout_name("p", row, col, 416, 416, "png"));
    const auto tile = tile_at(parsed.row, parsed.col, 416, 5000, 5000);
    const BoundingBox b{std::floor(testutil::random_box(rng, 300, 100).xmin), 3, 200, 250};
    const auto g = globalize({{0, b, 1.0, TileLocal{0}}}, tile);
    CHECK(g[0].box.translated(-parsed.col, -parsed.row) == b);
  }
}

TEST_CASE("globalize undoes upsampling and clamps") {
  auto t = tile_at(100, 200, 50, 140, 240);
  t.upsample = 2;
  const auto g = globalize({{0, {20, 40, 100, 100}, 1.0, TileLocal{0}}}, t);
  CHECK(g[0].box == BoundingBox{210, 120, 240, 140});
}

TEST_CASE("globalize rejects global input and unknown extents") {
  try {
    globalize({{0, {0, 0, 1, 1}, 1.0, Global{}}}, tile_at(0, 0, 10, 10, 10));
    FAIL("accepted a global detection");
  } catch (const Error& e) {
    CHECK(e.family() == ErrorFamily::kFrame);
  }
  CHECK_THROWS_AS(globalize({{0, {0, 0, 1, 1}, 1.0, TileLocal{0}}}, tile_at(0, 0, 10, 0, 0)), Error);
}

TEST_CASE("global_nms examples") {
  const Detection a{0, {0, 0, 10, 10}, 0.9};
  const Detection b{0, {0, 0, 10, 10}, 0.8};
  const Detection c{1, {0, 0, 10, 10}, 0.8};
  CHECK(global_nms({a}, 0.5) == std::vector<Detection>{a});
  CHECK(global_nms({b, a}, 0.5) == std::vector<Detection>{a});
  CHECK(global_nms({a, c}, 0.5).size() == 2);
  CHECK(global_nms(std::vector<Detection>{}, 0.5).empty());
  // IoU exactly at the threshold is kept.
  const Detection half{0, {5, 0, 15, 10}, 0.5};
  CHECK(global_nms({a, half}, 1.0 / 3.0).size() == 2);
  CHECK_THROWS_AS(global_nms({a}, 0.0), Error);
  CHECK_THROWS_AS(global_nms({a}, 1.5), Error);
  CHECK_THROWS_AS(global_nms({{0, {0, 0, 1, 1}, 1.0, TileLocal{0}}}, 0.5), Error);
}

TEST_CASE("global_nms matches the quadratic reference") {
  std::mt19937_64 rng(22);
  std::uniform_int_distribution<std::size_t> size(0, 120);
  for (int round = 0; round < 150; ++round) {
    const auto dets = random_detections(rng, size(rng));
    for (double thr : {0.3, 0.5, 0.7}) {
      CHECK(testutil::as_multiset(global_nms(dets, thr)) ==
            testutil::as_multiset(testutil::brute_force_nms(dets, thr)));
    }
  }
}

TEST_CASE("global_nms output is canonical and idempotent") {
  std::mt19937_64 rng(23);
  const auto dets = random_detections(rng, 150);
  const auto kept = global_nms(dets, 0.5);
  CHECK(std::is_sorted(kept.begin(), kept.end(), detection_less));
  CHECK(global_nms(kept, 0.5) == kept);
  auto shuffled = dets;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CHECK(global_nms(shuffled, 0.5) == kept);
}

TEST_CASE("stitch merges overlap-strip duplicates") {
  const int extent = 769;  // two 416 tiles at stride 353
  const auto left = tile_at(0, 0, 416, 416, extent);
  const auto right = tile_at(0, 353, 416, 416, extent);
  // Object at x in [370, 400): inside both tiles.
  std::vector<TileDetections> per_tile{
      {left, {{0, {370, 100, 400, 130}, 0.95, TileLocal{0}}}},
      {right, {{0, {17, 100, 47, 130}, 0.90, TileLocal{1}}}},
  };
  const auto set = stitch(per_tile, 0.5);
  REQUIRE(set.detections.size() == 1);
  CHECK(set.detections[0].confidence == 0.95);
  CHECK(set.provenance[0].tile_col == 0);
  CHECK(set.parent_name == "scene");

  std::vector<TileDetections> empty{{left, {}}, {right, {}}};
  CHECK(stitch(empty, 0.5).detections.empty());
}

TEST_CASE("stitch equals globalize plus nms for one tile") {
  std::mt19937_64 rng(24);
  auto dets = random_detections(rng, 80);
  for (auto& d : dets) d.frame = TileLocal{0};
  const auto t = tile_at(0, 0, 100, 100, 100);
  const std::vector<TileDetections> one{{t, dets}};
  CHECK(stitch(one, 0.5).detections == global_nms(globalize(dets, t), 0.5));
}

TEST_CASE("stitch is order independent") {
  std::mt19937_64 rng(25);
  std::vector<TileDetections> per_tile;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      auto dets = random_detections(rng, 30);
      for (auto& d : dets) d.frame = TileLocal{per_tile.size()};
      per_tile.push_back({tile_at(r * 50, c * 50, 60, 160, 160), dets});
    }
  }
  const auto ref = stitch(per_tile, 0.5);
  for (int i = 0; i < 10; ++i) {
    std::shuffle(per_tile.begin(), per_tile.end(), rng);
    const auto got = stitch(per_tile, 0.5);
    CHECK(got.detections == ref.detections);
    CHECK(got.provenance == ref.provenance);
  }
}

TEST_CASE("stitch rejects mixed parents") {
  auto a = tile_at(0, 0, 10, 10, 10);
  auto b = a;
  b.parent_name = "other";
  std::vector<TileDetections> per_tile{{a, {}}, {b, {}}};
  CHECK_THROWS_AS(stitch(per_tile, 0.5), Error);
}
