#include <cstring>
#include <random>
#include <vector>

#include "chipstitch/kernels.hpp"
#include "doctest.h"

namespace k = chipstitch::kernels;

namespace {

bool avx2_available() { return k::detect_backend() == k::Backend::kAvx2; }

template <typename T>
bool bitwise_equal(const std::vector<T>& a, const std::vector<T>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

std::vector<float> random_floats(std::mt19937_64& rng, std::size_t n, float lo, float hi) {
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

struct Boxes {
  std::vector<double> xmin, ymin, xmax, ymax;
  k::BoxColumns cols() const { return {xmin, ymin, xmax, ymax}; }
};

Boxes random_boxes(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> pos(0.0, 50.0), side(0.0, 20.0);
  std::bernoulli_distribution degenerate(0.1), snap(0.3);
  Boxes b;
  for (std::size_t i = 0; i < n; ++i) {
    double x = pos(rng), y = pos(rng);
    if (snap(rng)) {
      x = std::round(x);
      y = std::round(y);
    }
    const double w = degenerate(rng) ? 0.0 : side(rng);
    const double h = degenerate(rng) ? 0.0 : side(rng);
    b.xmin.push_back(x);
    b.ymin.push_back(y);
    b.xmax.push_back(x + w);
    b.ymax.push_back(y + h);
  }
  return b;
}

}  // namespace

TEST_CASE("backend selection") {
  const auto initial = k::active_backend();
  CHECK(k::set_backend(k::Backend::kScalar));
  CHECK(k::active_backend() == k::Backend::kScalar);
  CHECK(k::set_backend(k::Backend::kAvx2) == avx2_available());
  CHECK(k::backend_name(k::Backend::kScalar) == "scalar");
  k::set_backend(initial);
}

TEST_CASE("iou_one_to_many: scalar and avx2 agree bitwise") {
  if (!avx2_available()) return;
  std::mt19937_64 rng(11);
  for (std::size_t n = 0; n < 70; ++n) {
    const Boxes b = random_boxes(rng, n);
    const Boxes q = random_boxes(rng, 1);
    std::vector<double> s(n), v(n);
    k::scalar::iou_one_to_many(q.xmin[0], q.ymin[0], q.xmax[0], q.ymax[0], b.cols(), s);
    k::avx2::iou_one_to_many(q.xmin[0], q.ymin[0], q.xmax[0], q.ymax[0], b.cols(), v);
    CHECK(bitwise_equal(s, v));
  }
}

TEST_CASE("iou_one_to_many matches the definition") {
  const Boxes b{{0, 20, 5, 3}, {0, 20, 0, 3}, {10, 30, 15, 3}, {10, 30, 10, 3}};
  std::vector<double> out(4);
  k::iou_one_to_many(0, 0, 10, 10, b.cols(), out);
  CHECK(out[0] == 1.0);
  CHECK(out[1] == 0.0);
  CHECK(out[2] == doctest::Approx(1.0 / 3.0));
  CHECK(out[3] == 0.0);
}

TEST_CASE("accumulate_weighted: scalar and avx2 agree bitwise") {
  if (!avx2_available()) return;
  std::mt19937_64 rng(12);
  for (std::size_t n = 0; n < 70; ++n) {
    const auto src = random_floats(rng, n, 0.0f, 255.0f);
    auto a = random_floats(rng, n, 0.0f, 1000.0f);
    auto b = a;
    k::scalar::accumulate_weighted(a, src, 0.37f);
    k::avx2::accumulate_weighted(b, src, 0.37f);
    CHECK(bitwise_equal(a, b));
  }
}

TEST_CASE("convolve_row: scalar and avx2 agree bitwise") {
  if (!avx2_available()) return;
  std::mt19937_64 rng(13);
  for (std::size_t taps_n : {1u, 3u, 7u, 13u}) {
    for (std::size_t n = 1; n < 50; ++n) {
      const auto taps = random_floats(rng, taps_n, 0.0f, 1.0f);
      const auto padded = random_floats(rng, n + taps_n - 1, 0.0f, 255.0f);
      std::vector<float> s(n), v(n);
      k::scalar::convolve_row(padded, taps, s);
      k::avx2::convolve_row(padded, taps, v);
      CHECK(bitwise_equal(s, v));
    }
  }
}

TEST_CASE("convolve_row computes the sliding dot product") {
  const std::vector<float> padded{1, 2, 3, 4, 5};
  const std::vector<float> taps{0.5f, 0.25f, 0.25f};
  std::vector<float> out(3);
  k::convolve_row(padded, taps, out);
  CHECK(out[0] == doctest::Approx(0.5 + 0.5 + 0.75));
  CHECK(out[2] == doctest::Approx(1.5 + 1.0 + 1.25));
}

TEST_CASE("decimate_2x2: scalar and avx2 agree bitwise") {
  if (!avx2_available()) return;
  std::mt19937_64 rng(14);
  for (std::size_t n = 0; n < 70; ++n) {
    const auto top = random_floats(rng, 2 * n, 0.0f, 255.0f);
    const auto bottom = random_floats(rng, 2 * n, 0.0f, 255.0f);
    std::vector<float> s(n), v(n);
    k::scalar::decimate_2x2(top, bottom, s);
    k::avx2::decimate_2x2(top, bottom, v);
    CHECK(bitwise_equal(s, v));
  }
}

TEST_CASE("decimate_2x2 averages each 2x2 block") {
  const std::vector<float> top{1, 3, 10, 20};
  const std::vector<float> bottom{5, 7, 30, 40};
  std::vector<float> out(2);
  k::decimate_2x2(top, bottom, out);
  CHECK(out[0] == 4.0f);
  CHECK(out[1] == 25.0f);
}
