#include <atomic>

#include "chipstitch/kernels.hpp"

namespace chipstitch::kernels {

namespace {

bool cpu_has_avx2() {
#if (defined(__x86_64__) || defined(__i386__)) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> backend{detect_backend()};
  return backend;
}

}  // namespace

Backend detect_backend() { return cpu_has_avx2() ? Backend::kAvx2 : Backend::kScalar; }

Backend active_backend() { return current().load(std::memory_order_relaxed); }

bool set_backend(Backend backend) {
  if (backend == Backend::kAvx2 && !cpu_has_avx2()) {
    current().store(Backend::kScalar);
    return false;
  }
  current().store(backend);
  return true;
}

std::string_view backend_name(Backend backend) {
  return backend == Backend::kAvx2 ? "avx2" : "scalar";
}

void iou_one_to_many(double qxmin, double qymin, double qxmax, double qymax,
                     const BoxColumns& boxes, std::span<double> out) {
  if (active_backend() == Backend::kAvx2) {
    avx2::iou_one_to_many(qxmin, qymin, qxmax, qymax, boxes, out);
  } else {
    scalar::iou_one_to_many(qxmin, qymin, qxmax, qymax, boxes, out);
  }
}

void accumulate_weighted(std::span<float> dst, std::span<const float> src, float weight) {
  if (active_backend() == Backend::kAvx2) {
    avx2::accumulate_weighted(dst, src, weight);
  } else {
    scalar::accumulate_weighted(dst, src, weight);
  }
}

void convolve_row(std::span<const float> padded, std::span<const float> taps, std::span<float> out) {
  if (active_backend() == Backend::kAvx2) {
    avx2::convolve_row(padded, taps, out);
  } else {
    scalar::convolve_row(padded, taps, out);
  }
}

void decimate_2x2(std::span<const float> top, std::span<const float> bottom, std::span<float> out) {
  if (active_backend() == Backend::kAvx2) {
    avx2::decimate_2x2(top, bottom, out);
  } else {
    scalar::decimate_2x2(top, bottom, out);
  }
}

}  // namespace chipstitch::kernels
