#pragma once

// Data-parallel inner loops with a scalar reference and an AVX2 variant.
//
// Every kernel is written so that both backends perform the same IEEE
// operations in the same order (no fused multiply-add), making the results
// bitwise identical. tests/test_kernels.cpp holds the equivalence checks.

#include <cstddef>
#include <span>
#include <string_view>

namespace chipstitch::kernels {

enum class Backend { kScalar, kAvx2 };

/// Best backend supported by the running CPU.
Backend detect_backend();
/// Backend currently used by the dispatching entry points.
Backend active_backend();
/// Force a backend. Selecting kAvx2 on a CPU without it falls back to scalar
/// and returns false.
bool set_backend(Backend backend);
std::string_view backend_name(Backend backend);

/// Boxes in structure-of-arrays layout.
struct BoxColumns {
  std::span<const double> xmin;
  std::span<const double> ymin;
  std::span<const double> xmax;
  std::span<const double> ymax;

  std::size_t size() const { return xmin.size(); }
};

/// out[i] = IoU(query, boxes[i]); 0 where the union is empty.
void iou_one_to_many(double qxmin, double qymin, double qxmax, double qymax,
                     const BoxColumns& boxes, std::span<double> out);

/// dst[i] += weight * src[i]
void accumulate_weighted(std::span<float> dst, std::span<const float> src, float weight);

/// out[i] = sum_k taps[k] * padded[i + k]; `padded` holds out.size() + taps.size() - 1 values.
void convolve_row(std::span<const float> padded, std::span<const float> taps, std::span<float> out);

/// out[i] = ((top[2i] + top[2i+1]) + (bottom[2i] + bottom[2i+1])) * 0.25
void decimate_2x2(std::span<const float> top, std::span<const float> bottom, std::span<float> out);

// Direct access to each backend, for equivalence tests and benchmarks.
namespace scalar {
void iou_one_to_many(double qxmin, double qymin, double qxmax, double qymax,
                     const BoxColumns& boxes, std::span<double> out);
void accumulate_weighted(std::span<float> dst, std::span<const float> src, float weight);
void convolve_row(std::span<const float> padded, std::span<const float> taps, std::span<float> out);
void decimate_2x2(std::span<const float> top, std::span<const float> bottom, std::span<float> out);
}  // namespace scalar

namespace avx2 {
void iou_one_to_many(double qxmin, double qymin, double qxmax, double qymax,
                     const BoxColumns& boxes, std::span<double> out);
void accumulate_weighted(std::span<float> dst, std::span<const float> src, float weight);
void convolve_row(std::span<const float> padded, std::span<const float> taps, std::span<float> out);
void decimate_2x2(std::span<const float> top, std::span<const float> bottom, std::span<float> out);
}  // namespace avx2

}  // namespace chipstitch::kernels
