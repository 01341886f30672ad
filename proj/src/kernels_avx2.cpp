// Compiled with -mavx2 (see src/CMakeLists.txt). Only reached through the
// dispatcher after a CPUID check.

#include "chipstitch/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>
#define CHIPSTITCH_HAVE_AVX2_TU 1
#endif

namespace chipstitch::kernels::avx2 {

#ifdef CHIPSTITCH_HAVE_AVX2_TU

void iou_one_to_many(double qxmin, double qymin, double qxmax, double qymax,
                     const BoxColumns& boxes, std::span<double> out) {
  const std::size_t n = boxes.size();
  const double qarea = (qxmax - qxmin) * (qymax - qymin);
  const __m256d vqxmin = _mm256_set1_pd(qxmin);
  const __m256d vqymin = _mm256_set1_pd(qymin);
  const __m256d vqxmax = _mm256_set1_pd(qxmax);
  const __m256d vqymax = _mm256_set1_pd(qymax);
  const __m256d vqarea = _mm256_set1_pd(qarea);
  const __m256d zero = _mm256_setzero_pd();

  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d bxmin = _mm256_loadu_pd(boxes.xmin.data() + i);
    const __m256d bymin = _mm256_loadu_pd(boxes.ymin.data() + i);
    const __m256d bxmax = _mm256_loadu_pd(boxes.xmax.data() + i);
    const __m256d bymax = _mm256_loadu_pd(boxes.ymax.data() + i);

    __m256d iw = _mm256_sub_pd(_mm256_min_pd(vqxmax, bxmax), _mm256_max_pd(vqxmin, bxmin));
    __m256d ih = _mm256_sub_pd(_mm256_min_pd(vqymax, bymax), _mm256_max_pd(vqymin, bymin));
    iw = _mm256_and_pd(iw, _mm256_cmp_pd(iw, zero, _CMP_GT_OQ));
    ih = _mm256_and_pd(ih, _mm256_cmp_pd(ih, zero, _CMP_GT_OQ));
    const __m256d inter = _mm256_mul_pd(iw, ih);
    const __m256d barea = _mm256_mul_pd(_mm256_sub_pd(bxmax, bxmin), _mm256_sub_pd(bymax, bymin));
    const __m256d uni = _mm256_sub_pd(_mm256_add_pd(vqarea, barea), inter);
    const __m256d ratio = _mm256_div_pd(inter, uni);
    _mm256_storeu_pd(out.data() + i, _mm256_and_pd(ratio, _mm256_cmp_pd(uni, zero, _CMP_GT_OQ)));
  }
  if (i < n) {
    BoxColumns tail{boxes.xmin.subspan(i), boxes.ymin.subspan(i), boxes.xmax.subspan(i),
                    boxes.ymax.subspan(i)};
    scalar::iou_one_to_many(qxmin, qymin, qxmax, qymax, tail, out.subspan(i));
  }
}

void accumulate_weighted(std::span<float> dst, std::span<const float> src, float weight) {
  const std::size_t n = dst.size();
  const __m256 w = _mm256_set1_ps(weight);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 term = _mm256_mul_ps(w, _mm256_loadu_ps(src.data() + i));
    _mm256_storeu_ps(dst.data() + i, _mm256_add_ps(_mm256_loadu_ps(dst.data() + i), term));
  }
  if (i < n) scalar::accumulate_weighted(dst.subspan(i), src.subspan(i), weight);
}

void convolve_row(std::span<const float> padded, std::span<const float> taps, std::span<float> out) {
  const std::size_t n = out.size();
  const std::size_t k = taps.size();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 acc = _mm256_setzero_ps();
    for (std::size_t t = 0; t < k; ++t) {
      const __m256 term = _mm256_mul_ps(_mm256_set1_ps(taps[t]), _mm256_loadu_ps(padded.data() + i + t));
      acc = _mm256_add_ps(acc, term);
    }
    _mm256_storeu_ps(out.data() + i, acc);
  }
  if (i < n) scalar::convolve_row(padded.subspan(i), taps, out.subspan(i));
}

void decimate_2x2(std::span<const float> top, std::span<const float> bottom, std::span<float> out) {
  const std::size_t n = out.size();
  const __m256 quarter = _mm256_set1_ps(0.25f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 a = _mm256_hadd_ps(_mm256_loadu_ps(top.data() + 2 * i),
                                    _mm256_loadu_ps(top.data() + 2 * i + 8));
    const __m256 b = _mm256_hadd_ps(_mm256_loadu_ps(bottom.data() + 2 * i),
                                    _mm256_loadu_ps(bottom.data() + 2 * i + 8));
    const __m256 v = _mm256_mul_ps(_mm256_add_ps(a, b), quarter);
    // hadd interleaves 128-bit lanes; restore element order.
    const __m256d ordered = _mm256_permute4x64_pd(_mm256_castps_pd(v), 0xD8);
    _mm256_storeu_ps(out.data() + i, _mm256_castpd_ps(ordered));
  }
  if (i < n) scalar::decimate_2x2(top.subspan(2 * i), bottom.subspan(2 * i), out.subspan(i));
}

#else

void iou_one_to_many(double qxmin, double qymin, double qxmax, double qymax,
                     const BoxColumns& boxes, std::span<double> out) {
  scalar::iou_one_to_many(qxmin, qymin, qxmax, qymax, boxes, out);
}
void accumulate_weighted(std::span<float> dst, std::span<const float> src, float weight) {
  scalar::accumulate_weighted(dst, src, weight);
}
void convolve_row(std::span<const float> padded, std::span<const float> taps, std::span<float> out) {
  scalar::convolve_row(padded, taps, out);
}
void decimate_2x2(std::span<const float> top, std::span<const float> bottom, std::span<float> out) {
  scalar::decimate_2x2(top, bottom, out);
}

#endif

}  // namespace chipstitch::kernels::avx2
