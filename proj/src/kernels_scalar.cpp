#include "chipstitch/kernels.hpp"

namespace chipstitch::kernels::scalar {

void iou_one_to_many(double qxmin, double qymin, double qxmax, double qymax,
                     const BoxColumns& boxes, std::span<double> out) {
  const double qarea = (qxmax - qxmin) * (qymax - qymin);
  const std::size_t n = boxes.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double lo_x = qxmin > boxes.xmin[i] ? qxmin : boxes.xmin[i];
    const double hi_x = qxmax < boxes.xmax[i] ? qxmax : boxes.xmax[i];
    const double lo_y = qymin > boxes.ymin[i] ? qymin : boxes.ymin[i];
    const double hi_y = qymax < boxes.ymax[i] ? qymax : boxes.ymax[i];
    double iw = hi_x - lo_x;
    double ih = hi_y - lo_y;
    iw = iw > 0.0 ? iw : 0.0;
    ih = ih > 0.0 ? ih : 0.0;
    const double inter = iw * ih;
    const double barea = (boxes.xmax[i] - boxes.xmin[i]) * (boxes.ymax[i] - boxes.ymin[i]);
    const double uni = qarea + barea - inter;
    out[i] = uni > 0.0 ? inter / uni : 0.0;
  }
}

void accumulate_weighted(std::span<float> dst, std::span<const float> src, float weight) {
  const std::size_t n = dst.size();
  for (std::size_t i = 0; i < n; ++i) {
    const float term = weight * src[i];
    dst[i] = dst[i] + term;
  }
}

void convolve_row(std::span<const float> padded, std::span<const float> taps, std::span<float> out) {
  const std::size_t n = out.size();
  const std::size_t k = taps.size();
  for (std::size_t i = 0; i < n; ++i) {
    float acc = 0.0f;
    for (std::size_t t = 0; t < k; ++t) {
      const float term = taps[t] * padded[i + t];
      acc = acc + term;
    }
    out[i] = acc;
  }
}

void decimate_2x2(std::span<const float> top, std::span<const float> bottom, std::span<float> out) {
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    const float a = top[2 * i] + top[2 * i + 1];
    const float b = bottom[2 * i] + bottom[2 * i + 1];
    out[i] = (a + b) * 0.25f;
  }
}

}  // namespace chipstitch::kernels::scalar
