#include "emocolor/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace emocolor::kernels {

std::size_t Conv2dShape::out_height() const {
  const std::size_t span = dilation_h * (kernel_h - 1) + 1;
  const std::size_t padded = in_height + pad_top + pad_bottom;
  return padded < span ? 0 : (padded - span) / stride_h + 1;
}

std::size_t Conv2dShape::out_width() const {
  const std::size_t span = dilation_w * (kernel_w - 1) + 1;
  const std::size_t padded = in_width + pad_left + pad_right;
  return padded < span ? 0 : (padded - span) / stride_w + 1;
}

template <typename T>
void gemm(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
          std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i) {
    T* ci = c.data() + i * n;
    std::fill(ci, ci + n, T{0});
    const T* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = ai[p];
      const T* bp = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t p,
             std::size_t m, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i) {
    T* ci = c.data() + i * n;
    std::fill(ci, ci + n, T{0});
    for (std::size_t q = 0; q < p; ++q) {
      const T aqi = a[q * m + i];
      const T* bq = b.data() + q * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aqi * bq[j];
    }
  }
}

template void gemm<float>(std::span<const float>, std::span<const float>, std::span<float>,
                          std::size_t, std::size_t, std::size_t);
template void gemm<double>(std::span<const double>, std::span<const double>, std::span<double>,
                           std::size_t, std::size_t, std::size_t);
template void gemm_tn<float>(std::span<const float>, std::span<const float>, std::span<float>,
                             std::size_t, std::size_t, std::size_t);
template void gemm_tn<double>(std::span<const double>, std::span<const double>,
                              std::span<double>, std::size_t, std::size_t, std::size_t);

Matrix cosine_matrix(const Matrix& a, const Matrix& b) {
  const std::size_t d = a.cols();
  std::vector<double> b_norm(b.rows());
  for (std::size_t j = 0; j < b.rows(); ++j) {
    double s = 0.0;
    for (double v : b.row(j)) s += v * v;
    b_norm[j] = std::sqrt(s);
  }
  Matrix out(a.rows(), b.rows());
  const auto rows = static_cast<std::int64_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i) {
    const auto ai = a.row(static_cast<std::size_t>(i));
    double a_sq = 0.0;
    for (double v : ai) a_sq += v * v;
    const double a_norm = std::sqrt(a_sq);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto bj = b.row(j);
      double dot = 0.0;
      for (std::size_t t = 0; t < d; ++t) dot += ai[t] * bj[t];
      const double denom = a_norm * b_norm[j];
      out(static_cast<std::size_t>(i), j) =
          denom > 0.0 ? std::clamp(dot / denom, -1.0, 1.0)
                      : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

void conv2d(std::span<const float> input, std::span<const float> weights,
            std::span<const float> bias, std::span<float> output, const Conv2dShape& s) {
  const std::size_t oh = s.out_height();
  const std::size_t ow = s.out_width();
  const std::size_t in_per_group = s.in_channels / s.groups;
  const std::size_t out_per_group = s.out_channels / s.groups;
  const std::size_t patch = in_per_group * s.kernel_h * s.kernel_w;
  const std::size_t positions = oh * ow;

  std::vector<float> cols(patch * positions);
  for (std::size_t g = 0; g < s.groups; ++g) {
    // im2col for this group; rows ordered (channel, ky, kx) to match the
    // reference accumulation order.
    const auto patch_rows = static_cast<std::int64_t>(patch);
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < patch_rows; ++r) {
      const std::size_t kx = static_cast<std::size_t>(r) % s.kernel_w;
      const std::size_t ky = (static_cast<std::size_t>(r) / s.kernel_w) % s.kernel_h;
      const std::size_t ic = g * in_per_group + static_cast<std::size_t>(r) / (s.kernel_w * s.kernel_h);
      const float* plane = input.data() + ic * s.in_height * s.in_width;
      float* dst = cols.data() + static_cast<std::size_t>(r) * positions;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        const auto iy = static_cast<std::int64_t>(oy * s.stride_h + ky * s.dilation_h) -
                        static_cast<std::int64_t>(s.pad_top);
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const auto ix = static_cast<std::int64_t>(ox * s.stride_w + kx * s.dilation_w) -
                          static_cast<std::int64_t>(s.pad_left);
          const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::int64_t>(s.in_height) &&
                              ix < static_cast<std::int64_t>(s.in_width);
          dst[oy * ow + ox] = inside ? plane[iy * s.in_width + ix] : 0.0f;
        }
      }
    }
    gemm<float>(weights.subspan(g * out_per_group * patch, out_per_group * patch), cols,
                output.subspan(g * out_per_group * positions, out_per_group * positions),
                out_per_group, patch, positions);
  }
  if (!bias.empty()) {
    const auto oc_count = static_cast<std::int64_t>(s.out_channels);
#pragma omp parallel for schedule(static)
    for (std::int64_t oc = 0; oc < oc_count; ++oc) {
      float* plane = output.data() + oc * positions;
      for (std::size_t t = 0; t < positions; ++t) plane[t] += bias[oc];
    }
  }
}

}  // namespace emocolor::kernels
