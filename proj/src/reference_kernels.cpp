// Serial reference implementations. Deliberately naive: these are the
// readable definitions the parallel kernels are tested against.

#include <algorithm>
#include <cmath>
#include <limits>

#include "emocolor/kernels.hpp"

namespace emocolor::kernels::reference {

template <typename T>
void gemm(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
          std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T sum{0};
      for (std::size_t p = 0; p < k; ++p) sum += a[i * k + p] * b[p * n + j];
      c[i * n + j] = sum;
    }
  }
}

template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t p,
             std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T sum{0};
      for (std::size_t q = 0; q < p; ++q) sum += a[q * m + i] * b[q * n + j];
      c[i * n + j] = sum;
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
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t t = 0; t < a.cols(); ++t) {
        dot += a(i, t) * b(j, t);
        na += a(i, t) * a(i, t);
        nb += b(j, t) * b(j, t);
      }
      const double denom = std::sqrt(na) * std::sqrt(nb);
      out(i, j) = denom > 0.0 ? std::clamp(dot / denom, -1.0, 1.0)
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
  for (std::size_t oc = 0; oc < s.out_channels; ++oc) {
    const std::size_t g = oc / out_per_group;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        float sum = 0.0f;
        for (std::size_t c = 0; c < in_per_group; ++c) {
          const std::size_t ic = g * in_per_group + c;
          for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
            for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
              const long iy = static_cast<long>(oy * s.stride_h + ky * s.dilation_h) -
                              static_cast<long>(s.pad_top);
              const long ix = static_cast<long>(ox * s.stride_w + kx * s.dilation_w) -
                              static_cast<long>(s.pad_left);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(s.in_height) ||
                  ix >= static_cast<long>(s.in_width)) {
                continue;
              }
              const float w =
                  weights[((oc * in_per_group + c) * s.kernel_h + ky) * s.kernel_w + kx];
              sum += w * input[(ic * s.in_height + iy) * s.in_width + ix];
            }
          }
        }
        if (!bias.empty()) sum += bias[oc];
        output[(oc * oh + oy) * ow + ox] = sum;
      }
    }
  }
}

}  // namespace emocolor::kernels::reference
