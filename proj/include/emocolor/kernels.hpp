#pragma once

#include <cstddef>
#include <span>

#include "emocolor/matrix.hpp"

// Dense numeric kernels used by the graph interpreter and the similarity
// model. Two implementations share each signature:
//
//   emocolor::kernels            OpenMP, parallel over independent output rows
//   emocolor::kernels::reference plain serial loops, kept for tests/benchmarks
//
// Both accumulate every output element over the reduction index in ascending
// order, so for finite inputs the results are bitwise identical and no result
// depends on the thread count.

namespace emocolor::kernels {

struct Conv2dShape {
  std::size_t in_channels = 0;
  std::size_t in_height = 0;
  std::size_t in_width = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_top = 0;
  std::size_t pad_left = 0;
  std::size_t pad_bottom = 0;
  std::size_t pad_right = 0;
  std::size_t dilation_h = 1;
  std::size_t dilation_w = 1;
  std::size_t groups = 1;

  std::size_t out_height() const;
  std::size_t out_width() const;
};

/// c[m x n] = a[m x k] * b[k x n], all row-major.
template <typename T>
void gemm(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
          std::size_t k, std::size_t n);

/// c[m x n] = a^T * b where a is [p x m] and b is [p x n].
template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t p,
             std::size_t m, std::size_t n);

/// Row-wise cosine similarities: out(i, j) = cos(a.row(i), b.row(j)).
/// Zero rows yield NaN; callers validate norms first.
Matrix cosine_matrix(const Matrix& a, const Matrix& b);

/// Single-image NCHW convolution. weights are [out_c, in_c/groups, kh, kw];
/// bias may be empty.
void conv2d(std::span<const float> input, std::span<const float> weights,
            std::span<const float> bias, std::span<float> output, const Conv2dShape& shape);

namespace reference {

template <typename T>
void gemm(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
          std::size_t k, std::size_t n);

template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t p,
             std::size_t m, std::size_t n);

Matrix cosine_matrix(const Matrix& a, const Matrix& b);

void conv2d(std::span<const float> input, std::span<const float> weights,
            std::span<const float> bias, std::span<float> output, const Conv2dShape& shape);

}  // namespace reference

}  // namespace emocolor::kernels
