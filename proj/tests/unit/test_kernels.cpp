#include <doctest.h>

#include <cmath>
#include <cstring>

#include "emocolor/kernels.hpp"
#include "emocolor/random.hpp"

using namespace emocolor;

namespace {

template <typename T>
std::vector<T> random_values(std::size_t n, Rng& rng) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.normal());
  return v;
}

template <typename T>
bool bitwise_equal(const std::vector<T>& a, const std::vector<T>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (auto& x : m.values()) x = rng.normal();
  return m;
}

}  // namespace

TEST_CASE_TEMPLATE("gemm matches a naive triple loop and the serial reference bitwise", T, float,
                   double) {
  Rng rng(11);
  for (auto [m, k, n] : {std::array<std::size_t, 3>{1, 1, 1}, {7, 5, 3}, {33, 64, 17}, {4, 128, 9}}) {
    const auto a = random_values<T>(m * k, rng);
    const auto b = random_values<T>(k * n, rng);
    std::vector<T> c(m * n), ref(m * n);
    kernels::gemm<T>(a, b, c, m, k, n);
    kernels::reference::gemm<T>(a, b, ref, m, k, n);
    CHECK(bitwise_equal(c, ref));
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += double(a[i * k + p]) * double(b[p * n + j]);
        CHECK(double(c[i * n + j]) == doctest::Approx(s).epsilon(1e-4));
      }
    }
  }
}

TEST_CASE("gemm_tn computes a^T b") {
  Rng rng(12);
  const std::size_t p = 19, m = 6, n = 4;
  const auto a = random_values<double>(p * m, rng);
  const auto b = random_values<double>(p * n, rng);
  std::vector<double> c(m * n), ref(m * n);
  kernels::gemm_tn<double>(a, b, c, p, m, n);
  kernels::reference::gemm_tn<double>(a, b, ref, p, m, n);
  CHECK(bitwise_equal(c, ref));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < p; ++r) s += a[r * m + i] * b[r * n + j];
      CHECK(c[i * n + j] == doctest::Approx(s).epsilon(1e-12));
    }
  }
}

TEST_CASE("cosine_matrix matches the reference bitwise") {
  Rng rng(13);
  const Matrix a = random_matrix(40, 33, rng);
  const Matrix b = random_matrix(5, 33, rng);
  const Matrix c = kernels::cosine_matrix(a, b);
  const Matrix ref = kernels::reference::cosine_matrix(a, b);
  CHECK(c == ref);
  CHECK(c(0, 0) >= -1.0);
  CHECK(c(0, 0) <= 1.0);
}

TEST_CASE("conv2d matches a direct convolution and the reference bitwise") {
  Rng rng(14);
  kernels::Conv2dShape s;
  s.in_channels = 4;
  s.in_height = 9;
  s.in_width = 7;
  s.out_channels = 6;
  s.kernel_h = 3;
  s.kernel_w = 3;
  s.stride_h = 2;
  s.stride_w = 1;
  s.pad_top = s.pad_left = s.pad_bottom = s.pad_right = 1;
  s.groups = 2;
  const std::size_t cin_g = s.in_channels / s.groups, cout_g = s.out_channels / s.groups;
  const auto input = random_values<float>(s.in_channels * s.in_height * s.in_width, rng);
  const auto weights = random_values<float>(s.out_channels * cin_g * 9, rng);
  const auto bias = random_values<float>(s.out_channels, rng);
  const std::size_t oh = s.out_height(), ow = s.out_width();
  CHECK(oh == 5);
  CHECK(ow == 7);
  std::vector<float> out(s.out_channels * oh * ow), ref(out.size());
  kernels::conv2d(input, weights, bias, out, s);
  kernels::reference::conv2d(input, weights, bias, ref, s);
  CHECK(bitwise_equal(out, ref));

  for (std::size_t oc = 0; oc < s.out_channels; ++oc) {
    const std::size_t g = oc / cout_g;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = bias[oc];
        for (std::size_t ic = 0; ic < cin_g; ++ic) {
          for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const long iy = long(y * s.stride_h + ky) - long(s.pad_top);
              const long ix = long(x * s.stride_w + kx) - long(s.pad_left);
              if (iy < 0 || ix < 0 || iy >= long(s.in_height) || ix >= long(s.in_width)) continue;
              acc += double(input[((g * cin_g + ic) * s.in_height + iy) * s.in_width + ix]) *
                     double(weights[((oc * cin_g + ic) * 3 + ky) * 3 + kx]);
            }
          }
        }
        CHECK(out[(oc * oh + y) * ow + x] == doctest::Approx(acc).epsilon(1e-4));
      }
    }
  }
}

TEST_CASE("Rng draws are reproducible and in range") {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(a.below(7) == b.below(7));
  }
  auto p = a.permutation(10);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(p[i] == i);
}
