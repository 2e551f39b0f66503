// CPU implementations of the ONNX operators the interpreter supports.
// Float32 compute; int64 is supported where shape arithmetic needs it.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "emocolor/error.hpp"
#include "emocolor/kernels.hpp"
#include "emocolor/onnx_graph.hpp"

namespace emocolor::onnx::detail {

namespace {

using Shape = std::vector<std::int64_t>;
using Args = std::vector<const Tensor*>;

const Tensor& arg(const Args& args, std::size_t i, const Node& n) {
  if (i >= args.size() || args[i] == nullptr) {
    fail(ErrorKind::kFormat, n.op_type + ": missing input #" + std::to_string(i));
  }
  return *args[i];
}

const Tensor* opt_arg(const Args& args, std::size_t i) {
  return i < args.size() ? args[i] : nullptr;
}

const Tensor& float_arg(const Args& args, std::size_t i, const Node& n) {
  const Tensor& t = arg(args, i, n);
  if (!t.is_float()) fail(ErrorKind::kUnsupported, n.op_type + ": expected a float tensor");
  return t;
}

std::vector<std::int64_t> as_ints(const Tensor& t) {
  if (!t.is_float()) return t.i;
  std::vector<std::int64_t> v;
  for (float x : t.f) v.push_back(static_cast<std::int64_t>(x));
  return v;
}

std::int64_t product(const Shape& s, std::size_t from = 0, std::size_t to = SIZE_MAX) {
  std::int64_t p = 1;
  for (std::size_t i = from; i < std::min(to, s.size()); ++i) p *= s[i];
  return p;
}

std::size_t normalize_axis(std::int64_t axis, std::size_t rank, const Node& n) {
  const auto r = static_cast<std::int64_t>(rank);
  if (axis < -r || axis >= std::max<std::int64_t>(r, 1)) {
    fail(ErrorKind::kFormat, n.op_type + ": axis out of range");
  }
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

Shape broadcast_shape(const Shape& a, const Shape& b, const Node& n) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::int64_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::int64_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      fail(ErrorKind::kFormat, n.op_type + ": shapes are not broadcastable");
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Element strides of `s` expressed in the coordinates of `out` (0 where
// broadcast).
std::vector<std::int64_t> broadcast_strides(const Shape& s, const Shape& out) {
  std::vector<std::int64_t> strides(out.size(), 0);
  std::int64_t stride = 1;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const std::size_t src = s.size() - 1 - k;
    const std::size_t dst = out.size() - 1 - k;
    strides[dst] = s[src] == 1 ? 0 : stride;
    stride *= s[src];
  }
  return strides;
}

template <typename T, typename F>
std::vector<T> broadcast_apply(const std::vector<T>& a, const Shape& sa, const std::vector<T>& b,
                               const Shape& sb, const Shape& out, F f) {
  const auto total = static_cast<std::size_t>(product(out));
  std::vector<T> result(total);
  if (sa == sb) {
    for (std::size_t i = 0; i < total; ++i) result[i] = f(a[i], b[i]);
    return result;
  }
  if (b.size() == 1) {
    for (std::size_t i = 0; i < total; ++i) result[i] = f(a[a.size() == 1 ? 0 : i], b[0]);
    return result;
  }
  const auto st_a = broadcast_strides(sa, out);
  const auto st_b = broadcast_strides(sb, out);
  std::vector<std::int64_t> idx(out.size(), 0);
  std::int64_t oa = 0, ob = 0;
  for (std::size_t i = 0; i < total; ++i) {
    result[i] = f(a[oa], b[ob]);
    for (std::size_t d = out.size(); d-- > 0;) {
      ++idx[d];
      oa += st_a[d];
      ob += st_b[d];
      if (idx[d] < out[d]) break;
      oa -= st_a[d] * out[d];
      ob -= st_b[d] * out[d];
      idx[d] = 0;
    }
  }
  return result;
}

template <typename Fn>
std::vector<Tensor> binary(const Node& n, const Args& args, Fn fn) {
  const Tensor& a = arg(args, 0, n);
  const Tensor& b = arg(args, 1, n);
  const Shape out = broadcast_shape(a.shape, b.shape, n);
  if (a.is_float() && b.is_float()) {
    return {Tensor::floats(out, broadcast_apply(a.f, a.shape, b.f, b.shape, out,
                                                [&](float x, float y) { return fn(x, y); }))};
  }
  if (!a.is_float() && !b.is_float()) {
    return {Tensor::ints(out, broadcast_apply(a.i, a.shape, b.i, b.shape, out,
                                              [&](std::int64_t x, std::int64_t y) {
                                                return fn(x, y);
                                              }))};
  }
  fail(ErrorKind::kFormat, n.op_type + ": mixed element types");
}

std::vector<Tensor> op_add(const Node& n, const Args& a, std::int64_t) {
  return binary(n, a, [](auto x, auto y) { return x + y; });
}
std::vector<Tensor> op_sub(const Node& n, const Args& a, std::int64_t) {
  return binary(n, a, [](auto x, auto y) { return x - y; });
}
std::vector<Tensor> op_mul(const Node& n, const Args& a, std::int64_t) {
  return binary(n, a, [](auto x, auto y) { return x * y; });
}
std::vector<Tensor> op_div(const Node& n, const Args& a, std::int64_t) {
  return binary(n, a, [](auto x, auto y) { return x / y; });
}

template <typename F>
std::vector<Tensor> unary(const Node& n, const Args& args, F f) {
  Tensor t = float_arg(args, 0, n);
  for (float& v : t.f) v = f(v);
  return {std::move(t)};
}

std::vector<Tensor> op_relu(const Node& n, const Args& a, std::int64_t) {
  return unary(n, a, [](float v) { return v > 0.0f ? v : 0.0f; });
}
std::vector<Tensor> op_sigmoid(const Node& n, const Args& a, std::int64_t) {
  return unary(n, a, [](float v) { return 1.0f / (1.0f + std::exp(-v)); });
}
std::vector<Tensor> op_tanh(const Node& n, const Args& a, std::int64_t) {
  return unary(n, a, [](float v) { return std::tanh(v); });
}
std::vector<Tensor> op_leaky_relu(const Node& n, const Args& a, std::int64_t) {
  const float alpha = n.attr_float("alpha", 0.01f);
  return unary(n, a, [alpha](float v) { return v >= 0.0f ? v : alpha * v; });
}

std::vector<Tensor> op_clip(const Node& n, const Args& args, std::int64_t opset) {
  float lo = -std::numeric_limits<float>::infinity();
  float hi = std::numeric_limits<float>::infinity();
  if (opset < 11) {
    lo = n.attr_float("min", lo);
    hi = n.attr_float("max", hi);
  } else {
    if (const Tensor* t = opt_arg(args, 1)) lo = t->f.at(0);
    if (const Tensor* t = opt_arg(args, 2)) hi = t->f.at(0);
  }
  return unary(n, args, [lo, hi](float v) { return std::min(std::max(v, lo), hi); });
}

std::vector<Tensor> op_identity(const Node& n, const Args& a, std::int64_t) {
  return {arg(a, 0, n)};
}

std::vector<Tensor> op_flatten(const Node& n, const Args& args, std::int64_t) {
  Tensor t = arg(args, 0, n);
  const std::int64_t raw_axis = n.attr_int("axis", 1);
  const std::size_t axis = raw_axis == static_cast<std::int64_t>(t.shape.size())
                               ? t.shape.size()
                               : normalize_axis(raw_axis, t.shape.size(), n);
  t.shape = {product(t.shape, 0, axis), product(t.shape, axis)};
  return {std::move(t)};
}

std::vector<Tensor> op_reshape(const Node& n, const Args& args, std::int64_t) {
  Tensor t = arg(args, 0, n);
  const auto target = as_ints(arg(args, 1, n));
  const bool allow_zero = n.attr_int("allowzero", 0) != 0;
  Shape shape(target.size());
  std::int64_t known = 1;
  std::ptrdiff_t infer = -1;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == -1) {
      if (infer >= 0) fail(ErrorKind::kFormat, "Reshape: more than one -1");
      infer = static_cast<std::ptrdiff_t>(i);
      continue;
    }
    shape[i] = (target[i] == 0 && !allow_zero) ? t.shape.at(i) : target[i];
    known *= shape[i];
  }
  const auto total = static_cast<std::int64_t>(t.numel());
  if (infer >= 0) {
    if (known == 0 || total % known != 0) fail(ErrorKind::kFormat, "Reshape: cannot infer dim");
    shape[static_cast<std::size_t>(infer)] = total / known;
  } else if (known != total) {
    fail(ErrorKind::kFormat, "Reshape: element count mismatch");
  }
  t.shape = std::move(shape);
  return {std::move(t)};
}

std::vector<float> transpose2d(const std::vector<float>& m, std::size_t rows, std::size_t cols) {
  std::vector<float> out(m.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = m[r * cols + c];
  }
  return out;
}

std::vector<Tensor> op_gemm(const Node& n, const Args& args, std::int64_t) {
  const Tensor& a = float_arg(args, 0, n);
  const Tensor& b = float_arg(args, 1, n);
  if (a.shape.size() != 2 || b.shape.size() != 2) fail(ErrorKind::kFormat, "Gemm: inputs must be 2-D");
  const bool ta = n.attr_int("transA", 0) != 0;
  const bool tb = n.attr_int("transB", 0) != 0;
  const float alpha = n.attr_float("alpha", 1.0f);
  const float beta = n.attr_float("beta", 1.0f);
  const auto m = static_cast<std::size_t>(ta ? a.shape[1] : a.shape[0]);
  const auto k = static_cast<std::size_t>(ta ? a.shape[0] : a.shape[1]);
  const auto kb = static_cast<std::size_t>(tb ? b.shape[1] : b.shape[0]);
  const auto nn = static_cast<std::size_t>(tb ? b.shape[0] : b.shape[1]);
  if (k != kb) fail(ErrorKind::kFormat, "Gemm: inner dimensions differ");
  const std::vector<float> av = ta ? transpose2d(a.f, k, m) : a.f;
  const std::vector<float> bv = tb ? transpose2d(b.f, nn, k) : b.f;
  std::vector<float> out(m * nn);
  kernels::gemm<float>(av, bv, out, m, k, nn);
  if (alpha != 1.0f) {
    for (float& v : out) v *= alpha;
  }
  if (const Tensor* c = opt_arg(args, 2)) {
    const Shape shape{static_cast<std::int64_t>(m), static_cast<std::int64_t>(nn)};
    out = broadcast_apply(out, shape, c->f, c->shape, shape,
                          [beta](float x, float y) { return x + beta * y; });
  }
  return {Tensor::floats({static_cast<std::int64_t>(m), static_cast<std::int64_t>(nn)},
                         std::move(out))};
}

std::vector<Tensor> op_matmul(const Node& n, const Args& args, std::int64_t) {
  const Tensor& a = float_arg(args, 0, n);
  const Tensor& b = float_arg(args, 1, n);
  if (a.shape.empty() || b.shape.size() < 2) fail(ErrorKind::kUnsupported, "MatMul: unsupported ranks");
  const auto k = static_cast<std::size_t>(a.shape.back());
  const auto nn = static_cast<std::size_t>(b.shape.back());
  if (static_cast<std::size_t>(b.shape[b.shape.size() - 2]) != k) {
    fail(ErrorKind::kFormat, "MatMul: inner dimensions differ");
  }
  Shape out_shape(a.shape.begin(), a.shape.end() - 1);
  out_shape.push_back(static_cast<std::int64_t>(nn));
  if (b.shape.size() == 2) {
    const auto m = static_cast<std::size_t>(product(a.shape, 0, a.shape.size() - 1));
    std::vector<float> out(m * nn);
    kernels::gemm<float>(a.f, b.f, out, m, k, nn);
    return {Tensor::floats(out_shape, std::move(out))};
  }
  if (a.shape.size() != b.shape.size() ||
      !std::equal(a.shape.begin(), a.shape.end() - 2, b.shape.begin())) {
    fail(ErrorKind::kUnsupported, "MatMul: only matching batch dimensions are supported");
  }
  const auto m = static_cast<std::size_t>(a.shape[a.shape.size() - 2]);
  const auto batches = static_cast<std::size_t>(product(a.shape, 0, a.shape.size() - 2));
  std::vector<float> out(batches * m * nn);
  for (std::size_t bi = 0; bi < batches; ++bi) {
    kernels::gemm<float>(std::span(a.f).subspan(bi * m * k, m * k),
                         std::span(b.f).subspan(bi * k * nn, k * nn),
                         std::span(out).subspan(bi * m * nn, m * nn), m, k, nn);
  }
  return {Tensor::floats(out_shape, std::move(out))};
}

struct Window {
  std::int64_t kernel_h, kernel_w, stride_h, stride_w, dil_h, dil_w;
  std::int64_t pad_t, pad_l, pad_b, pad_r;
  std::int64_t out_h, out_w;
};

Window spatial_window(const Node& n, const Shape& x, std::int64_t kh, std::int64_t kw,
                      bool allow_ceil) {
  Window w{};
  w.kernel_h = kh;
  w.kernel_w = kw;
  const auto strides = n.attr_ints("strides", {1, 1});
  const auto dil = n.attr_ints("dilations", {1, 1});
  auto pads = n.attr_ints("pads", {0, 0, 0, 0});
  if (strides.size() != 2 || dil.size() != 2 || pads.size() != 4) {
    fail(ErrorKind::kUnsupported, n.op_type + ": only 2-D spatial attributes are supported");
  }
  w.stride_h = strides[0];
  w.stride_w = strides[1];
  w.dil_h = dil[0];
  w.dil_w = dil[1];
  const std::int64_t in_h = x[2], in_w = x[3];
  const std::int64_t span_h = (kh - 1) * w.dil_h + 1;
  const std::int64_t span_w = (kw - 1) * w.dil_w + 1;
  const std::string auto_pad = n.attr_string("auto_pad", "NOTSET");
  if (auto_pad == "SAME_UPPER" || auto_pad == "SAME_LOWER") {
    const std::int64_t oh = (in_h + w.stride_h - 1) / w.stride_h;
    const std::int64_t ow = (in_w + w.stride_w - 1) / w.stride_w;
    const std::int64_t total_h = std::max<std::int64_t>(0, (oh - 1) * w.stride_h + span_h - in_h);
    const std::int64_t total_w = std::max<std::int64_t>(0, (ow - 1) * w.stride_w + span_w - in_w);
    const bool upper = auto_pad == "SAME_UPPER";
    pads = {upper ? total_h / 2 : total_h - total_h / 2, upper ? total_w / 2 : total_w - total_w / 2,
            upper ? total_h - total_h / 2 : total_h / 2, upper ? total_w - total_w / 2 : total_w / 2};
  } else if (auto_pad == "VALID") {
    pads = {0, 0, 0, 0};
  }
  w.pad_t = pads[0];
  w.pad_l = pads[1];
  w.pad_b = pads[2];
  w.pad_r = pads[3];
  const bool ceil_mode = allow_ceil && n.attr_int("ceil_mode", 0) != 0;
  auto out_dim = [&](std::int64_t in, std::int64_t p0, std::int64_t p1, std::int64_t span,
                     std::int64_t stride) {
    const std::int64_t num = in + p0 + p1 - span;
    if (num < 0) fail(ErrorKind::kFormat, n.op_type + ": kernel larger than padded input");
    std::int64_t out = (ceil_mode ? (num + stride - 1) / stride : num / stride) + 1;
    // A ceil-mode window must start inside the input or left padding.
    if (ceil_mode && (out - 1) * stride >= in + p0) --out;
    return out;
  };
  w.out_h = out_dim(in_h, w.pad_t, w.pad_b, span_h, w.stride_h);
  w.out_w = out_dim(in_w, w.pad_l, w.pad_r, span_w, w.stride_w);
  return w;
}

std::vector<Tensor> op_conv(const Node& n, const Args& args, std::int64_t) {
  const Tensor& x = float_arg(args, 0, n);
  const Tensor& w = float_arg(args, 1, n);
  const Tensor* b = opt_arg(args, 2);
  if (x.shape.size() != 4 || w.shape.size() != 4) fail(ErrorKind::kUnsupported, "Conv: only 2-D convolution");
  const std::int64_t groups = n.attr_int("group", 1);
  const Window win = spatial_window(n, x.shape, w.shape[2], w.shape[3], false);
  kernels::Conv2dShape s;
  s.in_channels = static_cast<std::size_t>(x.shape[1]);
  s.in_height = static_cast<std::size_t>(x.shape[2]);
  s.in_width = static_cast<std::size_t>(x.shape[3]);
  s.out_channels = static_cast<std::size_t>(w.shape[0]);
  s.kernel_h = static_cast<std::size_t>(w.shape[2]);
  s.kernel_w = static_cast<std::size_t>(w.shape[3]);
  s.stride_h = static_cast<std::size_t>(win.stride_h);
  s.stride_w = static_cast<std::size_t>(win.stride_w);
  s.pad_top = static_cast<std::size_t>(win.pad_t);
  s.pad_left = static_cast<std::size_t>(win.pad_l);
  s.pad_bottom = static_cast<std::size_t>(win.pad_b);
  s.pad_right = static_cast<std::size_t>(win.pad_r);
  s.dilation_h = static_cast<std::size_t>(win.dil_h);
  s.dilation_w = static_cast<std::size_t>(win.dil_w);
  s.groups = static_cast<std::size_t>(groups);
  if (s.in_channels % s.groups != 0 || s.out_channels % s.groups != 0 ||
      static_cast<std::size_t>(w.shape[1]) != s.in_channels / s.groups) {
    fail(ErrorKind::kFormat, "Conv: channel/group mismatch");
  }
  const std::size_t batch = static_cast<std::size_t>(x.shape[0]);
  const std::size_t in_size = s.in_channels * s.in_height * s.in_width;
  const std::size_t out_size = s.out_channels * s.out_height() * s.out_width();
  std::vector<float> out(batch * out_size);
  const std::span<const float> bias = b ? std::span<const float>(b->f) : std::span<const float>{};
  for (std::size_t i = 0; i < batch; ++i) {
    kernels::conv2d(std::span(x.f).subspan(i * in_size, in_size), w.f, bias,
                    std::span(out).subspan(i * out_size, out_size), s);
  }
  return {Tensor::floats({x.shape[0], w.shape[0], static_cast<std::int64_t>(s.out_height()),
                          static_cast<std::int64_t>(s.out_width())},
                         std::move(out))};
}

std::vector<Tensor> pool(const Node& n, const Args& args, bool is_max) {
  const Tensor& x = float_arg(args, 0, n);
  if (x.shape.size() != 4) fail(ErrorKind::kUnsupported, n.op_type + ": only 2-D pooling");
  const auto ks = n.attr_ints("kernel_shape");
  if (ks.size() != 2) fail(ErrorKind::kFormat, n.op_type + ": kernel_shape must have 2 entries");
  const Window w = spatial_window(n, x.shape, ks[0], ks[1], true);
  const bool include_pad = n.attr_int("count_include_pad", 0) != 0;
  const std::int64_t planes = x.shape[0] * x.shape[1];
  const std::int64_t in_h = x.shape[2], in_w = x.shape[3];
  std::vector<float> out(static_cast<std::size_t>(planes * w.out_h * w.out_w));
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < planes; ++p) {
    const float* src = x.f.data() + p * in_h * in_w;
    float* dst = out.data() + p * w.out_h * w.out_w;
    for (std::int64_t oy = 0; oy < w.out_h; ++oy) {
      for (std::int64_t ox = 0; ox < w.out_w; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        float sum = 0.0f;
        std::int64_t valid = 0, padded = 0;
        for (std::int64_t ky = 0; ky < w.kernel_h; ++ky) {
          const std::int64_t iy = oy * w.stride_h + ky * w.dil_h - w.pad_t;
          for (std::int64_t kx = 0; kx < w.kernel_w; ++kx) {
            const std::int64_t ix = ox * w.stride_w + kx * w.dil_w - w.pad_l;
            if (iy >= -w.pad_t && iy < in_h + w.pad_b && ix >= -w.pad_l && ix < in_w + w.pad_r) {
              ++padded;
            }
            if (iy < 0 || ix < 0 || iy >= in_h || ix >= in_w) continue;
            const float v = src[iy * in_w + ix];
            best = std::max(best, v);
            sum += v;
            ++valid;
          }
        }
        dst[oy * w.out_w + ox] =
            is_max ? best : sum / static_cast<float>(include_pad ? padded : std::max<std::int64_t>(valid, 1));
      }
    }
  }
  return {Tensor::floats({x.shape[0], x.shape[1], w.out_h, w.out_w}, std::move(out))};
}

std::vector<Tensor> op_maxpool(const Node& n, const Args& a, std::int64_t) { return pool(n, a, true); }
std::vector<Tensor> op_avgpool(const Node& n, const Args& a, std::int64_t) { return pool(n, a, false); }

std::vector<Tensor> global_pool(const Node& n, const Args& args, bool is_max) {
  const Tensor& x = float_arg(args, 0, n);
  if (x.shape.size() < 3) fail(ErrorKind::kFormat, n.op_type + ": expected N x C x spatial");
  const auto planes = static_cast<std::size_t>(x.shape[0] * x.shape[1]);
  const auto area = static_cast<std::size_t>(product(x.shape, 2));
  std::vector<float> out(planes);
  for (std::size_t p = 0; p < planes; ++p) {
    const float* src = x.f.data() + p * area;
    if (is_max) {
      out[p] = *std::max_element(src, src + area);
    } else {
      double s = 0.0;
      for (std::size_t t = 0; t < area; ++t) s += src[t];
      out[p] = static_cast<float>(s / static_cast<double>(area));
    }
  }
  Shape shape(x.shape.size(), 1);
  shape[0] = x.shape[0];
  shape[1] = x.shape[1];
  return {Tensor::floats(shape, std::move(out))};
}

std::vector<Tensor> op_gap(const Node& n, const Args& a, std::int64_t) { return global_pool(n, a, false); }
std::vector<Tensor> op_gmp(const Node& n, const Args& a, std::int64_t) { return global_pool(n, a, true); }

std::vector<Tensor> op_softmax(const Node& n, const Args& args, std::int64_t opset) {
  Tensor t = float_arg(args, 0, n);
  const std::size_t rank = t.shape.size();
  const std::size_t axis = normalize_axis(n.attr_int("axis", opset >= 13 ? -1 : 1), rank, n);
  // Before opset 13 the input is coerced to 2-D at `axis`; from 13 on the
  // reduction is over that single axis.
  const auto outer = static_cast<std::size_t>(product(t.shape, 0, axis));
  const auto len = static_cast<std::size_t>(opset >= 13 ? t.shape[axis] : product(t.shape, axis));
  const std::size_t inner = opset >= 13 ? static_cast<std::size_t>(product(t.shape, axis + 1)) : 1;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      float* base = t.f.data() + o * len * inner + in;
      float mx = -std::numeric_limits<float>::infinity();
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, base[j * inner]);
      double s = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        base[j * inner] = std::exp(base[j * inner] - mx);
        s += base[j * inner];
      }
      for (std::size_t j = 0; j < len; ++j) base[j * inner] = static_cast<float>(base[j * inner] / s);
    }
  }
  return {std::move(t)};
}

std::vector<Tensor> op_transpose(const Node& n, const Args& args, std::int64_t) {
  const Tensor& t = arg(args, 0, n);
  const std::size_t rank = t.shape.size();
  std::vector<std::int64_t> perm = n.attr_ints("perm");
  if (perm.empty()) {
    for (std::size_t i = 0; i < rank; ++i) perm.push_back(static_cast<std::int64_t>(rank - 1 - i));
  }
  if (perm.size() != rank) fail(ErrorKind::kFormat, "Transpose: perm rank mismatch");
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = t.shape[static_cast<std::size_t>(perm[i])];
  std::vector<std::int64_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * t.shape[i];
  const std::size_t total = t.numel();
  std::vector<std::size_t> src_index(total);
  std::vector<std::int64_t> idx(rank, 0);
  for (std::size_t o = 0; o < total; ++o) {
    std::int64_t off = 0;
    for (std::size_t d = 0; d < rank; ++d) off += idx[d] * in_strides[static_cast<std::size_t>(perm[d])];
    src_index[o] = static_cast<std::size_t>(off);
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  if (t.is_float()) {
    std::vector<float> out(total);
    for (std::size_t o = 0; o < total; ++o) out[o] = t.f[src_index[o]];
    return {Tensor::floats(out_shape, std::move(out))};
  }
  std::vector<std::int64_t> out(total);
  for (std::size_t o = 0; o < total; ++o) out[o] = t.i[src_index[o]];
  return {Tensor::ints(out_shape, std::move(out))};
}

std::vector<Tensor> op_batchnorm(const Node& n, const Args& args, std::int64_t) {
  Tensor x = float_arg(args, 0, n);
  const auto& scale = float_arg(args, 1, n).f;
  const auto& bias = float_arg(args, 2, n).f;
  const auto& mean = float_arg(args, 3, n).f;
  const auto& var = float_arg(args, 4, n).f;
  const float eps = n.attr_float("epsilon", 1e-5f);
  if (x.shape.size() < 2) fail(ErrorKind::kFormat, "BatchNormalization: rank < 2");
  const auto channels = static_cast<std::size_t>(x.shape[1]);
  const auto inner = static_cast<std::size_t>(product(x.shape, 2));
  const auto batch = static_cast<std::size_t>(x.shape[0]);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const float k = scale[c] / std::sqrt(var[c] + eps);
      float* p = x.f.data() + (b * channels + c) * inner;
      for (std::size_t t = 0; t < inner; ++t) p[t] = (p[t] - mean[c]) * k + bias[c];
    }
  }
  return {std::move(x)};
}

std::vector<Tensor> op_concat(const Node& n, const Args& args, std::int64_t) {
  const Tensor& first = arg(args, 0, n);
  const std::size_t axis = normalize_axis(n.attr_int("axis", 0), first.shape.size(), n);
  Shape out_shape = first.shape;
  out_shape[axis] = 0;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const Tensor& t = arg(args, i, n);
    if (t.type != first.type || t.shape.size() != first.shape.size()) {
      fail(ErrorKind::kFormat, "Concat: inputs differ in type or rank");
    }
    out_shape[axis] += t.shape[axis];
  }
  const auto outer = static_cast<std::size_t>(product(first.shape, 0, axis));
  Tensor out;
  out.type = first.type;
  out.shape = out_shape;
  for (std::size_t o = 0; o < outer; ++o) {
    for (const Tensor* t : args) {
      const auto chunk = static_cast<std::size_t>(product(t->shape, axis));
      if (t->is_float()) {
        out.f.insert(out.f.end(), t->f.begin() + o * chunk, t->f.begin() + (o + 1) * chunk);
      } else {
        out.i.insert(out.i.end(), t->i.begin() + o * chunk, t->i.begin() + (o + 1) * chunk);
      }
    }
  }
  return {std::move(out)};
}

std::vector<Tensor> op_constant(const Node& n, const Args&, std::int64_t) {
  if (auto it = n.attributes.find("value"); it != n.attributes.end()) {
    if (const auto* t = std::get_if<Tensor>(&it->second)) return {*t};
  }
  if (n.has_attr("value_float")) return {Tensor::floats({}, {n.attr_float("value_float", 0.0f)})};
  if (n.has_attr("value_int")) return {Tensor::ints({}, {n.attr_int("value_int", 0)})};
  if (auto it = n.attributes.find("value_floats"); it != n.attributes.end()) {
    const auto& v = std::get<std::vector<float>>(it->second);
    return {Tensor::floats({static_cast<std::int64_t>(v.size())}, v)};
  }
  if (n.has_attr("value_ints")) {
    const auto v = n.attr_ints("value_ints");
    return {Tensor::ints({static_cast<std::int64_t>(v.size())}, v)};
  }
  fail(ErrorKind::kUnsupported, "Constant: unsupported value attribute");
}

std::vector<std::int64_t> axes_of(const Node& n, const Args& args, std::int64_t opset,
                                  std::int64_t since) {
  if (opset >= since) {
    if (const Tensor* t = opt_arg(args, 1)) return as_ints(*t);
    return {};
  }
  return n.attr_ints("axes");
}

std::vector<Tensor> op_squeeze(const Node& n, const Args& args, std::int64_t opset) {
  Tensor t = arg(args, 0, n);
  const auto axes = axes_of(n, args, opset, 13);
  Shape out;
  for (std::size_t d = 0; d < t.shape.size(); ++d) {
    bool drop = false;
    if (axes.empty()) {
      drop = t.shape[d] == 1;
    } else {
      for (auto a : axes) drop = drop || normalize_axis(a, t.shape.size(), n) == d;
    }
    if (!drop) out.push_back(t.shape[d]);
  }
  t.shape = std::move(out);
  return {std::move(t)};
}

std::vector<Tensor> op_unsqueeze(const Node& n, const Args& args, std::int64_t opset) {
  Tensor t = arg(args, 0, n);
  auto axes = axes_of(n, args, opset, 13);
  const std::size_t rank = t.shape.size() + axes.size();
  std::vector<bool> inserted(rank, false);
  for (auto a : axes) inserted[normalize_axis(a, rank, n)] = true;
  Shape out;
  std::size_t src = 0;
  for (std::size_t d = 0; d < rank; ++d) out.push_back(inserted[d] ? 1 : t.shape[src++]);
  t.shape = std::move(out);
  return {std::move(t)};
}

std::vector<Tensor> op_shape(const Node& n, const Args& args, std::int64_t) {
  const Tensor& t = arg(args, 0, n);
  const auto rank = static_cast<std::int64_t>(t.shape.size());
  std::int64_t start = n.attr_int("start", 0);
  std::int64_t end = n.attr_int("end", rank);
  if (start < 0) start += rank;
  if (end < 0) end += rank;
  start = std::clamp<std::int64_t>(start, 0, rank);
  end = std::clamp<std::int64_t>(end, start, rank);
  std::vector<std::int64_t> dims(t.shape.begin() + start, t.shape.begin() + end);
  return {Tensor::ints({static_cast<std::int64_t>(dims.size())}, dims)};
}

std::vector<Tensor> op_gather(const Node& n, const Args& args, std::int64_t) {
  const Tensor& data = arg(args, 0, n);
  const auto indices = as_ints(arg(args, 1, n));
  const Shape& ishape = arg(args, 1, n).shape;
  const std::size_t axis = normalize_axis(n.attr_int("axis", 0), data.shape.size(), n);
  const auto outer = static_cast<std::size_t>(product(data.shape, 0, axis));
  const auto inner = static_cast<std::size_t>(product(data.shape, axis + 1));
  const std::int64_t dim = data.shape[axis];
  Shape out_shape(data.shape.begin(), data.shape.begin() + static_cast<std::ptrdiff_t>(axis));
  out_shape.insert(out_shape.end(), ishape.begin(), ishape.end());
  out_shape.insert(out_shape.end(), data.shape.begin() + static_cast<std::ptrdiff_t>(axis) + 1,
                   data.shape.end());
  Tensor out;
  out.type = data.type;
  out.shape = out_shape;
  for (std::size_t o = 0; o < outer; ++o) {
    for (auto idx : indices) {
      const std::int64_t k = idx < 0 ? idx + dim : idx;
      if (k < 0 || k >= dim) fail(ErrorKind::kFormat, "Gather: index out of range");
      const std::size_t off = (o * static_cast<std::size_t>(dim) + static_cast<std::size_t>(k)) * inner;
      if (data.is_float()) {
        out.f.insert(out.f.end(), data.f.begin() + off, data.f.begin() + off + inner);
      } else {
        out.i.insert(out.i.end(), data.i.begin() + off, data.i.begin() + off + inner);
      }
    }
  }
  return {std::move(out)};
}

std::vector<Tensor> op_cast(const Node& n, const Args& args, std::int64_t) {
  const Tensor& t = arg(args, 0, n);
  const std::int64_t to = n.attr_int("to", 1);
  if (to == 1 || to == 11) {
    if (t.is_float()) return {t};
    return {Tensor::floats(t.shape, std::vector<float>(t.i.begin(), t.i.end()))};
  }
  if (to == 7 || to == 6) {
    if (!t.is_float()) return {t};
    std::vector<std::int64_t> v;
    for (float x : t.f) v.push_back(static_cast<std::int64_t>(x));
    return {Tensor::ints(t.shape, std::move(v))};
  }
  fail(ErrorKind::kUnsupported, "Cast: unsupported target type " + std::to_string(to));
}

std::vector<Tensor> op_reduce_mean(const Node& n, const Args& args, std::int64_t opset) {
  const Tensor& t = float_arg(args, 0, n);
  auto axes = axes_of(n, args, opset, 18);
  const bool keep = n.attr_int("keepdims", 1) != 0;
  const std::size_t rank = t.shape.size();
  std::vector<bool> reduce(rank, axes.empty());
  for (auto a : axes) reduce[normalize_axis(a, rank, n)] = true;
  Shape out_shape, kept_shape;
  for (std::size_t d = 0; d < rank; ++d) {
    kept_shape.push_back(reduce[d] ? 1 : t.shape[d]);
    if (!reduce[d] || keep) out_shape.push_back(reduce[d] ? 1 : t.shape[d]);
  }
  const auto out_total = static_cast<std::size_t>(product(kept_shape));
  std::vector<double> sums(out_total, 0.0);
  const auto strides = broadcast_strides(kept_shape, t.shape);
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t off = 0;
  for (std::size_t i = 0; i < t.numel(); ++i) {
    sums[static_cast<std::size_t>(off)] += t.f[i];
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      off += strides[d];
      if (idx[d] < t.shape[d]) break;
      off -= strides[d] * t.shape[d];
      idx[d] = 0;
    }
  }
  const double count = static_cast<double>(t.numel()) / static_cast<double>(out_total);
  std::vector<float> out(out_total);
  for (std::size_t i = 0; i < out_total; ++i) out[i] = static_cast<float>(sums[i] / count);
  return {Tensor::floats(out_shape, std::move(out))};
}

std::vector<Tensor> op_pad(const Node& n, const Args& args, std::int64_t opset) {
  const Tensor& x = float_arg(args, 0, n);
  if (n.attr_string("mode", "constant") != "constant") {
    fail(ErrorKind::kUnsupported, "Pad: only constant mode");
  }
  std::vector<std::int64_t> pads;
  float value = 0.0f;
  if (opset >= 11) {
    pads = as_ints(arg(args, 1, n));
    if (const Tensor* v = opt_arg(args, 2); v && !v->f.empty()) value = v->f[0];
  } else {
    pads = n.attr_ints("pads");
    value = n.attr_float("value", 0.0f);
  }
  const std::size_t rank = x.shape.size();
  if (pads.size() != 2 * rank) fail(ErrorKind::kFormat, "Pad: pads must have 2*rank entries");
  Shape out_shape(rank);
  for (std::size_t d = 0; d < rank; ++d) out_shape[d] = x.shape[d] + pads[d] + pads[d + rank];
  std::vector<float> out(static_cast<std::size_t>(product(out_shape)), value);
  std::vector<std::int64_t> out_strides(rank, 1);
  for (std::size_t d = rank; d-- > 1;) out_strides[d - 1] = out_strides[d] * out_shape[d];
  std::vector<std::int64_t> idx(rank, 0);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    std::int64_t off = 0;
    bool inside = true;
    for (std::size_t d = 0; d < rank; ++d) {
      const std::int64_t o = idx[d] + pads[d];
      inside = inside && o >= 0 && o < out_shape[d];
      off += o * out_strides[d];
    }
    if (inside) out[static_cast<std::size_t>(off)] = x.f[i];
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < x.shape[d]) break;
      idx[d] = 0;
    }
  }
  return {Tensor::floats(out_shape, std::move(out))};
}

const std::unordered_map<std::string, OpFn>& registry() {
  static const std::unordered_map<std::string, OpFn> ops = {
      {"Add", op_add},
      {"AveragePool", op_avgpool},
      {"BatchNormalization", op_batchnorm},
      {"Cast", op_cast},
      {"Clip", op_clip},
      {"Concat", op_concat},
      {"Constant", op_constant},
      {"Conv", op_conv},
      {"Div", op_div},
      {"Dropout", op_identity},
      {"Flatten", op_flatten},
      {"Gather", op_gather},
      {"Gemm", op_gemm},
      {"GlobalAveragePool", op_gap},
      {"GlobalMaxPool", op_gmp},
      {"Identity", op_identity},
      {"LeakyRelu", op_leaky_relu},
      {"MatMul", op_matmul},
      {"MaxPool", op_maxpool},
      {"Mul", op_mul},
      {"Pad", op_pad},
      {"ReduceMean", op_reduce_mean},
      {"Relu", op_relu},
      {"Reshape", op_reshape},
      {"Shape", op_shape},
      {"Sigmoid", op_sigmoid},
      {"Softmax", op_softmax},
      {"Squeeze", op_squeeze},
      {"Sub", op_sub},
      {"Tanh", op_tanh},
      {"Transpose", op_transpose},
      {"Unsqueeze", op_unsqueeze},
  };
  return ops;
}

}  // namespace

OpFn find_op(const std::string& op_type) {
  const auto& ops = registry();
  auto it = ops.find(op_type);
  return it == ops.end() ? nullptr : it->second;
}

std::vector<std::string> supported_ops() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : registry()) names.push_back(name);
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace emocolor::onnx::detail
