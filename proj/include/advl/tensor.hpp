#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <cblas.h>

#include "advl/common.hpp"

namespace advl {

// Dense row-major tensor of doubles. Shape is dynamic; all numeric kernels in
// the library run on this one type.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(count(shape), 0.0);
  }
  Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != count(shape)) fail(errc::internal, "tensor data/shape mismatch");
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<std::size_t> s, double v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  std::size_t size() const { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
  }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape)
    fail(errc::config, std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

// ---- elementwise ----

inline Tensor& add_inplace(Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
  return a;
}

inline Tensor add(Tensor a, const Tensor& b) { return std::move(add_inplace(a, b)); }

inline Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.data[i];
  return out;
}

inline Tensor& scale_inplace(Tensor& a, double s) {
  for (double& v : a.data) v *= s;
  return a;
}

inline Tensor scale(Tensor a, double s) { return std::move(scale_inplace(a, s)); }

inline void axpy(double alpha, const Tensor& x, Tensor& y) {
  check_same_shape(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] += alpha * x.data[i];
}

inline Tensor tanh_ew(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.data) v = std::tanh(v);
  return out;
}

// Inverse hyperbolic tangent; the argument must lie strictly inside (-1, 1).
inline Tensor atanh_ew(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.data) {
    if (!(v > -1.0 && v < 1.0)) fail(errc::numeric, "atanh: argument outside (-1, 1)");
    v = std::atanh(v);
  }
  return out;
}

inline Tensor relu(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

inline double dot(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

inline double sum(const Tensor& a) { return std::accumulate(a.data.begin(), a.data.end(), 0.0); }

// Index of the maximum element; ties resolve to the lowest index.
inline std::size_t argmax(const std::vector<double>& v) {
  if (v.empty()) fail(errc::internal, "argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline std::size_t argmax(const Tensor& t) { return argmax(t.data); }

// ---- GEMM ----

namespace detail {
inline void blas_single_thread() {
  static const bool done = [] {
    openblas_set_num_threads(1);
    return true;
  }();
  (void)done;
}
}  // namespace detail

// C = op(A) * op(B), row-major. A is m x k after transposition, B is k x n.
inline void matmul_into(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                        std::size_t n, bool trans_a = false, bool trans_b = false) {
  detail::blas_single_thread();
  const auto lda = static_cast<int>(trans_a ? m : k);
  const auto ldb = static_cast<int>(trans_b ? k : n);
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0, a, lda, b, ldb, 0.0, c,
              static_cast<int>(n));
}

// A: [m x k], B: [k x n] -> [m x n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2)
    fail(errc::config, "matmul: operands must be rank 2, got " + a.shape_str() + " and " + b.shape_str());
  if (a.shape[1] != b.shape[0])
    fail(errc::config, "matmul: inner dimensions disagree, " + a.shape_str() + " vs " + b.shape_str());
  Tensor out({a.shape[0], b.shape[1]});
  matmul_into(a.data.data(), b.data.data(), out.data.data(), a.shape[0], a.shape[1], b.shape[1]);
  return out;
}

// ---- convolution (valid, stride 1) ----

// Unrolls [C x H x W] into a [C*kh*kw x out_h*out_w] matrix of receptive
// fields so convolution becomes one GEMM.
inline Tensor im2col(const Tensor& input, std::size_t kh, std::size_t kw) {
  if (input.shape.size() != 3) fail(errc::config, "im2col: input must be CxHxW, got " + input.shape_str());
  const std::size_t c = input.shape[0], h = input.shape[1], w = input.shape[2];
  if (h < kh || w < kw)
    fail(errc::config, "im2col: kernel larger than input, " + input.shape_str());
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  Tensor col({c * kh * kw, oh * ow});
  double* out = col.data.data();
  const double* in = input.data.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t ki = 0; ki < kh; ++ki)
      for (std::size_t kj = 0; kj < kw; ++kj) {
        double* row = out + ((ch * kh + ki) * kw + kj) * (oh * ow);
        const double* base = in + ch * h * w + ki * w + kj;
        for (std::size_t y = 0; y < oh; ++y) {
          const double* src = base + y * w;
          for (std::size_t x = 0; x < ow; ++x) row[y * ow + x] = src[x];
        }
      }
  return col;
}

// Scatter-add inverse of im2col.
inline Tensor col2im(const Tensor& col, std::size_t c, std::size_t h, std::size_t w, std::size_t kh,
                     std::size_t kw) {
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  if (col.shape.size() != 2 || col.shape[0] != c * kh * kw || col.shape[1] != oh * ow)
    fail(errc::internal, "col2im: column shape disagrees with geometry");
  Tensor img({c, h, w});
  const double* in = col.data.data();
  double* out = img.data.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t ki = 0; ki < kh; ++ki)
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const double* row = in + ((ch * kh + ki) * kw + kj) * (oh * ow);
        double* base = out + ch * h * w + ki * w + kj;
        for (std::size_t y = 0; y < oh; ++y) {
          double* dst = base + y * w;
          for (std::size_t x = 0; x < ow; ++x) dst[x] += row[y * ow + x];
        }
      }
  return img;
}

// kernels: [filters x in_c x kh x kw], input: [in_c x H x W].
// Returns [filters x (H-kh+1) x (W-kw+1)]. If col_out is non-null the im2col
// matrix is stashed there for reuse in the backward pass.
inline Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                             Tensor* col_out = nullptr) {
  if (kernels.shape.size() != 4)
    fail(errc::config, "conv2d: kernels must be FxCxKhxKw, got " + kernels.shape_str());
  const std::size_t f = kernels.shape[0], kc = kernels.shape[1], kh = kernels.shape[2], kw = kernels.shape[3];
  if (input.shape.size() != 3 || input.shape[0] != kc)
    fail(errc::config,
         "conv2d: input " + input.shape_str() + " incompatible with kernels " + kernels.shape_str());
  if (bias.size() != f) fail(errc::config, "conv2d: bias size disagrees with filter count");
  const std::size_t oh = input.shape[1] - kh + 1, ow = input.shape[2] - kw + 1;
  Tensor col = im2col(input, kh, kw);
  Tensor out({f, oh, ow});
  matmul_into(kernels.data.data(), col.data.data(), out.data.data(), f, kc * kh * kw, oh * ow);
  for (std::size_t i = 0; i < f; ++i) {
    double* plane = out.data.data() + i * oh * ow;
    for (std::size_t p = 0; p < oh * ow; ++p) plane[p] += bias.data[i];
  }
  if (col_out) *col_out = std::move(col);
  return out;
}

struct Conv2dGrads {
  Tensor input;    // d loss / d input
  Tensor kernels;  // d loss / d kernels
  Tensor bias;     // d loss / d bias
};

// grad_out: [filters x oh x ow]; col: the im2col matrix from the forward pass.
inline Conv2dGrads conv2d_backward(const Tensor& grad_out, const Tensor& kernels, const Tensor& col,
                                   const std::vector<std::size_t>& input_shape) {
  const std::size_t f = kernels.shape[0], kc = kernels.shape[1], kh = kernels.shape[2], kw = kernels.shape[3];
  const std::size_t oh = grad_out.shape[1], ow = grad_out.shape[2];
  const std::size_t k = kc * kh * kw, p = oh * ow;
  Conv2dGrads g;
  g.bias = Tensor({f});
  for (std::size_t i = 0; i < f; ++i) {
    const double* plane = grad_out.data.data() + i * p;
    double s = 0.0;
    for (std::size_t j = 0; j < p; ++j) s += plane[j];
    g.bias.data[i] = s;
  }
  g.kernels = Tensor({f, kc, kh, kw});
  // dW = G [f x p] * col^T [p x k]
  matmul_into(grad_out.data.data(), col.data.data(), g.kernels.data.data(), f, p, k, false, true);
  // dcol = W^T [k x f] * G [f x p]
  Tensor dcol({k, p});
  matmul_into(kernels.data.data(), grad_out.data.data(), dcol.data.data(), k, f, p, true, false);
  g.input = col2im(dcol, input_shape[0], input_shape[1], input_shape[2], kh, kw);
  return g;
}

// ---- 2x2 max pooling, stride 2 ----

// Ties resolve to the first candidate in row-major scan order. Odd trailing
// rows/columns are dropped (valid pooling).
inline Tensor maxpool2x2_forward(const Tensor& input, std::vector<std::size_t>* argmax_out) {
  if (input.shape.size() != 3) fail(errc::config, "maxpool: input must be CxHxW, got " + input.shape_str());
  const std::size_t c = input.shape[0], h = input.shape[1], w = input.shape[2];
  const std::size_t oh = h / 2, ow = w / 2;
  if (oh == 0 || ow == 0) fail(errc::config, "maxpool: input too small, " + input.shape_str());
  Tensor out({c, oh, ow});
  if (argmax_out) argmax_out->assign(c * oh * ow, 0);
  const double* in = input.data.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        const std::size_t base = ch * h * w + (2 * y) * w + 2 * x;
        const std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
        std::size_t best = cand[0];
        for (int i = 1; i < 4; ++i)
          if (in[cand[i]] > in[best]) best = cand[i];
        out.data[(ch * oh + y) * ow + x] = in[best];
        if (argmax_out) (*argmax_out)[(ch * oh + y) * ow + x] = best;
      }
  return out;
}

inline Tensor maxpool2x2_backward(const Tensor& grad_out, const std::vector<std::size_t>& argmax,
                                  const std::vector<std::size_t>& input_shape) {
  Tensor g(input_shape);
  if (argmax.size() != grad_out.size()) fail(errc::internal, "maxpool backward: argmax size mismatch");
  for (std::size_t i = 0; i < grad_out.size(); ++i) g.data[argmax[i]] += grad_out.data[i];
  return g;
}

}  // namespace advl
