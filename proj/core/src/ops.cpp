// Copyright 2026 The emil Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "emil/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace emil {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using MapConstMat = Eigen::Map<const RowMat<T>>;

template <typename T>
using NodeT = detail::Node<T>;

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
}

template <typename T>
NodeT<T>& input(NodeT<T>& out, std::size_t i) {
  return *out.inputs[i];
}

// Unary elementwise op whose derivative is expressible from (x, y).
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const char* name, const Tensor<T>& a, Fwd fwd, Deriv deriv) {
  auto x = a.values();
  std::vector<T> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  return make_op_result<T>(name, a.shape(), std::move(y), {a}, [deriv](NodeT<T>& out) {
    auto& in = input(out, 0);
    if (!in.requires_grad) return;
    auto& g = in.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += out.grad[i] * deriv(in.value[i], out.value[i]);
    }
  });
}

template <typename T>
T stable_sigmoid(T x) {
  T y;
  if (x >= T(0)) {
    y = T(1) / (T(1) + std::exp(-x));
  } else {
    T e = std::exp(x);
    y = e / (T(1) + e);
  }
  // Keep the result inside the open interval (0, 1) even when it saturates.
  constexpr T lo = std::numeric_limits<T>::min();
  constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
  return std::clamp(y, lo, hi);
}

// Per-output-index source pair and interpolation weight for align-corners-false.
struct Tap {
  std::size_t i0;
  std::size_t i1;
  double t;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t factor) {
  std::vector<Tap> taps(in * factor);
  for (std::size_t o = 0; o < taps.size(); ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    std::size_t i1 = std::min(i0 + 1, in - 1);
    double t = src - static_cast<double>(i0);
    if (i1 == i0) t = 0.0;
    taps[o] = {i0, i1, t};
  }
  return taps;
}

template <typename T>
void bilinear_forward(const T* src, std::size_t h, std::size_t w, std::size_t factor, T* dst,
                      const std::vector<Tap>& ty, const std::vector<Tap>& tx) {
  const std::size_t ow = w * factor;
  for (std::size_t oy = 0; oy < ty.size(); ++oy) {
    const auto& a = ty[oy];
    const T wy = static_cast<T>(a.t);
    const T* r0 = src + a.i0 * w;
    const T* r1 = src + a.i1 * w;
    for (std::size_t ox = 0; ox < tx.size(); ++ox) {
      const auto& b = tx[ox];
      const T wx = static_cast<T>(b.t);
      T top = (T(1) - wx) * r0[b.i0] + wx * r0[b.i1];
      T bot = (T(1) - wx) * r1[b.i0] + wx * r1[b.i1];
      dst[oy * ow + ox] = (T(1) - wy) * top + wy * bot;
    }
  }
  (void)h;
}

template <typename T>
void bilinear_backward(const T* gout, std::size_t w, std::size_t factor, T* gin,
                       const std::vector<Tap>& ty, const std::vector<Tap>& tx) {
  const std::size_t ow = w * factor;
  for (std::size_t oy = 0; oy < ty.size(); ++oy) {
    const auto& a = ty[oy];
    const T wy = static_cast<T>(a.t);
    T* r0 = gin + a.i0 * w;
    T* r1 = gin + a.i1 * w;
    for (std::size_t ox = 0; ox < tx.size(); ++ox) {
      const auto& b = tx[ox];
      const T wx = static_cast<T>(b.t);
      const T g = gout[oy * ow + ox];
      r0[b.i0] += g * (T(1) - wy) * (T(1) - wx);
      r0[b.i1] += g * (T(1) - wy) * wx;
      r1[b.i0] += g * wy * (T(1) - wx);
      r1[b.i1] += g * wy * wx;
    }
  }
}

}  // namespace

WindowGrid window_grid(Size2 input, Size2 kernel, Size2 stride) {
  require(kernel.h > 0 && kernel.w > 0, "window: kernel extents must be positive");
  require(stride.h > 0 && stride.w > 0, "window: stride extents must be positive");
  require(kernel.h <= input.h, "window: kernel height " + std::to_string(kernel.h) +
                                   " exceeds map height " + std::to_string(input.h));
  require(kernel.w <= input.w, "window: kernel width " + std::to_string(kernel.w) +
                                   " exceeds map width " + std::to_string(input.w));
  WindowGrid g{input, kernel, stride};
  g.rows = (input.h - kernel.h) / stride.h + 1;
  g.cols = (input.w - kernel.w) / stride.w + 1;
  return g;
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  auto x = a.values(), y = b.values();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_op_result<T>("add", a.shape(), std::move(out), {a, b}, [](NodeT<T>& o) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto& in = input(o, k);
      if (!in.requires_grad) continue;
      auto& g = in.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  auto x = a.values(), y = b.values();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_op_result<T>("sub", a.shape(), std::move(out), {a, b}, [](NodeT<T>& o) {
    auto& in0 = input(o, 0);
    auto& in1 = input(o, 1);
    if (in0.requires_grad) {
      auto& g = in0.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (in1.requires_grad) {
      auto& g = in1.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  auto x = a.values(), y = b.values();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_op_result<T>("mul", a.shape(), std::move(out), {a, b}, [](NodeT<T>& o) {
    auto& in0 = input(o, 0);
    auto& in1 = input(o, 1);
    if (in0.requires_grad) {
      auto& g = in0.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * in1.value[i];
    }
    if (in1.requires_grad) {
      auto& g = in1.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * in0.value[i];
    }
  });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "div");
  auto x = a.values(), y = b.values();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / y[i];
  return make_op_result<T>("div", a.shape(), std::move(out), {a, b}, [](NodeT<T>& o) {
    auto& in0 = input(o, 0);
    auto& in1 = input(o, 1);
    if (in0.requires_grad) {
      auto& g = in0.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] / in1.value[i];
    }
    if (in1.requires_grad) {
      auto& g = in1.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] -= o.grad[i] * in0.value[i] / (in1.value[i] * in1.value[i]);
      }
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary<T>("scale", a, [factor](T x) { return x * factor; },
                  [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T offset) {
  return unary<T>("add_scalar", a, [offset](T x) { return x + offset; },
                  [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary<T>("sigmoid", a, [](T x) { return stable_sigmoid(x); },
                  [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  static constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
  return unary<T>("tanh", a, [](T x) { return std::clamp(std::tanh(x), -hi, hi); },
                  [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary<T>("relu", a, [](T x) { return x > T(0) ? x : T(0); },
                  [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  return unary<T>("log", a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  return unary<T>("clamp", a, [lo, hi](T x) { return std::clamp(x, lo, hi); },
                  [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> clamp_min(const Tensor<T>& a, T floor) {
  return unary<T>("clamp_min", a, [floor](T x) { return x > floor ? x : floor; },
                  [floor](T x, T) { return x > floor ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = T(0);
  for (auto v : a.values()) s += v;
  return make_op_result<T>("sum", Shape{}, {s}, {a}, [](NodeT<T>& o) {
    auto& in = input(o, 0);
    if (!in.requires_grad) return;
    auto& g = in.ensure_grad();
    for (auto& v : g) v += o.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  T s = T(0);
  for (auto v : a.values()) s += v;
  const T n = static_cast<T>(a.numel());
  return make_op_result<T>("mean", Shape{}, {s / n}, {a}, [n](NodeT<T>& o) {
    auto& in = input(o, 0);
    if (!in.requires_grad) return;
    auto& g = in.ensure_grad();
    for (auto& v : g) v += o.grad[0] / n;
  });
}

template <typename T>
Tensor<T> max_reduce(const Tensor<T>& a) {
  auto x = a.values();
  std::size_t arg = 0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (x[i] > x[arg]) arg = i;
  }
  return make_op_result<T>("max_reduce", Shape{}, {x[arg]}, {a}, [arg](NodeT<T>& o) {
    auto& in = input(o, 0);
    if (!in.requires_grad) return;
    in.ensure_grad()[arg] += o.grad[0];
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a) {
  auto x = a.values();
  T m = *std::max_element(x.begin(), x.end());
  std::vector<T> y(x.size());
  T z = T(0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - m);
    z += y[i];
  }
  for (auto& v : y) v /= z;
  return make_op_result<T>("softmax", a.shape(), std::move(y), {a}, [](NodeT<T>& o) {
    auto& in = input(o, 0);
    if (!in.requires_grad) return;
    T dot = T(0);
    for (std::size_t i = 0; i < o.value.size(); ++i) dot += o.grad[i] * o.value[i];
    auto& g = in.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.value[i] * (o.grad[i] - dot);
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " +
                     shape_string(shape));
  }
  auto x = a.values();
  return make_op_result<T>("reshape", std::move(shape), std::vector<T>(x.begin(), x.end()), {a},
                           [](NodeT<T>& o) {
                             auto& in = input(o, 0);
                             if (!in.requires_grad) return;
                             auto& g = in.ensure_grad();
                             for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                           });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.rank() == 2, "matmul: left operand must be a matrix, got " + shape_string(a.shape()));
  require(b.rank() == 1 || b.rank() == 2,
          "matmul: right operand must be a vector or matrix, got " + shape_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1);
  const std::size_t n = b.rank() == 2 ? b.dim(1) : 1;
  require(b.dim(0) == k, "matmul: inner dimension mismatch, left dim 1 = " + std::to_string(k) +
                             ", right dim 0 = " + std::to_string(b.dim(0)));
  std::vector<T> out(m * n);
  MapConstMat<T> A(a.values().data(), m, k);
  MapConstMat<T> B(b.values().data(), k, n);
  MapMat<T>(out.data(), m, n).noalias() = A * B;
  Shape shape = b.rank() == 2 ? Shape{m, n} : Shape{m};
  return make_op_result<T>("matmul", std::move(shape), std::move(out), {a, b},
                           [m, k, n](NodeT<T>& o) {
                             auto& ia = input(o, 0);
                             auto& ib = input(o, 1);
                             MapConstMat<T> G(o.grad.data(), m, n);
                             if (ia.requires_grad) {
                               MapConstMat<T> B(ib.value.data(), k, n);
                               MapMat<T>(ia.ensure_grad().data(), m, k).noalias() += G * B.transpose();
                             }
                             if (ib.requires_grad) {
                               MapConstMat<T> A(ia.value.data(), m, k);
                               MapMat<T>(ib.ensure_grad().data(), k, n).noalias() += A.transpose() * G;
                             }
                           });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (!bias.defined()) return matmul(x, weight);
  require(weight.rank() == 2, "linear: weight must be k x n, got " + shape_string(weight.shape()));
  require(bias.rank() == 1 && bias.dim(0) == weight.dim(1),
          "linear: bias must have " + std::to_string(weight.dim(1)) + " entries, got " +
              shape_string(bias.shape()));
  auto y = matmul(x, weight);
  const std::size_t m = y.dim(0), n = y.dim(1);
  auto yv = y.values();
  auto bv = bias.values();
  std::vector<T> out(yv.begin(), yv.end());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  }
  return make_op_result<T>("linear", Shape{m, n}, std::move(out), {y, bias},
                           [m, n](NodeT<T>& o) {
                             auto& iy = input(o, 0);
                             auto& ib = input(o, 1);
                             if (iy.requires_grad) {
                               auto& g = iy.ensure_grad();
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                             }
                             if (ib.requires_grad) {
                               auto& g = ib.ensure_grad();
                               for (std::size_t i = 0; i < m; ++i) {
                                 for (std::size_t j = 0; j < n; ++j) g[j] += o.grad[i * n + j];
                               }
                             }
                           });
}

// ---------------------------------------------------------------------------
// conv2d via im2col + GEMM
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input_t, const Tensor<T>& weight, const Tensor<T>& bias,
                 Size2 stride, Size2 padding) {
  require(input_t.rank() == 4,
          "conv2d: input must be N x C x H x W, got " + shape_string(input_t.shape()));
  require(weight.rank() == 4,
          "conv2d: weight must be C_out x C_in x k_h x k_w, got " + shape_string(weight.shape()));
  require(stride.h > 0 && stride.w > 0, "conv2d: stride must be positive");
  const std::size_t n = input_t.dim(0), cin = input_t.dim(1), h = input_t.dim(2),
                    w = input_t.dim(3);
  const std::size_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  require(weight.dim(1) == cin, "conv2d: input channels (dim 1) = " + std::to_string(cin) +
                                    " but weight expects " + std::to_string(weight.dim(1)));
  require(kh <= h + 2 * padding.h, "conv2d: kernel height " + std::to_string(kh) +
                                       " exceeds padded input height " +
                                       std::to_string(h + 2 * padding.h));
  require(kw <= w + 2 * padding.w, "conv2d: kernel width " + std::to_string(kw) +
                                       " exceeds padded input width " +
                                       std::to_string(w + 2 * padding.w));
  if (bias.defined()) {
    require(bias.rank() == 1 && bias.dim(0) == cout,
            "conv2d: bias must have C_out = " + std::to_string(cout) + " entries, got " +
                shape_string(bias.shape()));
  }
  const std::size_t oh = (h + 2 * padding.h - kh) / stride.h + 1;
  const std::size_t ow = (w + 2 * padding.w - kw) / stride.w + 1;
  const std::size_t patch = cin * kh * kw;
  const std::size_t spatial = oh * ow;

  // cols(row = (c, ki, kj), col = (oy, ox)); shared by forward and backward.
  // For kernel column kj, output columns [x_lo, x_hi) read inside the image.
  auto valid_cols = [=](std::size_t kj) {
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kj) - static_cast<std::ptrdiff_t>(padding.w);
    const auto sw = static_cast<std::ptrdiff_t>(stride.w);
    std::ptrdiff_t lo = off >= 0 ? 0 : (-off + sw - 1) / sw;
    std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(w) - off <= 0
                            ? 0
                            : (static_cast<std::ptrdiff_t>(w) - off + sw - 1) / sw;
    hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(ow));
    lo = std::min(lo, hi);
    return std::pair<std::size_t, std::size_t>(static_cast<std::size_t>(lo), static_cast<std::size_t>(hi));
  };

  auto im2col = [=](const T* src, T* cols) {
    for (std::size_t c = 0; c < cin; ++c) {
      for (std::size_t ki = 0; ki < kh; ++ki) {
        for (std::size_t kj = 0; kj < kw; ++kj) {
          T* row = cols + ((c * kh + ki) * kw + kj) * spatial;
          const auto [x_lo, x_hi] = valid_cols(kj);
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride.h + ki) -
                                      static_cast<std::ptrdiff_t>(padding.h);
            T* dst = row + oy * ow;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
              std::fill(dst, dst + ow, T(0));
              continue;
            }
            const T* line = src + (c * h + static_cast<std::size_t>(iy)) * w;
            std::fill(dst, dst + x_lo, T(0));
            if (stride.w == 1) {
              std::copy(line + (x_lo + kj - padding.w), line + (x_hi + kj - padding.w), dst + x_lo);
            } else {
              for (std::size_t ox = x_lo; ox < x_hi; ++ox) {
                dst[ox] = line[ox * stride.w + kj - padding.w];
              }
            }
            std::fill(dst + x_hi, dst + ow, T(0));
          }
        }
      }
    }
  };

  auto col2im = [=](const T* cols, T* dst) {
    for (std::size_t c = 0; c < cin; ++c) {
      for (std::size_t ki = 0; ki < kh; ++ki) {
        for (std::size_t kj = 0; kj < kw; ++kj) {
          const T* row = cols + ((c * kh + ki) * kw + kj) * spatial;
          const auto [x_lo, x_hi] = valid_cols(kj);
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride.h + ki) -
                                      static_cast<std::ptrdiff_t>(padding.h);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            T* line = dst + (c * h + static_cast<std::size_t>(iy)) * w;
            const T* srow = row + oy * ow;
            for (std::size_t ox = x_lo; ox < x_hi; ++ox) line[ox * stride.w + kj - padding.w] += srow[ox];
          }
        }
      }
    }
  };

  const bool record = detail::grad_enabled() &&
                      (input_t.requires_grad() || weight.requires_grad() ||
                       (bias.defined() && bias.requires_grad()));
  auto cols_all = std::make_shared<std::vector<T>>(record ? n * patch * spatial : patch * spatial);
  std::vector<T> out(n * cout * spatial);
  MapConstMat<T> W(weight.values().data(), cout, patch);
  const T* x = input_t.values().data();
  for (std::size_t s = 0; s < n; ++s) {
    T* cols = cols_all->data() + (record ? s * patch * spatial : 0);
    im2col(x + s * cin * h * w, cols);
    MapMat<T> Y(out.data() + s * cout * spatial, cout, spatial);
    Y.noalias() = W * MapConstMat<T>(cols, patch, spatial);
    if (bias.defined()) {
      auto b = bias.values();
      for (std::size_t o = 0; o < cout; ++o) Y.row(o).array() += b[o];
    }
  }

  std::vector<Tensor<T>> inputs{input_t, weight};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return make_op_result<T>(
      "conv2d", Shape{n, cout, oh, ow}, std::move(out), std::move(inputs),
      [=](NodeT<T>& o) {
        auto& ix = input(o, 0);
        auto& iw = input(o, 1);
        MapConstMat<T> Wm(iw.value.data(), cout, patch);
        std::vector<T> dcols(ix.requires_grad ? patch * spatial : 0);
        for (std::size_t s = 0; s < n; ++s) {
          MapConstMat<T> G(o.grad.data() + s * cout * spatial, cout, spatial);
          MapConstMat<T> C(cols_all->data() + s * patch * spatial, patch, spatial);
          if (iw.requires_grad) {
            MapMat<T>(iw.ensure_grad().data(), cout, patch).noalias() += G * C.transpose();
          }
          if (has_bias && input(o, 2).requires_grad) {
            auto& gb = input(o, 2).ensure_grad();
            for (std::size_t c = 0; c < cout; ++c) gb[c] += G.row(c).sum();
          }
          if (ix.requires_grad) {
            MapMat<T>(dcols.data(), patch, spatial).noalias() = Wm.transpose() * G;
            col2im(dcols.data(), ix.ensure_grad().data() + s * cin * h * w);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Normalisation and slicing
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& input_t, const Tensor<T>& gamma, const Tensor<T>& beta,
                       Tensor<T> running_mean, Tensor<T> running_var, bool training,
                       double momentum, double eps) {
  require(input_t.rank() == 4,
          "batch_norm2d: input must be N x C x H x W, got " + shape_string(input_t.shape()));
  const std::size_t n = input_t.dim(0), c = input_t.dim(1), hw = input_t.dim(2) * input_t.dim(3);
  for (const Tensor<T>* t : std::array<const Tensor<T>*, 4>{&gamma, &beta, &running_mean, &running_var}) {
    require(t->rank() == 1 && t->dim(0) == c,
            "batch_norm2d: per-channel tensors must have C = " + std::to_string(c) +
                " entries, got " + shape_string(t->shape()));
  }
  const std::size_t count = n * hw;
  auto x = input_t.values();
  auto g = gamma.values();
  auto b = beta.values();
  // Sum of one channel over the batch: per-plane partial sums in T, total in double.
  auto channel_sum = [n, c, hw](const T* data, std::size_t ch, auto&& term) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * c + ch) * hw;
      T part = T(0);
      for (std::size_t k = 0; k < hw; ++k) part += term(off + k, data[off + k]);
      s += static_cast<double>(part);
    }
    return s;
  };
  // Per channel: the mean and 1 / sqrt(var + eps) actually used.
  auto mu = std::make_shared<std::vector<double>>(c);
  auto inv = std::make_shared<std::vector<double>>(c);
  if (training) {
    auto rm = running_mean.mutable_values();
    auto rv = running_var.mutable_values();
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double m = channel_sum(x.data(), ch, [](std::size_t, T v) { return v; }) /
                       static_cast<double>(count);
      const T mt = static_cast<T>(m);
      const double v = channel_sum(x.data(), ch, [mt](std::size_t, T u) { return (u - mt) * (u - mt); });
      const double var = v / static_cast<double>(count);
      (*mu)[ch] = m;
      (*inv)[ch] = 1.0 / std::sqrt(var + eps);
      const double unbiased = count > 1 ? v / static_cast<double>(count - 1) : var;
      rm[ch] = static_cast<T>((1.0 - momentum) * rm[ch] + momentum * m);
      rv[ch] = static_cast<T>((1.0 - momentum) * rv[ch] + momentum * unbiased);
    }
  } else {
    auto rm = running_mean.values();
    auto rv = running_var.values();
    for (std::size_t ch = 0; ch < c; ++ch) {
      (*mu)[ch] = rm[ch];
      (*inv)[ch] = 1.0 / std::sqrt(static_cast<double>(rv[ch]) + eps);
    }
  }
  std::vector<T> out(x.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double a = g[ch] * (*inv)[ch];
    const T scale = static_cast<T>(a);
    const T shift = static_cast<T>(b[ch] - a * (*mu)[ch]);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * c + ch) * hw;
      for (std::size_t k = 0; k < hw; ++k) out[off + k] = scale * x[off + k] + shift;
    }
  }
  return make_op_result<T>(
      "batch_norm2d", input_t.shape(), std::move(out), {input_t, gamma, beta},
      [=](NodeT<T>& o) {
        auto& ix = input(o, 0);
        auto& ig = input(o, 1);
        auto& ib = input(o, 2);
        const T* dy = o.grad.data();
        const T* xv = ix.value.data();
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double m = static_cast<double>(count);
          const double sum_dy = channel_sum(dy, ch, [](std::size_t, T d) { return d; });
          const double sum_dy_x = channel_sum(dy, ch, [xv](std::size_t j, T d) { return d * xv[j]; });
          // sum(dy * xhat) with xhat = (x - mu) * inv
          const double sum_dy_xhat = (sum_dy_x - (*mu)[ch] * sum_dy) * (*inv)[ch];
          if (ig.requires_grad) ig.ensure_grad()[ch] += static_cast<T>(sum_dy_xhat);
          if (ib.requires_grad) ib.ensure_grad()[ch] += static_cast<T>(sum_dy);
          if (!ix.requires_grad) continue;
          auto& gx = ix.ensure_grad();
          // gx += k1 * dy - k2 * x + k0
          const double k1 = ig.value[ch] * (*inv)[ch];
          double k2 = 0.0, k0 = 0.0;
          if (training) {
            k2 = k1 * (*inv)[ch] * sum_dy_xhat / m;
            k0 = -k1 * sum_dy / m + k2 * (*mu)[ch];
          }
          const T t1 = static_cast<T>(k1), t2 = static_cast<T>(k2), t0 = static_cast<T>(k0);
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t off = (i * c + ch) * hw;
            for (std::size_t k = 0; k < hw; ++k) {
              gx[off + k] += t1 * dy[off + k] - t2 * xv[off + k] + t0;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> select(const Tensor<T>& a, std::size_t index) {
  require(a.rank() >= 2, "select: need rank >= 2, got " + shape_string(a.shape()));
  require(index < a.dim(0), "select: index " + std::to_string(index) + " out of range for dim 0 = " +
                                std::to_string(a.dim(0)));
  Shape shape(a.shape().begin() + 1, a.shape().end());
  const std::size_t block = shape_numel(shape);
  auto x = a.values();
  std::vector<T> out(x.begin() + static_cast<std::ptrdiff_t>(index * block),
                     x.begin() + static_cast<std::ptrdiff_t>((index + 1) * block));
  return make_op_result<T>("select", std::move(shape), std::move(out), {a},
                           [index, block](NodeT<T>& o) {
                             auto& in = input(o, 0);
                             if (!in.requires_grad) return;
                             auto& g = in.ensure_grad();
                             for (std::size_t k = 0; k < block; ++k) g[index * block + k] += o.grad[k];
                           });
}

// ---------------------------------------------------------------------------
// Patch pooling
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> avg_pool_patches(const Tensor<T>& features, Size2 kernel, Size2 stride) {
  require(features.rank() == 3, "avg_pool_patches: features must be C x H x W, got " +
                                    shape_string(features.shape()));
  const std::size_t c = features.dim(0), h = features.dim(1), w = features.dim(2);
  const auto grid = window_grid({h, w}, kernel, stride);
  const std::size_t k = grid.count();
  const T inv = T(1) / static_cast<T>(kernel.h * kernel.w);
  auto u = features.values();
  std::vector<T> out(k * c, T(0));
  for (std::size_t p = 0; p < k; ++p) {
    const auto org = grid.origin(p);
    for (std::size_t ch = 0; ch < c; ++ch) {
      T s = T(0);
      for (std::size_t dy = 0; dy < kernel.h; ++dy) {
        const T* line = u.data() + (ch * h + org.h + dy) * w + org.w;
        for (std::size_t dx = 0; dx < kernel.w; ++dx) s += line[dx];
      }
      out[p * c + ch] = s * inv;
    }
  }
  return make_op_result<T>("avg_pool_patches", Shape{k, c}, std::move(out), {features},
                           [=](NodeT<T>& o) {
                             auto& in = input(o, 0);
                             if (!in.requires_grad) return;
                             auto& g = in.ensure_grad();
                             for (std::size_t p = 0; p < k; ++p) {
                               const auto org = grid.origin(p);
                               for (std::size_t ch = 0; ch < c; ++ch) {
                                 const T gv = o.grad[p * c + ch] * inv;
                                 for (std::size_t dy = 0; dy < kernel.h; ++dy) {
                                   T* line = g.data() + (ch * h + org.h + dy) * w + org.w;
                                   for (std::size_t dx = 0; dx < kernel.w; ++dx) line[dx] += gv;
                                 }
                               }
                             }
                           });
}

std::vector<std::uint8_t> max_pool2d(const Mask& mask, Size2 kernel, Size2 stride) {
  for (auto v : mask.data()) {
    if (v > 1) throw std::invalid_argument("max_pool2d: mask is not binary (value " +
                                           std::to_string(v) + ")");
  }
  const auto grid = window_grid(mask.extent(), kernel, stride);
  std::vector<std::uint8_t> out(grid.count(), 0);
  for (std::size_t p = 0; p < grid.count(); ++p) {
    const auto org = grid.origin(p);
    std::uint8_t hit = 0;
    for (std::size_t dy = 0; dy < kernel.h && !hit; ++dy) {
      for (std::size_t dx = 0; dx < kernel.w; ++dx) {
        if (mask(org.h + dy, org.w + dx)) {
          hit = 1;
          break;
        }
      }
    }
    out[p] = hit;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bilinear upsampling
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& map, std::size_t factor) {
  require(factor >= 1, "bilinear_upsample: factor must be >= 1");
  require(map.rank() == 2 || map.rank() == 3,
          "bilinear_upsample: expected H x W or C x H x W, got " + shape_string(map.shape()));
  const std::size_t c = map.rank() == 3 ? map.dim(0) : 1;
  const std::size_t h = map.dim(map.rank() - 2), w = map.dim(map.rank() - 1);
  Shape shape = map.shape();
  shape[shape.size() - 2] = h * factor;
  shape[shape.size() - 1] = w * factor;
  if (factor == 1) return reshape(map, shape);

  auto ty = std::make_shared<std::vector<Tap>>(bilinear_taps(h, factor));
  auto tx = std::make_shared<std::vector<Tap>>(bilinear_taps(w, factor));
  const std::size_t plane_in = h * w, plane_out = plane_in * factor * factor;
  std::vector<T> out(c * plane_out);
  auto src = map.values();
  for (std::size_t ch = 0; ch < c; ++ch) {
    bilinear_forward(src.data() + ch * plane_in, h, w, factor, out.data() + ch * plane_out, *ty,
                     *tx);
  }
  return make_op_result<T>("bilinear_upsample", std::move(shape), std::move(out), {map},
                           [=](NodeT<T>& o) {
                             auto& in = input(o, 0);
                             if (!in.requires_grad) return;
                             auto& g = in.ensure_grad();
                             for (std::size_t ch = 0; ch < c; ++ch) {
                               bilinear_backward(o.grad.data() + ch * plane_out, w, factor,
                                                 g.data() + ch * plane_in, *ty, *tx);
                             }
                           });
}

Grid<double> bilinear_upsample(const Grid<double>& map, std::size_t factor) {
  require(factor >= 1, "bilinear_upsample: factor must be >= 1");
  require(!map.empty(), "bilinear_upsample: empty grid");
  if (factor == 1) return map;
  auto ty = bilinear_taps(map.rows(), factor);
  auto tx = bilinear_taps(map.cols(), factor);
  Grid<double> out(map.rows() * factor, map.cols() * factor);
  bilinear_forward(map.data().data(), map.rows(), map.cols(), factor, out.data().data(), ty, tx);
  return out;
}

// ---------------------------------------------------------------------------
// Instantiations
// ---------------------------------------------------------------------------

#define EMIL_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> scale(const Tensor<T>&, T);                                             \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                        \
  template Tensor<T> sigmoid(const Tensor<T>&);                                              \
  template Tensor<T> tanh(const Tensor<T>&);                                                 \
  template Tensor<T> relu(const Tensor<T>&);                                                 \
  template Tensor<T> log(const Tensor<T>&);                                                  \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                                          \
  template Tensor<T> clamp_min(const Tensor<T>&, T);                                         \
  template Tensor<T> sum(const Tensor<T>&);                                                  \
  template Tensor<T> mean(const Tensor<T>&);                                                 \
  template Tensor<T> max_reduce(const Tensor<T>&);                                           \
  template Tensor<T> softmax(const Tensor<T>&);                                              \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                       \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Size2,     \
                            Size2);                                                          \
  template Tensor<T> batch_norm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                  Tensor<T>, Tensor<T>, bool, double, double);               \
  template Tensor<T> select(const Tensor<T>&, std::size_t);                                  \
  template Tensor<T> avg_pool_patches(const Tensor<T>&, Size2, Size2);                       \
  template Tensor<T> bilinear_upsample(const Tensor<T>&, std::size_t);

EMIL_INSTANTIATE_OPS(float)
EMIL_INSTANTIATE_OPS(double)

#undef EMIL_INSTANTIATE_OPS

}  // namespace emil
