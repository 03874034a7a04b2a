#pragma once

#include <cmath>
#include <vector>

#include "baris/autodiff.hpp"
#include "baris/kernels.hpp"

namespace baris {

using kernels::RoiBox;

inline constexpr RoiBox kFullImageBox{0.0, 0.0, 1.0, 1.0};

// ---------------------------------------------------------------------------
// convolution

template <typename T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>* bias, int stride,
              int pad_h, int pad_w, int groups = 1) {
  require_rank(x.val(), 4, "conv2d input");
  require_rank(w.val(), 4, "conv2d weight");
  const int64_t C = x.val().shape[1];
  const int64_t O = w.val().shape[0], Cg = w.val().shape[1];
  const int64_t KH = w.val().shape[2], KW = w.val().shape[3];
  if (groups < 1 || C % groups != 0)
    throw ShapeError("conv2d: input channels " + std::to_string(C) + " not divisible by groups " +
                     std::to_string(groups));
  if (O % groups != 0)
    throw ShapeError("conv2d: output channels " + std::to_string(O) + " not divisible by groups " +
                     std::to_string(groups));
  if (Cg != C / groups)
    throw ShapeError("conv2d: weight dim 1 is " + std::to_string(Cg) + ", expected C/groups = " +
                     std::to_string(C / groups));
  if (KH % 2 == 0 || KW % 2 == 0)
    throw ShapeError("conv2d: kernel dims must be odd, got " + std::to_string(KH) + "x" +
                     std::to_string(KW));
  if (bias && (bias->val().rank() != 1 || bias->val().shape[0] != O))
    throw ShapeError("conv2d: bias dim 0 must equal output channels " + std::to_string(O));
  const int64_t H = x.val().shape[2], W = x.val().shape[3];
  const int64_t hn = H + 2 * pad_h - KH, wn = W + 2 * pad_w - KW;
  if (hn < 0 || hn % stride != 0 || wn < 0 || wn % stride != 0)
    throw ShapeError("conv2d: spatial dims " + std::to_string(H) + "x" + std::to_string(W) +
                     " incompatible with kernel/stride/padding");

  auto out_val = kernels::conv2d_forward(x.val(), w.val(), bias ? &bias->val() : nullptr, stride,
                                         pad_h, pad_w, groups);
  const bool tracked = x.tracked() || w.tracked() || (bias && bias->tracked());
  Var<T> out = detail::make_output(std::move(out_val), tracked);
  if (tracked) {
    Var<T> xc = x, wc = w, bc = bias ? *bias : Var<T>{};
    tape.record([xc, wc, bc, out, stride, pad_h, pad_w, groups]() {
      if (xc.tracked())
        detail::accumulate(xc, kernels::conv2d_backward_input(*out.grad, wc.val(), xc.val().shape,
                                                              stride, pad_h, pad_w, groups));
      if (wc.tracked())
        detail::accumulate(wc, kernels::conv2d_backward_weight(*out.grad, xc.val(), wc.val().shape,
                                                               stride, pad_h, pad_w, groups));
      if (bc.value && bc.tracked())
        detail::accumulate(bc, kernels::conv2d_backward_bias(*out.grad));
    });
  }
  return out;
}

template <typename T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& x, const Var<T>& w, std::nullptr_t, int stride,
              int pad_h, int pad_w, int groups = 1) {
  return conv2d(tape, x, w, static_cast<const Var<T>*>(nullptr), stride, pad_h, pad_w, groups);
}

template <typename T>
Var<T> conv2d_same(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>* bias,
                   int groups = 1) {
  const int ph = static_cast<int>(w.val().shape[2] / 2);
  const int pw = static_cast<int>(w.val().shape[3] / 2);
  return conv2d(tape, x, w, bias, 1, ph, pw, groups);
}

template <typename T>
Var<T> conv2d_same(Tape<T>& tape, const Var<T>& x, const Var<T>& w, std::nullptr_t,
                   int groups = 1) {
  return conv2d_same(tape, x, w, static_cast<const Var<T>*>(nullptr), groups);
}

// ---------------------------------------------------------------------------
// pooling / resampling

template <typename T>
Var<T> max_pool2d_general(Tape<T>& tape, const Var<T>& x, int kernel, int stride, int pad) {
  require_rank(x.val(), 4, "max_pool2d input");
  auto argmax = std::make_shared<std::vector<int64_t>>();
  auto out_val = kernels::max_pool_forward(x.val(), kernel, stride, pad, argmax.get());
  Var<T> out = detail::make_output(std::move(out_val), x.tracked());
  if (x.tracked()) {
    Var<T> xc = x;
    tape.record([xc, out, argmax]() {
      detail::accumulate(xc, kernels::max_pool_backward(*out.grad, *argmax, xc.val().shape));
    });
  }
  return out;
}

// kernel = stride = scale, no padding
template <typename T>
Var<T> max_pool2d(Tape<T>& tape, const Var<T>& x, int scale) {
  require_rank(x.val(), 4, "max_pool2d input");
  if (scale < 1) throw std::invalid_argument("max_pool2d: scale must be >= 1");
  const int64_t H = x.val().shape[2], W = x.val().shape[3];
  if (H % scale != 0 || W % scale != 0)
    throw ShapeError("max_pool2d: spatial dims " + std::to_string(H) + "x" + std::to_string(W) +
                     " not divisible by scale " + std::to_string(scale));
  return max_pool2d_general(tape, x, scale, scale, 0);
}

template <typename T>
Var<T> avg_pool2d(Tape<T>& tape, const Var<T>& x, int scale) {
  require_rank(x.val(), 4, "avg_pool2d input");
  const int64_t H = x.val().shape[2], W = x.val().shape[3];
  if (H % scale != 0 || W % scale != 0)
    throw ShapeError("avg_pool2d: spatial dims not divisible by scale " + std::to_string(scale));
  Var<T> out = detail::make_output(kernels::avg_pool_forward(x.val(), scale), x.tracked());
  if (x.tracked()) {
    Var<T> xc = x;
    tape.record([xc, out, scale]() {
      detail::accumulate(xc, kernels::avg_pool_backward(*out.grad, xc.val().shape, scale));
    });
  }
  return out;
}

template <typename T>
Var<T> nearest_upsample(Tape<T>& tape, const Var<T>& x, int factor) {
  require_rank(x.val(), 4, "nearest_upsample input");
  if (factor < 1) throw std::invalid_argument("nearest_upsample: factor must be >= 1");
  Var<T> out = detail::make_output(kernels::nearest_upsample_forward(x.val(), factor), x.tracked());
  if (x.tracked()) {
    Var<T> xc = x;
    tape.record([xc, out, factor]() {
      detail::accumulate(xc, kernels::nearest_upsample_backward(*out.grad, factor));
    });
  }
  return out;
}

template <typename T>
Var<T> pixel_shuffle(Tape<T>& tape, const Var<T>& x, int r) {
  require_rank(x.val(), 4, "pixel_shuffle input");
  if (x.val().shape[1] % (r * r) != 0)
    throw ShapeError("pixel_shuffle: channel count " + std::to_string(x.val().shape[1]) +
                     " not divisible by r^2 = " + std::to_string(r * r));
  Var<T> out = detail::make_output(kernels::pixel_shuffle_forward(x.val(), r), x.tracked());
  if (x.tracked()) {
    Var<T> xc = x;
    tape.record([xc, out, r]() {
      detail::accumulate(xc, kernels::pixel_shuffle_backward(*out.grad, r));
    });
  }
  return out;
}

template <typename T>
Var<T> roi_align(Tape<T>& tape, const Var<T>& x, const RoiBox& box, int out_h, int out_w) {
  require_rank(x.val(), 4, "roi_align input");
  if (!(box.x0 < box.x1) || !(box.y0 < box.y1) || box.x0 < 0 || box.y0 < 0 || box.x1 > 1 ||
      box.y1 > 1)
    throw std::invalid_argument("roi_align: degenerate or out-of-range box");
  Var<T> out = detail::make_output(kernels::roi_align_forward(x.val(), box, out_h, out_w),
                                   x.tracked());
  if (x.tracked()) {
    Var<T> xc = x;
    tape.record([xc, out, box]() {
      detail::accumulate(xc, kernels::roi_align_backward(*out.grad, box, xc.val().shape));
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// normalization / linear

// Normalizes over the given axis (default: trailing), then scales/shifts with
// gamma/beta of length shape[axis].
template <typename T>
Var<T> layer_norm(Tape<T>& tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps,
                  int axis = -1) {
  const int r = x.val().rank();
  if (axis < 0) axis += r;
  const int64_t Cn = x.val().shape[static_cast<size_t>(axis)];
  if (gamma.val().numel() != Cn || beta.val().numel() != Cn)
    throw ShapeError("layer_norm: gamma/beta length must equal normalized dim " +
                     std::to_string(Cn));
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.val().shape[static_cast<size_t>(i)];
  for (int i = axis + 1; i < r; ++i) inner *= x.val().shape[static_cast<size_t>(i)];

  Tensor<T> out_val(x.val().shape);
  auto xhat = std::make_shared<Tensor<T>>(x.val().shape);
  auto istd = std::make_shared<Tensor<T>>(Shape{outer * inner});
  const Tensor<T>& xv = x.val();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      T mean = 0;
      for (int64_t c = 0; c < Cn; ++c) mean += xv[(o * Cn + c) * inner + i];
      mean /= static_cast<T>(Cn);
      T var = 0;
      for (int64_t c = 0; c < Cn; ++c) {
        const T d = xv[(o * Cn + c) * inner + i] - mean;
        var += d * d;
      }
      var /= static_cast<T>(Cn);
      const T is = T(1) / std::sqrt(var + eps);
      (*istd)[o * inner + i] = is;
      for (int64_t c = 0; c < Cn; ++c) {
        const T xh = (xv[(o * Cn + c) * inner + i] - mean) * is;
        (*xhat)[(o * Cn + c) * inner + i] = xh;
        out_val[(o * Cn + c) * inner + i] = gamma.val()[c] * xh + beta.val()[c];
      }
    }

  const bool tracked = x.tracked() || gamma.tracked() || beta.tracked();
  Var<T> out = detail::make_output(std::move(out_val), tracked);
  if (tracked) {
    Var<T> xc = x, gc = gamma, bc = beta;
    tape.record([xc, gc, bc, out, xhat, istd, outer, inner, Cn]() {
      const Tensor<T>& gy = *out.grad;
      if (gc.tracked() || bc.tracked()) {
        Tensor<T> dg({Cn}), db({Cn});
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t i = 0; i < inner; ++i)
            for (int64_t c = 0; c < Cn; ++c) {
              const int64_t idx = (o * Cn + c) * inner + i;
              dg[c] += gy[idx] * (*xhat)[idx];
              db[c] += gy[idx];
            }
        if (gc.tracked()) detail::accumulate(gc, dg);
        if (bc.tracked()) detail::accumulate(bc, db);
      }
      if (xc.tracked()) {
        Tensor<T> dx(xc.val().shape);
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t i = 0; i < inner; ++i) {
            T m1 = 0, m2 = 0;
            for (int64_t c = 0; c < Cn; ++c) {
              const int64_t idx = (o * Cn + c) * inner + i;
              const T dxh = gy[idx] * gc.val()[c];
              m1 += dxh;
              m2 += dxh * (*xhat)[idx];
            }
            m1 /= static_cast<T>(Cn);
            m2 /= static_cast<T>(Cn);
            const T is = (*istd)[o * inner + i];
            for (int64_t c = 0; c < Cn; ++c) {
              const int64_t idx = (o * Cn + c) * inner + i;
              dx[idx] = is * (gy[idx] * gc.val()[c] - m1 - (*xhat)[idx] * m2);
            }
          }
        detail::accumulate(xc, dx);
      }
    });
  }
  return out;
}

// Affine map over the trailing axis: out[..., j] = sum_i x[..., i] W[j, i] + b[j].
template <typename T>
Var<T> linear(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const int64_t Cin = x.val().shape.back();
  const int64_t Cout = w.val().shape[0];
  if (w.val().rank() != 2 || w.val().shape[1] != Cin)
    throw ShapeError("linear: weight " + shape_str(w.val().shape) +
                     " incompatible with input trailing dim " + std::to_string(Cin));
  if (b.val().numel() != Cout) throw ShapeError("linear: bias length must equal Cout");
  const int64_t rows = x.val().numel() / Cin;
  Shape out_shape = x.val().shape;
  out_shape.back() = Cout;
  Tensor<T> out_val(out_shape);
  for (int64_t rr = 0; rr < rows; ++rr)
    for (int64_t j = 0; j < Cout; ++j) {
      T acc = b.val()[j];
      for (int64_t i = 0; i < Cin; ++i) acc += x.val()[rr * Cin + i] * w.val()[j * Cin + i];
      out_val[rr * Cout + j] = acc;
    }
  const bool tracked = x.tracked() || w.tracked() || b.tracked();
  Var<T> out = detail::make_output(std::move(out_val), tracked);
  if (tracked) {
    Var<T> xc = x, wc = w, bc = b;
    tape.record([xc, wc, bc, out, rows, Cin, Cout]() {
      const Tensor<T>& gy = *out.grad;
      if (xc.tracked()) {
        Tensor<T> dx(xc.val().shape);
        for (int64_t rr = 0; rr < rows; ++rr)
          for (int64_t i = 0; i < Cin; ++i) {
            T acc = 0;
            for (int64_t j = 0; j < Cout; ++j) acc += gy[rr * Cout + j] * wc.val()[j * Cin + i];
            dx[rr * Cin + i] = acc;
          }
        detail::accumulate(xc, dx);
      }
      if (wc.tracked()) {
        Tensor<T> dw(wc.val().shape);
        for (int64_t j = 0; j < Cout; ++j)
          for (int64_t i = 0; i < Cin; ++i) {
            T acc = 0;
            for (int64_t rr = 0; rr < rows; ++rr) acc += gy[rr * Cout + j] * xc.val()[rr * Cin + i];
            dw[j * Cin + i] = acc;
          }
        detail::accumulate(wc, dw);
      }
      if (bc.tracked()) {
        Tensor<T> db(bc.val().shape);
        for (int64_t j = 0; j < Cout; ++j) {
          T acc = 0;
          for (int64_t rr = 0; rr < rows; ++rr) acc += gy[rr * Cout + j];
          db[j] = acc;
        }
        detail::accumulate(bc, db);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// activations

namespace detail {

template <typename T, typename FwdFn, typename BwdFn>
Var<T> elementwise(Tape<T>& tape, const Var<T>& x, FwdFn fwd, BwdFn dfdx_from_xy) {
  Tensor<T> out_val(x.val().shape);
  for (int64_t i = 0; i < x.val().numel(); ++i) out_val[i] = fwd(x.val()[i]);
  Var<T> out = detail::make_output(std::move(out_val), x.tracked());
  if (x.tracked()) {
    Var<T> xc = x;
    tape.record([xc, out, dfdx_from_xy]() {
      Tensor<T> dx(xc.val().shape);
      for (int64_t i = 0; i < dx.numel(); ++i)
        dx[i] = (*out.grad)[i] * dfdx_from_xy(xc.val()[i], out.val()[i]);
      detail::accumulate(xc, dx);
    });
  }
  return out;
}

}  // namespace detail

template <typename T>
Var<T> relu(Tape<T>& tape, const Var<T>& x) {
  return detail::elementwise(
      tape, x, [](T v) { return v > 0 ? v : T(0); }, [](T v, T) { return v > 0 ? T(1) : T(0); });
}

template <typename T>
Var<T> sigmoid(Tape<T>& tape, const Var<T>& x) {
  return detail::elementwise(
      tape, x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

// Exact Gaussian-CDF form.
template <typename T>
Var<T> gelu(Tape<T>& tape, const Var<T>& x) {
  static const T inv_sqrt2 = static_cast<T>(0.7071067811865475244);
  static const T inv_sqrt2pi = static_cast<T>(0.3989422804014326779);
  return detail::elementwise(
      tape, x,
      [](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
      [](T v, T) {
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
        return cdf + v * pdf;
      });
}

template <typename T>
Var<T> softmax(Tape<T>& tape, const Var<T>& x, int axis) {
  const int r = x.val().rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw std::invalid_argument("softmax: invalid axis");
  const int64_t Cn = x.val().shape[static_cast<size_t>(axis)];
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.val().shape[static_cast<size_t>(i)];
  for (int i = axis + 1; i < r; ++i) inner *= x.val().shape[static_cast<size_t>(i)];
  Tensor<T> out_val(x.val().shape);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      T mx = -std::numeric_limits<T>::infinity();
      for (int64_t c = 0; c < Cn; ++c) mx = std::max(mx, x.val()[(o * Cn + c) * inner + i]);
      T sum = 0;
      for (int64_t c = 0; c < Cn; ++c) {
        const T e = std::exp(x.val()[(o * Cn + c) * inner + i] - mx);
        out_val[(o * Cn + c) * inner + i] = e;
        sum += e;
      }
      for (int64_t c = 0; c < Cn; ++c) out_val[(o * Cn + c) * inner + i] /= sum;
    }
  Var<T> out = detail::make_output(std::move(out_val), x.tracked());
  if (x.tracked()) {
    Var<T> xc = x;
    tape.record([xc, out, outer, inner, Cn]() {
      Tensor<T> dx(xc.val().shape);
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < inner; ++i) {
          T dot = 0;
          for (int64_t c = 0; c < Cn; ++c) {
            const int64_t idx = (o * Cn + c) * inner + i;
            dot += out.val()[idx] * (*out.grad)[idx];
          }
          for (int64_t c = 0; c < Cn; ++c) {
            const int64_t idx = (o * Cn + c) * inner + i;
            dx[idx] = out.val()[idx] * ((*out.grad)[idx] - dot);
          }
        }
      detail::accumulate(xc, dx);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions and shape ops

template <typename T>
Var<T> global_avg_pool(Tape<T>& tape, const Var<T>& x) {
  require_rank(x.val(), 4, "global_avg_pool input");
  const int64_t N = x.val().shape[0], C = x.val().shape[1];
  const int64_t HW = x.val().shape[2] * x.val().shape[3];
  Tensor<T> out_val({N, C, 1, 1});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      T acc = 0;
      for (int64_t i = 0; i < HW; ++i) acc += x.val()[(n * C + c) * HW + i];
      out_val[n * C + c] = acc / static_cast<T>(HW);
    }
  Var<T> out = detail::make_output(std::move(out_val), x.tracked());
  if (x.tracked()) {
    Var<T> xc = x;
    tape.record([xc, out, N, C, HW]() {
      Tensor<T> dx(xc.val().shape);
      for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
          const T g = (*out.grad)[n * C + c] / static_cast<T>(HW);
          for (int64_t i = 0; i < HW; ++i) dx[(n * C + c) * HW + i] = g;
        }
      detail::accumulate(xc, dx);
    });
  }
  return out;
}

template <typename T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.val(), b.val(), "add");
  Tensor<T> out_val(a.val().shape);
  for (int64_t i = 0; i < out_val.numel(); ++i) out_val[i] = a.val()[i] + b.val()[i];
  const bool tracked = a.tracked() || b.tracked();
  Var<T> out = detail::make_output(std::move(out_val), tracked);
  if (tracked) {
    Var<T> ac = a, bc = b;
    tape.record([ac, bc, out]() {
      detail::accumulate(ac, *out.grad);
      detail::accumulate(bc, *out.grad);
    });
  }
  return out;
}

template <typename T>
Var<T> sub(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.val(), b.val(), "sub");
  Tensor<T> out_val(a.val().shape);
  for (int64_t i = 0; i < out_val.numel(); ++i) out_val[i] = a.val()[i] - b.val()[i];
  const bool tracked = a.tracked() || b.tracked();
  Var<T> out = detail::make_output(std::move(out_val), tracked);
  if (tracked) {
    Var<T> ac = a, bc = b;
    tape.record([ac, bc, out]() {
      detail::accumulate(ac, *out.grad);
      if (bc.tracked()) {
        Tensor<T> d(bc.val().shape);
        for (int64_t i = 0; i < d.numel(); ++i) d[i] = -(*out.grad)[i];
        detail::accumulate(bc, d);
      }
    });
  }
  return out;
}

// out[n,c,h,w] = x[n,c,h,w] * g[n,c,0,0]; per-sample per-channel gate map.
template <typename T>
Var<T> scale_by_channel_map(Tape<T>& tape, const Var<T>& x, const Var<T>& g) {
  require_rank(x.val(), 4, "scale_by_channel_map input");
  require_rank(g.val(), 4, "scale_by_channel_map gate");
  const int64_t N = x.val().shape[0], C = x.val().shape[1];
  const int64_t HW = x.val().shape[2] * x.val().shape[3];
  if (g.val().shape[0] != N || g.val().shape[1] != C || g.val().shape[2] != 1 ||
      g.val().shape[3] != 1)
    throw ShapeError("scale_by_channel_map: gate must be (N,C,1,1), got " +
                     shape_str(g.val().shape));
  Tensor<T> out_val(x.val().shape);
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < HW; ++i)
        out_val[(n * C + c) * HW + i] = x.val()[(n * C + c) * HW + i] * g.val()[n * C + c];
  const bool tracked = x.tracked() || g.tracked();
  Var<T> out = detail::make_output(std::move(out_val), tracked);
  if (tracked) {
    Var<T> xc = x, gc = g;
    tape.record([xc, gc, out, N, C, HW]() {
      if (xc.tracked()) {
        Tensor<T> d(xc.val().shape);
        for (int64_t n = 0; n < N; ++n)
          for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < HW; ++i)
              d[(n * C + c) * HW + i] = (*out.grad)[(n * C + c) * HW + i] * gc.val()[n * C + c];
        detail::accumulate(xc, d);
      }
      if (gc.tracked()) {
        Tensor<T> d(gc.val().shape);
        for (int64_t n = 0; n < N; ++n)
          for (int64_t c = 0; c < C; ++c) {
            T acc = 0;
            for (int64_t i = 0; i < HW; ++i)
              acc += (*out.grad)[(n * C + c) * HW + i] * xc.val()[(n * C + c) * HW + i];
            d[n * C + c] = acc;
          }
        detail::accumulate(gc, d);
      }
    });
  }
  return out;
}

template <typename T>
Var<T> hadamard(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.val(), b.val(), "hadamard");
  Tensor<T> out_val(a.val().shape);
  for (int64_t i = 0; i < out_val.numel(); ++i) out_val[i] = a.val()[i] * b.val()[i];
  const bool tracked = a.tracked() || b.tracked();
  Var<T> out = detail::make_output(std::move(out_val), tracked);
  if (tracked) {
    Var<T> ac = a, bc = b;
    tape.record([ac, bc, out]() {
      if (ac.tracked()) {
        Tensor<T> d(ac.val().shape);
        for (int64_t i = 0; i < d.numel(); ++i) d[i] = (*out.grad)[i] * bc.val()[i];
        detail::accumulate(ac, d);
      }
      if (bc.tracked()) {
        Tensor<T> d(bc.val().shape);
        for (int64_t i = 0; i < d.numel(); ++i) d[i] = (*out.grad)[i] * ac.val()[i];
        detail::accumulate(bc, d);
      }
    });
  }
  return out;
}

template <typename T>
Var<T> scale(Tape<T>& tape, const Var<T>& x, T s) {
  Tensor<T> out_val(x.val().shape);
  for (int64_t i = 0; i < out_val.numel(); ++i) out_val[i] = x.val()[i] * s;
  Var<T> out = detail::make_output(std::move(out_val), x.tracked());
  if (x.tracked()) {
    Var<T> xc = x;
    tape.record([xc, out, s]() {
      Tensor<T> d(xc.val().shape);
      for (int64_t i = 0; i < d.numel(); ++i) d[i] = (*out.grad)[i] * s;
      detail::accumulate(xc, d);
    });
  }
  return out;
}

// out[n,c,h,w] = x[n,c,h,w] * s[c]; per-channel scaling vector on NCHW.
template <typename T>
Var<T> channel_scale(Tape<T>& tape, const Var<T>& x, const Var<T>& s) {
  require_rank(x.val(), 4, "channel_scale input");
  const int64_t N = x.val().shape[0], C = x.val().shape[1];
  const int64_t HW = x.val().shape[2] * x.val().shape[3];
  if (s.val().numel() != C)
    throw ShapeError("channel_scale: scale length must equal channels " + std::to_string(C));
  Tensor<T> out_val(x.val().shape);
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < HW; ++i)
        out_val[(n * C + c) * HW + i] = x.val()[(n * C + c) * HW + i] * s.val()[c];
  const bool tracked = x.tracked() || s.tracked();
  Var<T> out = detail::make_output(std::move(out_val), tracked);
  if (tracked) {
    Var<T> xc = x, sc = s;
    tape.record([xc, sc, out, N, C, HW]() {
      if (xc.tracked()) {
        Tensor<T> d(xc.val().shape);
        for (int64_t n = 0; n < N; ++n)
          for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < HW; ++i)
              d[(n * C + c) * HW + i] = (*out.grad)[(n * C + c) * HW + i] * sc.val()[c];
        detail::accumulate(xc, d);
      }
      if (sc.tracked()) {
        Tensor<T> d(sc.val().shape);
        for (int64_t n = 0; n < N; ++n)
          for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < HW; ++i)
              d[c] += (*out.grad)[(n * C + c) * HW + i] * xc.val()[(n * C + c) * HW + i];
        detail::accumulate(sc, d);
      }
    });
  }
  return out;
}

template <typename T>
Var<T> average(Tape<T>& tape, const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("average: empty operand list");
  for (const auto& v : xs) require_same_shape(xs[0].val(), v.val(), "average");
  Tensor<T> out_val = Tensor<T>::zeros(xs[0].val().shape);
  for (const auto& v : xs)
    for (int64_t i = 0; i < out_val.numel(); ++i) out_val[i] += v.val()[i];
  const T inv = T(1) / static_cast<T>(xs.size());
  for (int64_t i = 0; i < out_val.numel(); ++i) out_val[i] *= inv;
  bool tracked = false;
  for (const auto& v : xs) tracked = tracked || v.tracked();
  Var<T> out = detail::make_output(std::move(out_val), tracked);
  if (tracked) {
    std::vector<Var<T>> xsc = xs;
    tape.record([xsc, out, inv]() {
      Tensor<T> d(out.val().shape);
      for (int64_t i = 0; i < d.numel(); ++i) d[i] = (*out.grad)[i] * inv;
      for (const auto& v : xsc) detail::accumulate(v, d);
    });
  }
  return out;
}

template <typename T>
Var<T> concat(Tape<T>& tape, const std::vector<Var<T>>& xs, int axis) {
  if (xs.empty()) throw std::invalid_argument("concat: empty operand list");
  const int r = xs[0].val().rank();
  if (axis < 0) axis += r;
  Shape out_shape = xs[0].val().shape;
  for (size_t k = 1; k < xs.size(); ++k) {
    const Shape& s = xs[k].val().shape;
    for (int i = 0; i < r; ++i)
      if (i != axis && s[static_cast<size_t>(i)] != out_shape[static_cast<size_t>(i)])
        throw ShapeError("concat: operand " + std::to_string(k) + " has shape " + shape_str(s) +
                         ", incompatible on dim " + std::to_string(i));
    out_shape[static_cast<size_t>(axis)] += s[static_cast<size_t>(axis)];
  }
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[static_cast<size_t>(i)];
  for (int i = axis + 1; i < r; ++i) inner *= out_shape[static_cast<size_t>(i)];
  const int64_t Ctot = out_shape[static_cast<size_t>(axis)];
  Tensor<T> out_val(out_shape);
  int64_t off = 0;
  for (const auto& v : xs) {
    const int64_t Ck = v.val().shape[static_cast<size_t>(axis)];
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t c = 0; c < Ck; ++c)
        for (int64_t i = 0; i < inner; ++i)
          out_val[(o * Ctot + off + c) * inner + i] = v.val()[(o * Ck + c) * inner + i];
    off += Ck;
  }
  bool tracked = false;
  for (const auto& v : xs) tracked = tracked || v.tracked();
  Var<T> out = detail::make_output(std::move(out_val), tracked);
  if (tracked) {
    std::vector<Var<T>> xsc = xs;
    const size_t ax = static_cast<size_t>(axis);
    tape.record([xsc, out, outer, inner, Ctot, ax]() {
      int64_t off2 = 0;
      for (const auto& v : xsc) {
        const int64_t Ck = v.val().shape[ax];
        if (v.tracked()) {
          Tensor<T> d(v.val().shape);
          for (int64_t o = 0; o < outer; ++o)
            for (int64_t c = 0; c < Ck; ++c)
              for (int64_t i = 0; i < inner; ++i)
                d[(o * Ck + c) * inner + i] = (*out.grad)[(o * Ctot + off2 + c) * inner + i];
          detail::accumulate(v, d);
        }
        off2 += Ck;
      }
    });
  }
  return out;
}

// Rows [n0, n1) along the leading (batch) dimension.
template <typename T>
Var<T> slice_batch(Tape<T>& tape, const Var<T>& x, int64_t n0, int64_t n1) {
  const int64_t N = x.val().shape[0];
  if (n0 < 0 || n1 <= n0 || n1 > N)
    throw std::invalid_argument("slice_batch: bad range [" + std::to_string(n0) + ", " +
                                std::to_string(n1) + ") for batch of " + std::to_string(N));
  Shape out_shape = x.val().shape;
  out_shape[0] = n1 - n0;
  const int64_t inner = x.val().numel() / N;
  Tensor<T> out_val(out_shape);
  for (int64_t i = 0; i < out_val.numel(); ++i) out_val[i] = x.val()[n0 * inner + i];
  Var<T> out = detail::make_output(std::move(out_val), x.tracked());
  if (x.tracked()) {
    Var<T> xc = x;
    tape.record([xc, out, n0, inner]() {
      Tensor<T> d = Tensor<T>::zeros(xc.val().shape);
      for (int64_t i = 0; i < out.grad->numel(); ++i) d[n0 * inner + i] = (*out.grad)[i];
      detail::accumulate(xc, d);
    });
  }
  return out;
}

template <typename T>
Var<T> sum(Tape<T>& tape, const Var<T>& x) {
  T acc = 0;
  for (int64_t i = 0; i < x.val().numel(); ++i) acc += x.val()[i];
  Var<T> out = detail::make_output(Tensor<T>({1}, {acc}), x.tracked());
  if (x.tracked()) {
    Var<T> xc = x;
    tape.record([xc, out]() {
      Tensor<T> d = Tensor<T>::full(xc.val().shape, (*out.grad)[0]);
      detail::accumulate(xc, d);
    });
  }
  return out;
}

template <typename T>
Var<T> mean(Tape<T>& tape, const Var<T>& x) {
  return scale(tape, sum(tape, x), T(1) / static_cast<T>(x.val().numel()));
}

// Mixes embedding rows by per-pixel weights:
// out[n,:,h,w] = sum_k weights[n,k,h,w] * E[k,:].
template <typename T>
Var<T> embed_mix(Tape<T>& tape, const Var<T>& weights, const Var<T>& emb) {
  require_rank(weights.val(), 4, "embed_mix weights");
  require_rank(emb.val(), 2, "embed_mix embeddings");
  const int64_t N = weights.val().shape[0], K = weights.val().shape[1];
  const int64_t H = weights.val().shape[2], W = weights.val().shape[3];
  if (emb.val().shape[0] != K)
    throw ShapeError("embed_mix: weights channel dim " + std::to_string(K) +
                     " must equal embedding rows " + std::to_string(emb.val().shape[0]));
  const int64_t Cp = emb.val().shape[1];
  Tensor<T> out_val({N, Cp, H, W});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x)
        for (int64_t c = 0; c < Cp; ++c) {
          T acc = 0;
          for (int64_t k = 0; k < K; ++k)
            acc += weights.val().at4(n, k, y, x) * emb.val()[k * Cp + c];
          out_val.at4(n, c, y, x) = acc;
        }
  const bool tracked = weights.tracked() || emb.tracked();
  Var<T> out = detail::make_output(std::move(out_val), tracked);
  if (tracked) {
    Var<T> wc = weights, ec = emb;
    tape.record([wc, ec, out, N, K, H, W, Cp]() {
      if (wc.tracked()) {
        Tensor<T> d(wc.val().shape);
        for (int64_t n = 0; n < N; ++n)
          for (int64_t k = 0; k < K; ++k)
            for (int64_t y = 0; y < H; ++y)
              for (int64_t x = 0; x < W; ++x) {
                T acc = 0;
                for (int64_t c = 0; c < Cp; ++c)
                  acc += out.grad->at4(n, c, y, x) * ec.val()[k * Cp + c];
                d.at4(n, k, y, x) = acc;
              }
        detail::accumulate(wc, d);
      }
      if (ec.tracked()) {
        Tensor<T> d(ec.val().shape);
        for (int64_t k = 0; k < K; ++k)
          for (int64_t c = 0; c < Cp; ++c) {
            T acc = 0;
            for (int64_t n = 0; n < N; ++n)
              for (int64_t y = 0; y < H; ++y)
                for (int64_t x = 0; x < W; ++x)
                  acc += out.grad->at4(n, c, y, x) * wc.val().at4(n, k, y, x);
            d[k * Cp + c] = acc;
          }
        detail::accumulate(ec, d);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// losses

// Mean over all elements of weight * [max(x,0) - x*t + log(1 + exp(-|x|))].
template <typename T>
Var<T> bce_with_logits(Tape<T>& tape, const Var<T>& logits, const Var<T>& target,
                       const Var<T>* weight = nullptr) {
  require_same_shape(logits.val(), target.val(), "bce_with_logits");
  if (weight) require_same_shape(logits.val(), weight->val(), "bce_with_logits weight");
  const int64_t M = logits.val().numel();
  T acc = 0;
  for (int64_t i = 0; i < M; ++i) {
    const T x = logits.val()[i];
    const T t = target.val()[i];
    const T w = weight ? weight->val()[i] : T(1);
    acc += w * (std::max(x, T(0)) - x * t + std::log1p(std::exp(-std::abs(x))));
  }
  acc /= static_cast<T>(M);
  const bool tracked = logits.tracked();
  Var<T> out = detail::make_output(Tensor<T>({1}, {acc}), tracked);
  if (tracked) {
    Var<T> lc = logits, tc = target;
    Var<T> wc = weight ? *weight : Var<T>{};
    tape.record([lc, tc, wc, out, M]() {
      Tensor<T> d(lc.val().shape);
      for (int64_t i = 0; i < M; ++i) {
        const T x = lc.val()[i];
        const T s = T(1) / (T(1) + std::exp(-x));
        const T w = wc.value ? wc.val()[i] : T(1);
        d[i] = (*out.grad)[0] * w * (s - tc.val()[i]) / static_cast<T>(M);
      }
      detail::accumulate(lc, d);
    });
  }
  return out;
}

}  // namespace baris
