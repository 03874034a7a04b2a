#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "baris/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

// Data-parallel compute kernels. Every loop nest parallelizes over independent
// output (or input, for gather-style backward) elements with a fixed inner
// summation order, so results are identical for any thread count.

namespace baris::kernels {

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>* bias,
                         int stride, int pad_h, int pad_w, int groups) {
  const int64_t N = in.shape[0], C = in.shape[1], H = in.shape[2], W = in.shape[3];
  const int64_t O = w.shape[0], Cg = w.shape[1], KH = w.shape[2], KW = w.shape[3];
  const int64_t Ho = (H + 2 * pad_h - KH) / stride + 1;
  const int64_t Wo = (W + 2 * pad_w - KW) / stride + 1;
  const int64_t Og = O / groups;
  Tensor<T> out({N, O, Ho, Wo});
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t o = 0; o < O; ++o) {
      const int64_t g = o / Og;
      const int64_t c0 = g * Cg;
      for (int64_t y = 0; y < Ho; ++y) {
        for (int64_t x = 0; x < Wo; ++x) {
          T acc = bias ? (*bias)[o] : T(0);
          for (int64_t c = 0; c < Cg; ++c) {
            for (int64_t ky = 0; ky < KH; ++ky) {
              const int64_t iy = y * stride + ky - pad_h;
              if (iy < 0 || iy >= H) continue;
              for (int64_t kx = 0; kx < KW; ++kx) {
                const int64_t ix = x * stride + kx - pad_w;
                if (ix < 0 || ix >= W) continue;
                acc += in.at4(n, c0 + c, iy, ix) * w.at4(o, c, ky, kx);
              }
            }
          }
          out.at4(n, o, y, x) = acc;
        }
      }
    }
  }
  (void)C;
  return out;
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& in, const Tensor<T>& w, std::nullptr_t, int stride,
                         int pad_h, int pad_w, int groups) {
  return conv2d_forward(in, w, static_cast<const Tensor<T>*>(nullptr), stride, pad_h, pad_w,
                        groups);
}

template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& gout, const Tensor<T>& w, const Shape& in_shape,
                                int stride, int pad_h, int pad_w, int groups) {
  const int64_t N = in_shape[0], C = in_shape[1], H = in_shape[2], W = in_shape[3];
  const int64_t O = w.shape[0], Cg = w.shape[1], KH = w.shape[2], KW = w.shape[3];
  const int64_t Ho = gout.shape[2], Wo = gout.shape[3];
  const int64_t Og = O / groups;
  Tensor<T> din(in_shape);
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const int64_t g = c / Cg;
      const int64_t cl = c - g * Cg;
      for (int64_t iy = 0; iy < H; ++iy) {
        for (int64_t ix = 0; ix < W; ++ix) {
          T acc = 0;
          for (int64_t o = g * Og; o < (g + 1) * Og; ++o) {
            for (int64_t ky = 0; ky < KH; ++ky) {
              const int64_t ynum = iy + pad_h - ky;
              if (ynum < 0 || ynum % stride) continue;
              const int64_t y = ynum / stride;
              if (y >= Ho) continue;
              for (int64_t kx = 0; kx < KW; ++kx) {
                const int64_t xnum = ix + pad_w - kx;
                if (xnum < 0 || xnum % stride) continue;
                const int64_t x = xnum / stride;
                if (x >= Wo) continue;
                acc += gout.at4(n, o, y, x) * w.at4(o, cl, ky, kx);
              }
            }
          }
          din.at4(n, c, iy, ix) = acc;
        }
      }
    }
  }
  return din;
}

template <typename T>
Tensor<T> conv2d_backward_weight(const Tensor<T>& gout, const Tensor<T>& in, const Shape& w_shape,
                                 int stride, int pad_h, int pad_w, int groups) {
  const int64_t N = in.shape[0], H = in.shape[2], W = in.shape[3];
  const int64_t O = w_shape[0], Cg = w_shape[1], KH = w_shape[2], KW = w_shape[3];
  const int64_t Ho = gout.shape[2], Wo = gout.shape[3];
  const int64_t Og = O / groups;
  Tensor<T> dw(w_shape);
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t o = 0; o < O; ++o) {
    for (int64_t c = 0; c < Cg; ++c) {
      const int64_t g = o / Og;
      const int64_t cin = g * Cg + c;
      for (int64_t ky = 0; ky < KH; ++ky) {
        for (int64_t kx = 0; kx < KW; ++kx) {
          T acc = 0;
          for (int64_t n = 0; n < N; ++n) {
            for (int64_t y = 0; y < Ho; ++y) {
              const int64_t iy = y * stride + ky - pad_h;
              if (iy < 0 || iy >= H) continue;
              for (int64_t x = 0; x < Wo; ++x) {
                const int64_t ix = x * stride + kx - pad_w;
                if (ix < 0 || ix >= W) continue;
                acc += gout.at4(n, o, y, x) * in.at4(n, cin, iy, ix);
              }
            }
          }
          dw.at4(o, c, ky, kx) = acc;
        }
      }
    }
  }
  return dw;
}

template <typename T>
Tensor<T> conv2d_backward_bias(const Tensor<T>& gout) {
  const int64_t N = gout.shape[0], O = gout.shape[1], Ho = gout.shape[2], Wo = gout.shape[3];
  Tensor<T> db({O});
#pragma omp parallel for schedule(static)
  for (int64_t o = 0; o < O; ++o) {
    T acc = 0;
    for (int64_t n = 0; n < N; ++n)
      for (int64_t y = 0; y < Ho; ++y)
        for (int64_t x = 0; x < Wo; ++x) acc += gout.at4(n, o, y, x);
    db[o] = acc;
  }
  return db;
}

// General max pooling. Out-of-bounds positions (padding) never win.
// Argmax stores the flat index of the winning input element; ties go to the
// lowest row-major index via strict comparison in scan order.
template <typename T>
Tensor<T> max_pool_forward(const Tensor<T>& in, int kernel, int stride, int pad,
                           std::vector<int64_t>* argmax) {
  const int64_t N = in.shape[0], C = in.shape[1], H = in.shape[2], W = in.shape[3];
  const int64_t Ho = (H + 2 * pad - kernel) / stride + 1;
  const int64_t Wo = (W + 2 * pad - kernel) / stride + 1;
  Tensor<T> out({N, C, Ho, Wo});
  if (argmax) argmax->assign(static_cast<size_t>(out.numel()), -1);
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      for (int64_t y = 0; y < Ho; ++y) {
        for (int64_t x = 0; x < Wo; ++x) {
          T best = -std::numeric_limits<T>::infinity();
          int64_t best_idx = -1;
          for (int64_t ky = 0; ky < kernel; ++ky) {
            const int64_t iy = y * stride + ky - pad;
            if (iy < 0 || iy >= H) continue;
            for (int64_t kx = 0; kx < kernel; ++kx) {
              const int64_t ix = x * stride + kx - pad;
              if (ix < 0 || ix >= W) continue;
              const int64_t idx = ((n * C + c) * H + iy) * W + ix;
              const T v = in[idx];
              if (v > best) {
                best = v;
                best_idx = idx;
              }
            }
          }
          const int64_t oidx = ((n * C + c) * Ho + y) * Wo + x;
          out[oidx] = best;
          if (argmax) (*argmax)[static_cast<size_t>(oidx)] = best_idx;
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> max_pool_backward(const Tensor<T>& gout, const std::vector<int64_t>& argmax,
                            const Shape& in_shape) {
  Tensor<T> din(in_shape);
  // scatter; serial per (n,c) plane would also work, but with non-overlapping
  // windows only one output can hit each input, and overlapping windows are
  // confined to a plane -- keep the scatter serial for determinism.
  for (int64_t i = 0; i < gout.numel(); ++i) {
    const int64_t src = argmax[static_cast<size_t>(i)];
    if (src >= 0) din[src] += gout[i];
  }
  return din;
}

template <typename T>
Tensor<T> avg_pool_forward(const Tensor<T>& in, int scale) {
  const int64_t N = in.shape[0], C = in.shape[1], H = in.shape[2], W = in.shape[3];
  const int64_t Ho = H / scale, Wo = W / scale;
  Tensor<T> out({N, C, Ho, Wo});
  const T inv = T(1) / static_cast<T>(scale * scale);
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t y = 0; y < Ho; ++y)
        for (int64_t x = 0; x < Wo; ++x) {
          T acc = 0;
          for (int64_t ky = 0; ky < scale; ++ky)
            for (int64_t kx = 0; kx < scale; ++kx)
              acc += in.at4(n, c, y * scale + ky, x * scale + kx);
          out.at4(n, c, y, x) = acc * inv;
        }
  return out;
}

template <typename T>
Tensor<T> avg_pool_backward(const Tensor<T>& gout, const Shape& in_shape, int scale) {
  const int64_t N = in_shape[0], C = in_shape[1], H = in_shape[2], W = in_shape[3];
  Tensor<T> din(in_shape);
  const T inv = T(1) / static_cast<T>(scale * scale);
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t iy = 0; iy < H; ++iy)
        for (int64_t ix = 0; ix < W; ++ix)
          din.at4(n, c, iy, ix) = gout.at4(n, c, iy / scale, ix / scale) * inv;
  return din;
}

template <typename T>
Tensor<T> nearest_upsample_forward(const Tensor<T>& in, int factor) {
  const int64_t N = in.shape[0], C = in.shape[1], H = in.shape[2], W = in.shape[3];
  Tensor<T> out({N, C, H * factor, W * factor});
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t y = 0; y < H * factor; ++y)
        for (int64_t x = 0; x < W * factor; ++x)
          out.at4(n, c, y, x) = in.at4(n, c, y / factor, x / factor);
  return out;
}

template <typename T>
Tensor<T> nearest_upsample_backward(const Tensor<T>& gout, int factor) {
  const int64_t N = gout.shape[0], C = gout.shape[1];
  const int64_t H = gout.shape[2] / factor, W = gout.shape[3] / factor;
  Tensor<T> din({N, C, H, W});
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
          T acc = 0;
          for (int64_t ky = 0; ky < factor; ++ky)
            for (int64_t kx = 0; kx < factor; ++kx)
              acc += gout.at4(n, c, y * factor + ky, x * factor + kx);
          din.at4(n, c, y, x) = acc;
        }
  return din;
}

// out[n,c,h*r+i,w*r+j] = in[n, c*r^2 + i*r + j, h, w]
template <typename T>
Tensor<T> pixel_shuffle_forward(const Tensor<T>& in, int r) {
  const int64_t N = in.shape[0], Cin = in.shape[1], H = in.shape[2], W = in.shape[3];
  const int64_t C = Cin / (r * r);
  Tensor<T> out({N, C, H * r, W * r});
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t y = 0; y < H * r; ++y)
        for (int64_t x = 0; x < W * r; ++x)
          out.at4(n, c, y, x) = in.at4(n, c * r * r + (y % r) * r + (x % r), y / r, x / r);
  return out;
}

template <typename T>
Tensor<T> pixel_shuffle_backward(const Tensor<T>& gout, int r) {
  const int64_t N = gout.shape[0], C = gout.shape[1];
  const int64_t H = gout.shape[2] / r, W = gout.shape[3] / r;
  Tensor<T> din({N, C * r * r, H, W});
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n)
    for (int64_t ci = 0; ci < C * r * r; ++ci) {
      const int64_t c = ci / (r * r);
      const int64_t i = (ci / r) % r;
      const int64_t j = ci % r;
      for (int64_t h = 0; h < H; ++h)
        for (int64_t w = 0; w < W; ++w)
          din.at4(n, ci, h, w) = gout.at4(n, c, h * r + i, w * r + j);
    }
  return din;
}

// Exact inverse rearrangement of pixel_shuffle (same index map as its adjoint).
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& in, int r) {
  return pixel_shuffle_backward(in, r);
}

struct RoiBox {
  double x0, y0, x1, y1;  // normalized [0,1]
};

// Bilinear sampling at one sample per output cell center (sampling ratio 1),
// coordinates clamped at the border. Cell centers coincide with pixel centers
// when the box spans the full image and the output size equals the input size.
template <typename T>
Tensor<T> roi_align_forward(const Tensor<T>& in, const RoiBox& box, int out_h, int out_w) {
  const int64_t N = in.shape[0], C = in.shape[1], H = in.shape[2], W = in.shape[3];
  Tensor<T> out({N, C, out_h, out_w});
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t y = 0; y < out_h; ++y)
        for (int64_t x = 0; x < out_w; ++x) {
          const double v = box.y0 + (y + 0.5) * (box.y1 - box.y0) / out_h;
          const double u = box.x0 + (x + 0.5) * (box.x1 - box.x0) / out_w;
          double py = v * static_cast<double>(H) - 0.5;
          double px = u * static_cast<double>(W) - 0.5;
          py = std::clamp(py, 0.0, static_cast<double>(H - 1));
          px = std::clamp(px, 0.0, static_cast<double>(W - 1));
          const int64_t y0 = static_cast<int64_t>(std::floor(py));
          const int64_t x0 = static_cast<int64_t>(std::floor(px));
          const int64_t y1 = std::min(y0 + 1, H - 1);
          const int64_t x1 = std::min(x0 + 1, W - 1);
          const T fy = static_cast<T>(py - static_cast<double>(y0));
          const T fx = static_cast<T>(px - static_cast<double>(x0));
          out.at4(n, c, y, x) = (1 - fy) * ((1 - fx) * in.at4(n, c, y0, x0) + fx * in.at4(n, c, y0, x1)) +
                                fy * ((1 - fx) * in.at4(n, c, y1, x0) + fx * in.at4(n, c, y1, x1));
        }
  return out;
}

template <typename T>
Tensor<T> roi_align_backward(const Tensor<T>& gout, const RoiBox& box, const Shape& in_shape) {
  const int64_t N = in_shape[0], C = in_shape[1], H = in_shape[2], W = in_shape[3];
  const int64_t out_h = gout.shape[2], out_w = gout.shape[3];
  Tensor<T> din(in_shape);
  // scatter per (n,c) plane; planes are independent so the collapse is safe
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t y = 0; y < out_h; ++y)
        for (int64_t x = 0; x < out_w; ++x) {
          const double v = box.y0 + (y + 0.5) * (box.y1 - box.y0) / out_h;
          const double u = box.x0 + (x + 0.5) * (box.x1 - box.x0) / out_w;
          double py = v * static_cast<double>(H) - 0.5;
          double px = u * static_cast<double>(W) - 0.5;
          py = std::clamp(py, 0.0, static_cast<double>(H - 1));
          px = std::clamp(px, 0.0, static_cast<double>(W - 1));
          const int64_t y0 = static_cast<int64_t>(std::floor(py));
          const int64_t x0 = static_cast<int64_t>(std::floor(px));
          const int64_t y1 = std::min(y0 + 1, H - 1);
          const int64_t x1 = std::min(x0 + 1, W - 1);
          const T fy = static_cast<T>(py - static_cast<double>(y0));
          const T fx = static_cast<T>(px - static_cast<double>(x0));
          const T g = gout.at4(n, c, y, x);
          din.at4(n, c, y0, x0) += (1 - fy) * (1 - fx) * g;
          din.at4(n, c, y0, x1) += (1 - fy) * fx * g;
          din.at4(n, c, y1, x0) += fy * (1 - fx) * g;
          din.at4(n, c, y1, x1) += fy * fx * g;
        }
  return din;
}

}  // namespace baris::kernels
