#pragma once

#include <cmath>
#include <limits>

#include "baris/tensor.hpp"

// Serial reference implementations. These are deliberately naive sliding-window
// loops, kept independent of the kernels in kernels.hpp; tests compare the two
// paths and the benchmark tool times them against each other.

namespace baris::ref {

template <typename T>
Tensor<T> conv2d(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>* bias, int stride,
                 int pad_h, int pad_w, int groups) {
  const int64_t N = in.shape[0], H = in.shape[2], W = in.shape[3];
  const int64_t O = w.shape[0], Cg = w.shape[1], KH = w.shape[2], KW = w.shape[3];
  const int64_t Ho = (H + 2 * pad_h - KH) / stride + 1;
  const int64_t Wo = (W + 2 * pad_w - KW) / stride + 1;
  const int64_t Og = O / groups;
  Tensor<T> out({N, O, Ho, Wo});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t o = 0; o < O; ++o)
      for (int64_t y = 0; y < Ho; ++y)
        for (int64_t x = 0; x < Wo; ++x) {
          T acc = bias ? (*bias)[o] : T(0);
          for (int64_t c = 0; c < Cg; ++c)
            for (int64_t ky = 0; ky < KH; ++ky)
              for (int64_t kx = 0; kx < KW; ++kx) {
                const int64_t iy = y * stride + ky - pad_h;
                const int64_t ix = x * stride + kx - pad_w;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += in.at4(n, (o / Og) * Cg + c, iy, ix) * w.at4(o, c, ky, kx);
              }
          out.at4(n, o, y, x) = acc;
        }
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& in, const Tensor<T>& w, std::nullptr_t, int stride, int pad_h,
                 int pad_w, int groups) {
  return conv2d(in, w, static_cast<const Tensor<T>*>(nullptr), stride, pad_h, pad_w, groups);
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& in, int scale) {
  const int64_t N = in.shape[0], C = in.shape[1], H = in.shape[2], W = in.shape[3];
  Tensor<T> out({N, C, H / scale, W / scale});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t y = 0; y < H / scale; ++y)
        for (int64_t x = 0; x < W / scale; ++x) {
          T best = -std::numeric_limits<T>::infinity();
          for (int64_t ky = 0; ky < scale; ++ky)
            for (int64_t kx = 0; kx < scale; ++kx)
              best = std::max(best, in.at4(n, c, y * scale + ky, x * scale + kx));
          out.at4(n, c, y, x) = best;
        }
  return out;
}

template <typename T>
Tensor<T> nearest_upsample(const Tensor<T>& in, int factor) {
  const int64_t N = in.shape[0], C = in.shape[1], H = in.shape[2], W = in.shape[3];
  Tensor<T> out({N, C, H * factor, W * factor});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t y = 0; y < H * factor; ++y)
        for (int64_t x = 0; x < W * factor; ++x)
          out.at4(n, c, y, x) = in.at4(n, c, y / factor, x / factor);
  return out;
}

// Adjoint of nearest_upsample: sums each factor x factor block.
template <typename T>
Tensor<T> sum_pool(const Tensor<T>& in, int factor) {
  const int64_t N = in.shape[0], C = in.shape[1], H = in.shape[2], W = in.shape[3];
  Tensor<T> out({N, C, H / factor, W / factor});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t y = 0; y < H / factor; ++y)
        for (int64_t x = 0; x < W / factor; ++x) {
          T acc = 0;
          for (int64_t ky = 0; ky < factor; ++ky)
            for (int64_t kx = 0; kx < factor; ++kx)
              acc += in.at4(n, c, y * factor + ky, x * factor + kx);
          out.at4(n, c, y, x) = acc;
        }
  return out;
}

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& in, int r) {
  const int64_t N = in.shape[0], Cin = in.shape[1], H = in.shape[2], W = in.shape[3];
  const int64_t C = Cin / (r * r);
  Tensor<T> out({N, C, H * r, W * r});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < Cin; ++c)
      for (int64_t h = 0; h < H; ++h)
        for (int64_t w = 0; w < W; ++w) {
          const int64_t co = c / (r * r);
          const int64_t i = (c / r) % r;
          const int64_t j = c % r;
          out.at4(n, co, h * r + i, w * r + j) = in.at4(n, c, h, w);
        }
  return out;
}

// Separable bilinear upsample by an integer factor with half-pixel centers;
// oracle for roi_align with a full-image box.
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& in, int factor) {
  const int64_t N = in.shape[0], C = in.shape[1], H = in.shape[2], W = in.shape[3];
  const int64_t Ho = H * factor, Wo = W * factor;
  Tensor<T> out({N, C, Ho, Wo});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t y = 0; y < Ho; ++y)
        for (int64_t x = 0; x < Wo; ++x) {
          double py = (y + 0.5) / factor - 0.5;
          double px = (x + 0.5) / factor - 0.5;
          py = std::min(std::max(py, 0.0), static_cast<double>(H - 1));
          px = std::min(std::max(px, 0.0), static_cast<double>(W - 1));
          const int64_t y0 = static_cast<int64_t>(std::floor(py));
          const int64_t x0 = static_cast<int64_t>(std::floor(px));
          const int64_t y1 = std::min(y0 + 1, H - 1);
          const int64_t x1 = std::min(x0 + 1, W - 1);
          const double fy = py - static_cast<double>(y0);
          const double fx = px - static_cast<double>(x0);
          const double v = (1 - fy) * ((1 - fx) * in.at4(n, c, y0, x0) + fx * in.at4(n, c, y0, x1)) +
                           fy * ((1 - fx) * in.at4(n, c, y1, x0) + fx * in.at4(n, c, y1, x1));
          out.at4(n, c, y, x) = static_cast<T>(v);
        }
  return out;
}

// Depthwise 3x3 followed by 1x1 pointwise, fused in one loop nest.
template <typename T>
Tensor<T> dsconv(const Tensor<T>& in, const Tensor<T>& dw_w, const Tensor<T>& dw_b,
                 const Tensor<T>& pw_w, const Tensor<T>& pw_b) {
  const int64_t N = in.shape[0], C = in.shape[1], H = in.shape[2], W = in.shape[3];
  const int64_t O = pw_w.shape[0];
  const int64_t K = dw_w.shape[2];
  const int64_t pad = K / 2;
  Tensor<T> out({N, O, H, W});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t o = 0; o < O; ++o)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
          T acc = pw_b[o];
          for (int64_t c = 0; c < C; ++c) {
            T mid = dw_b[c];
            for (int64_t ky = 0; ky < K; ++ky)
              for (int64_t kx = 0; kx < K; ++kx) {
                const int64_t iy = y + ky - pad;
                const int64_t ix = x + kx - pad;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                mid += in.at4(n, c, iy, ix) * dw_w.at4(c, 0, ky, kx);
              }
            acc += mid * pw_w.at4(o, c, 0, 0);
          }
          out.at4(n, o, y, x) = acc;
        }
  return out;
}

}  // namespace baris::ref
