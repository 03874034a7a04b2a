#include "baris/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace baris {

namespace {

// Collapses any leading singleton dims; masks arrive as (1,H,W) or (1,1,H,W).
void hw_of(const Tensor<float>& t, int64_t& h, int64_t& w) {
  if (t.rank() < 2) throw ShapeError("mask must have rank >= 2, got " + shape_str(t.shape));
  for (int i = 0; i < t.rank() - 2; ++i)
    if (t.dim(i) != 1)
      throw ShapeError("mask leading dims must be 1, got " + shape_str(t.shape));
  h = t.dim(t.rank() - 2);
  w = t.dim(t.rank() - 1);
}

std::vector<uint8_t> binarize(const Tensor<float>& t, float threshold) {
  std::vector<uint8_t> out(t.data.size());
  for (size_t i = 0; i < t.data.size(); ++i) out[i] = t.data[i] > threshold ? 1 : 0;
  return out;
}

// Foreground pixels with a background 4-neighbour; the image border counts
// as background.
std::vector<uint8_t> boundary_of(const std::vector<uint8_t>& m, int64_t h, int64_t w) {
  std::vector<uint8_t> b(m.size(), 0);
  auto bg = [&](int64_t y, int64_t x) {
    return y < 0 || y >= h || x < 0 || x >= w || m[static_cast<size_t>(y * w + x)] == 0;
  };
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      if (m[static_cast<size_t>(y * w + x)] == 0) continue;
      if (bg(y - 1, x) || bg(y + 1, x) || bg(y, x - 1) || bg(y, x + 1))
        b[static_cast<size_t>(y * w + x)] = 1;
    }
  return b;
}

// Fraction of boundary pixels in a that lie within `tol` (euclidean) of a
// boundary pixel of b. Empty a gives 1 when b is also empty, else 0.
double boundary_match(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b,
                      int64_t h, int64_t w, double tol) {
  int64_t total = 0, hit = 0;
  const int64_t r = static_cast<int64_t>(std::floor(tol));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      if (!a[static_cast<size_t>(y * w + x)]) continue;
      ++total;
      bool found = false;
      for (int64_t dy = -r; dy <= r && !found; ++dy)
        for (int64_t dx = -r; dx <= r && !found; ++dx) {
          if (dy * dy + dx * dx > tol * tol) continue;
          const int64_t yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          if (b[static_cast<size_t>(yy * w + xx)]) found = true;
        }
      if (found) ++hit;
    }
  if (total == 0) return -1.0;  // caller resolves the empty convention
  return static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace

double mask_iou(const Tensor<float>& pred_binary, const Tensor<float>& gt_binary) {
  require_same_shape(pred_binary, gt_binary, "mask_iou");
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < pred_binary.data.size(); ++i) {
    const bool p = pred_binary.data[i] > 0.5f;
    const bool g = gt_binary.data[i] > 0.5f;
    inter += (p && g) ? 1 : 0;
    uni += (p || g) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double boundary_f(const Tensor<float>& pred_binary, const Tensor<float>& gt_binary,
                  double tolerance) {
  require_same_shape(pred_binary, gt_binary, "boundary_f");
  int64_t h = 0, w = 0;
  hw_of(pred_binary, h, w);
  const auto p = binarize(pred_binary, 0.5f);
  const auto g = binarize(gt_binary, 0.5f);
  const auto pb = boundary_of(p, h, w);
  const auto gb = boundary_of(g, h, w);
  const double precision = boundary_match(pb, gb, h, w, tolerance);
  const double recall = boundary_match(gb, pb, h, w, tolerance);
  if (precision < 0.0 && recall < 0.0) return 1.0;  // both boundaries empty
  if (precision < 0.0 || recall < 0.0) return 0.0;  // one empty, one not
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

EvalResult evaluate(const std::vector<Tensor<float>>& pred_logits,
                    const std::vector<Tensor<float>>& gt_masks) {
  if (pred_logits.size() != gt_masks.size())
    throw std::invalid_argument("evaluate: prediction/ground-truth count mismatch");
  if (pred_logits.empty()) throw std::invalid_argument("evaluate: empty input");
  EvalResult r;
  for (size_t i = 0; i < pred_logits.size(); ++i) {
    Tensor<float> pred = pred_logits[i];
    for (auto& v : pred.data) v = v > 0.0f ? 1.0f : 0.0f;
    r.mask_iou += mask_iou(pred, gt_masks[i]);
    r.boundary_f += boundary_f(pred, gt_masks[i]);
  }
  r.mask_iou /= static_cast<double>(pred_logits.size());
  r.boundary_f /= static_cast<double>(pred_logits.size());
  return r;
}

}  // namespace baris
