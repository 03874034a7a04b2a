#pragma once

#include <optional>

#include "baris/ops.hpp"

namespace baris {

enum class BacePool { max, avg };

struct BaceConfig {
  int scale = 4;
  double lambda = 1.0;
  BacePool pool = BacePool::max;  // avg variant is linear but not the paper's listing
};

template <typename T>
void check_bace_dims(const Tensor<T>& x, int s) {
  if (s < 1) throw std::invalid_argument("bace: scale must be >= 1");
  const int64_t H = x.shape[x.shape.size() - 2], W = x.shape.back();
  if (H % s != 0 || W % s != 0)
    throw ShapeError("bace: spatial dims " + std::to_string(H) + "x" + std::to_string(W) +
                     " not divisible by scale " + std::to_string(s) +
                     " (crop or pad explicitly)");
}

// A^T A x: downsample then nearest-upsample. Identity at s = 1.
template <typename T>
Var<T> range_project(Tape<T>& tape, const Var<T>& x, int s, BacePool pool = BacePool::max) {
  check_bace_dims(x.val(), s);
  if (s == 1) return x;
  Var<T> down = pool == BacePool::max ? max_pool2d(tape, x, s) : avg_pool2d(tape, x, s);
  return nearest_upsample(tape, down, s);
}

// (I - A^T A) x
template <typename T>
Var<T> null_project(Tape<T>& tape, const Var<T>& x, int s, BacePool pool = BacePool::max) {
  check_bace_dims(x.val(), s);
  if (s == 1) {
    // projector vanishes; exact zeros, no pred dependence
    return make_constant(Tensor<T>::zeros(x.val().shape));
  }
  return sub(tape, x, range_project(tape, x, s, pool));
}

// Gamma: ground-truth range component plus predicted null component.
template <typename T>
Var<T> refine_gamma(Tape<T>& tape, const Var<T>& pred, const Var<T>& gt, int s,
                    BacePool pool = BacePool::max) {
  require_same_shape(pred.val(), gt.val(), "refine_gamma");
  if (s == 1) return gt;
  return add(tape, range_project(tape, gt, s, pool), null_project(tape, pred, s, pool));
}

// Mask logits and binary ground truth per instance, same spatial shape.
template <typename T>
struct MaskBatch {
  Var<T> pred_logits;  // (N_inst, 1, H, W)
  Var<T> gt;           // (N_inst, 1, H, W), entries in {0, 1}

  void validate() const {
    require_same_shape(pred_logits.val(), gt.val(), "mask batch");
    require_rank(gt.val(), 4, "mask batch");
    for (int64_t i = 0; i < gt.val().numel(); ++i)
      if (gt.val()[i] != T(0) && gt.val()[i] != T(1))
        throw std::invalid_argument("mask batch: ground truth must be strictly binary");
  }
};

// Mean over instances of BCE-with-logits(Gamma_i, gt_i). All instances share
// H x W, so the per-instance mean of means equals the global element mean.
template <typename T>
Var<T> bace_loss(Tape<T>& tape, const MaskBatch<T>& batch, const BaceConfig& cfg,
                 const Var<T>* class_weight = nullptr) {
  batch.validate();
  Var<T> gamma = refine_gamma(tape, batch.pred_logits, batch.gt, cfg.scale, cfg.pool);
  return bce_with_logits(tape, gamma, batch.gt, class_weight);
}

// CE + lambda * BACE. The lambda = 0 path skips the BACE term entirely so the
// trajectory is bitwise identical to CE-only training.
template <typename T>
Var<T> total_loss(Tape<T>& tape, const MaskBatch<T>& batch, const BaceConfig& cfg,
                  const Var<T>* class_weight = nullptr) {
  Var<T> ce = bce_with_logits(tape, batch.pred_logits, batch.gt, class_weight);
  if (cfg.lambda == 0.0) return ce;
  Var<T> bace = bace_loss(tape, batch, cfg, class_weight);
  return add(tape, ce, scale(tape, bace, static_cast<T>(cfg.lambda)));
}

}  // namespace baris
