#pragma once

#include <vector>

#include "baris/tensor.hpp"

namespace baris {

struct EvalResult {
  double mask_iou = 0.0;
  double boundary_f = 0.0;
};

// IoU of thresholded masks. Two empty masks count as IoU 1.
double mask_iou(const Tensor<float>& pred_binary, const Tensor<float>& gt_binary);

// Boundary F-measure at 1-pixel distance tolerance. A pixel is a boundary
// pixel if it is foreground and has a background 4-neighbour (image border
// counts as background). Two empty boundaries count as F = 1.
double boundary_f(const Tensor<float>& pred_binary, const Tensor<float>& gt_binary,
                  double tolerance = 1.0);

// Thresholds logits at 0 and averages per-instance IoU / boundary F.
EvalResult evaluate(const std::vector<Tensor<float>>& pred_logits,
                    const std::vector<Tensor<float>>& gt_masks);

}  // namespace baris
