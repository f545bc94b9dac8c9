#pragma once

#include <vector>

#include "tatrack/core/autograd.hpp"
#include "tatrack/core/box.hpp"
#include "tatrack/core/tensor.hpp"
#include "tatrack/model/head.hpp"

namespace tatrack::loss {

using core::Tensor;
using core::Var;

struct LossWeights {
  double lambda_iou = 2.0;
  double lambda_l1 = 5.0;
};

/// Score-map cell containing the box center, clamped to the grid.
int64_t center_cell(const BBox& gt, int64_t side);

/// [1,S,S] Gaussian bump exp(-(dx^2+dy^2)/(2 sigma^2)) around the center cell,
/// sigma = max(1, S*min(w,h)/6). Degenerate boxes throw InputError.
template <typename T>
Tensor<T> gaussian_target_map(const BBox& gt, int64_t side);

/// CornerNet-style focal loss with alpha=2, beta=4 on pred[B,1,S,S] against
/// gt[B,1,S,S]; cells with gt == 1 are positives. Normalized by the positive
/// count; predictions are clamped to [1e-6, 1-1e-6].
template <typename T>
Var<T> weighted_focal(const Var<T>& pred, const Tensor<T>& gt);

double giou(const BBox& a, const BBox& b);
/// 1 - GIoU; zero-area boxes throw InputError.
double giou_loss(const BBox& pred, const BBox& gt);

/// Mean of 1 - GIoU over rows of pred[B,4] / gt[B,4] in (cx, cy, w, h).
template <typename T>
Var<T> giou_loss(const Var<T>& pred, const Tensor<T>& gt);

/// Mean absolute error over all entries of pred[B,4] / gt[B,4].
template <typename T>
Var<T> l1_loss(const Var<T>& pred, const Tensor<T>& gt);

template <typename T>
struct LossTerms {
  Var<T> cls;
  Var<T> iou;
  Var<T> l1;
  Var<T> total;
};

/// Weighted sum cls + lambda_iou * iou + lambda_l1 * l1.
template <typename T>
Var<T> combine(const Var<T>& cls, const Var<T>& iou, const Var<T>& l1, const LossWeights& w = {});

/// Full tracking loss for a batch: focal loss on the score map, regression
/// losses on the box decoded at each ground-truth center cell.
template <typename T>
LossTerms<T> tracking_loss(const model::HeadOutputs<T>& out, const std::vector<BBox>& gt,
                           const LossWeights& w = {});

}  // namespace tatrack::loss
