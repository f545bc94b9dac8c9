#include "tatrack/train/losses.hpp"

#include <algorithm>
#include <cmath>

#include "tatrack/core/error.hpp"
#include "tatrack/core/ops.hpp"
#include "tatrack/model/tatrack_model.hpp"

namespace tatrack::loss {

using core::Node;
using core::Shape;

int64_t center_cell(const BBox& gt, int64_t side) {
  const auto clamp_idx = [side](double v) {
    return std::clamp<int64_t>(static_cast<int64_t>(std::floor(v * static_cast<double>(side))), 0, side - 1);
  };
  return clamp_idx(gt.cy) * side + clamp_idx(gt.cx);
}

template <typename T>
Tensor<T> gaussian_target_map(const BBox& gt, int64_t side) {
  if (!(gt.w > 0.0) || !(gt.h > 0.0)) throw InputError("gaussian_target_map: degenerate box");
  if (side < 1) throw InputError("gaussian_target_map: side must be positive");
  const int64_t c = center_cell(gt, side);
  const int64_t ci = c / side;
  const int64_t cj = c % side;
  const double sigma = std::max(1.0, static_cast<double>(side) * std::min(gt.w, gt.h) / 6.0);
  Tensor<T> map(Shape{1, side, side});
  for (int64_t i = 0; i < side; ++i) {
    for (int64_t j = 0; j < side; ++j) {
      const double d2 = static_cast<double>((i - ci) * (i - ci) + (j - cj) * (j - cj));
      map[static_cast<size_t>(i * side + j)] = static_cast<T>(std::exp(-d2 / (2.0 * sigma * sigma)));
    }
  }
  map[static_cast<size_t>(c)] = T(1);
  return map;
}

template <typename T>
Var<T> weighted_focal(const Var<T>& pred, const Tensor<T>& gt) {
  if (pred.shape() != gt.shape()) {
    throw DimensionError("weighted_focal: pred " + core::shape_str(pred.shape()) + " vs gt " +
                         core::shape_str(gt.shape()));
  }
  constexpr double kLo = 1e-6;
  constexpr double kHi = 1.0 - 1e-6;
  const int64_t n = pred.numel();
  int64_t positives = 0;
  for (const T g : gt.data()) positives += g == T(1) ? 1 : 0;
  const double norm = 1.0 / static_cast<double>(std::max<int64_t>(1, positives));
  double total = 0.0;
  const T* p = pred.value().raw();
  for (int64_t i = 0; i < n; ++i) {
    const double q = std::clamp(static_cast<double>(p[i]), kLo, kHi);
    const double g = static_cast<double>(gt[i]);
    if (gt[i] == T(1)) {
      total -= (1 - q) * (1 - q) * std::log(q);
    } else {
      total -= std::pow(1 - g, 4) * q * q * std::log(1 - q);
    }
  }
  return core::make_result<T>(Tensor<T>::scalar(static_cast<T>(total * norm)), {pred},
                              [gt, norm](Node<T>& self) {
    auto& np = *self.inputs[0];
    const double up = static_cast<double>(self.grad.item()) * norm;
    Tensor<T> g(np.value.shape());
    for (int64_t i = 0; i < g.numel(); ++i) {
      const double raw = static_cast<double>(np.value[i]);
      if (raw < kLo || raw > kHi) continue;  // clamped: flat
      const double q = raw;
      const double t = static_cast<double>(gt[i]);
      double d;
      if (gt[i] == T(1)) {
        d = -(-2 * (1 - q) * std::log(q) + (1 - q) * (1 - q) / q);
      } else {
        d = -std::pow(1 - t, 4) * (2 * q * std::log(1 - q) - q * q / (1 - q));
      }
      g[i] = static_cast<T>(up * d);
    }
    np.accumulate(g);
  });
}

namespace {

struct GiouParts {
  double loss;
  // d loss / d (cx, cy, w, h) of the first box
  double grad[4];
};

// Max/min with the tie going to the predicted box, matching a subgradient.
GiouParts giou_parts(const double a[4], const double b[4]) {
  if (!(a[2] > 0) || !(a[3] > 0) || !(b[2] > 0) || !(b[3] > 0)) {
    throw InputError("giou: zero-area box");
  }
  const double ax0 = a[0] - 0.5 * a[2], ax1 = a[0] + 0.5 * a[2];
  const double ay0 = a[1] - 0.5 * a[3], ay1 = a[1] + 0.5 * a[3];
  const double bx0 = b[0] - 0.5 * b[2], bx1 = b[0] + 0.5 * b[2];
  const double by0 = b[1] - 0.5 * b[3], by1 = b[1] + 0.5 * b[3];

  const bool a_r = ax1 <= bx1, a_l = ax0 >= bx0, a_b = ay1 <= by1, a_t = ay0 >= by0;
  const double iw_raw = std::min(ax1, bx1) - std::max(ax0, bx0);
  const double ih_raw = std::min(ay1, by1) - std::max(ay0, by0);
  const double iw = std::max(0.0, iw_raw), ih = std::max(0.0, ih_raw);
  const double inter = iw * ih;
  const double area_a = a[2] * a[3];
  const double uni = area_a + b[2] * b[3] - inter;
  const bool hull_r = ax1 >= bx1, hull_l = ax0 <= bx0, hull_b = ay1 >= by1, hull_t = ay0 <= by0;
  const double cw = std::max(ax1, bx1) - std::min(ax0, bx0);
  const double ch = std::max(ay1, by1) - std::min(ay0, by0);
  const double hull = cw * ch;

  GiouParts out{};
  out.loss = 2.0 - inter / uni - uni / hull;

  const double g_inter = -(1.0 / uni + inter / (uni * uni)) + 1.0 / hull;
  const double g_area = inter / (uni * uni) - 1.0 / hull;
  const double g_hull = uni / (hull * hull);

  // Gradients with respect to the edges of box a.
  double gx0 = 0, gx1 = 0, gy0 = 0, gy1 = 0;
  if (iw_raw > 0 && ih_raw > 0) {
    if (a_r) gx1 += g_inter * ih;
    if (a_l) gx0 -= g_inter * ih;
    if (a_b) gy1 += g_inter * iw;
    if (a_t) gy0 -= g_inter * iw;
  }
  if (hull_r) gx1 += g_hull * ch;
  if (hull_l) gx0 -= g_hull * ch;
  if (hull_b) gy1 += g_hull * cw;
  if (hull_t) gy0 -= g_hull * cw;

  out.grad[0] = gx0 + gx1;
  out.grad[1] = gy0 + gy1;
  out.grad[2] = 0.5 * (gx1 - gx0) + g_area * a[3];
  out.grad[3] = 0.5 * (gy1 - gy0) + g_area * a[2];
  return out;
}

template <typename T>
void check_boxes(const char* what, const Var<T>& pred, const Tensor<T>& gt) {
  if (pred.shape().size() != 2 || pred.dim(1) != 4 || pred.shape() != gt.shape()) {
    throw DimensionError(std::string(what) + ": expected matching [B,4] boxes, got " +
                         core::shape_str(pred.shape()) + " / " + core::shape_str(gt.shape()));
  }
}

}  // namespace

double giou(const BBox& a, const BBox& b) { return 1.0 - giou_loss(a, b); }

double giou_loss(const BBox& pred, const BBox& gt) {
  const double a[4] = {pred.cx, pred.cy, pred.w, pred.h};
  const double b[4] = {gt.cx, gt.cy, gt.w, gt.h};
  return giou_parts(a, b).loss;
}

template <typename T>
Var<T> giou_loss(const Var<T>& pred, const Tensor<T>& gt) {
  check_boxes("giou_loss", pred, gt);
  const int64_t batch = pred.dim(0);
  Tensor<T> grads(Shape{batch, 4});
  double total = 0.0;
  for (int64_t r = 0; r < batch; ++r) {
    double a[4], b[4];
    for (int k = 0; k < 4; ++k) {
      a[k] = static_cast<double>(pred.value()[r * 4 + k]);
      b[k] = static_cast<double>(gt[r * 4 + k]);
    }
    const GiouParts parts = giou_parts(a, b);
    total += parts.loss;
    for (int k = 0; k < 4; ++k) grads[r * 4 + k] = static_cast<T>(parts.grad[k] / static_cast<double>(batch));
  }
  return core::make_result<T>(Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(batch))), {pred},
                              [grads](Node<T>& self) {
    Tensor<T> g = grads;
    const T up = self.grad.item();
    for (auto& v : g.data()) v *= up;
    self.inputs[0]->accumulate(g);
  });
}

template <typename T>
Var<T> l1_loss(const Var<T>& pred, const Tensor<T>& gt) {
  check_boxes("l1_loss", pred, gt);
  const int64_t n = pred.numel();
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) total += std::abs(static_cast<double>(pred.value()[i] - gt[i]));
  return core::make_result<T>(Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(n))), {pred},
                              [gt, n](Node<T>& self) {
    auto& np = *self.inputs[0];
    const T up = self.grad.item() / static_cast<T>(n);
    Tensor<T> g(np.value.shape());
    for (int64_t i = 0; i < n; ++i) {
      const T d = np.value[i] - gt[i];
      g[i] = d > 0 ? up : (d < 0 ? -up : T(0));
    }
    np.accumulate(g);
  });
}

template <typename T>
Var<T> combine(const Var<T>& cls, const Var<T>& iou, const Var<T>& l1, const LossWeights& w) {
  if (w.lambda_iou < 0 || w.lambda_l1 < 0) throw ConfigError("loss weights must be nonnegative");
  return core::add(core::add(cls, core::scale(iou, static_cast<T>(w.lambda_iou))),
                   core::scale(l1, static_cast<T>(w.lambda_l1)));
}

template <typename T>
LossTerms<T> tracking_loss(const model::HeadOutputs<T>& out, const std::vector<BBox>& gt,
                           const LossWeights& w) {
  const int64_t batch = out.score.dim(0);
  const int64_t side = out.score.dim(-1);
  if (static_cast<int64_t>(gt.size()) != batch) {
    throw DimensionError("tracking_loss: " + std::to_string(gt.size()) + " boxes for batch " +
                         std::to_string(batch));
  }
  Tensor<T> target(out.score.shape());
  Tensor<T> gt_boxes(Shape{batch, 4});
  std::vector<int64_t> cells;
  const int64_t plane = side * side;
  for (int64_t b = 0; b < batch; ++b) {
    const BBox& g = gt[static_cast<size_t>(b)];
    const Tensor<T> m = gaussian_target_map<T>(g, side);
    std::copy(m.data().begin(), m.data().end(), target.data().begin() + b * plane);
    cells.push_back(center_cell(g, side));
    gt_boxes[b * 4 + 0] = static_cast<T>(g.cx);
    gt_boxes[b * 4 + 1] = static_cast<T>(g.cy);
    gt_boxes[b * 4 + 2] = static_cast<T>(g.w);
    gt_boxes[b * 4 + 3] = static_cast<T>(g.h);
  }
  LossTerms<T> t;
  t.cls = weighted_focal(out.score, target);
  const Var<T> boxes = model::boxes_at_cells(out, cells);
  t.iou = giou_loss(boxes, gt_boxes);
  t.l1 = l1_loss(boxes, gt_boxes);
  t.total = combine(t.cls, t.iou, t.l1, w);
  return t;
}

#define TATRACK_INSTANTIATE(T)                                                                  \
  template Tensor<T> gaussian_target_map<T>(const BBox&, int64_t);                              \
  template Var<T> weighted_focal(const Var<T>&, const Tensor<T>&);                              \
  template Var<T> giou_loss(const Var<T>&, const Tensor<T>&);                                   \
  template Var<T> l1_loss(const Var<T>&, const Tensor<T>&);                                     \
  template Var<T> combine(const Var<T>&, const Var<T>&, const Var<T>&, const LossWeights&);     \
  template LossTerms<T> tracking_loss(const model::HeadOutputs<T>&, const std::vector<BBox>&,   \
                                      const LossWeights&);

TATRACK_INSTANTIATE(float)
TATRACK_INSTANTIATE(double)
#undef TATRACK_INSTANTIATE

}  // namespace tatrack::loss
