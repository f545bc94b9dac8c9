#pragma once

#include <algorithm>
#include <cmath>

namespace tatrack {

/// Center-size box. Inside the model it lives in normalized search-region
/// coordinates; the loss functions accept any (unclipped) frame.
struct BBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  double x0() const { return cx - 0.5 * w; }
  double y0() const { return cy - 0.5 * h; }
  double x1() const { return cx + 0.5 * w; }
  double y1() const { return cy + 0.5 * h; }
  double area() const { return w * h; }
};

/// Top-left / size box in image pixels, the on-disk ground-truth format.
struct ImageBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  double area() const { return w * h; }

  static ImageBox from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, w, h};
  }
};

inline double intersection_area(double ax0, double ay0, double ax1, double ay1, double bx0,
                                double by0, double bx1, double by1) {
  const double iw = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
  const double ih = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
  return iw * ih;
}

// Areas come from the same corner differences as the intersection, so a box
// compared with itself scores exactly 1.
inline double corner_iou(double ax0, double ay0, double ax1, double ay1, double bx0, double by0, double bx1,
                         double by1) {
  const double inter = intersection_area(ax0, ay0, ax1, ay1, bx0, by0, bx1, by1);
  const double uni = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

inline double iou(const ImageBox& a, const ImageBox& b) {
  return corner_iou(a.x, a.y, a.x + a.w, a.y + a.h, b.x, b.y, b.x + b.w, b.y + b.h);
}

inline double iou(const BBox& a, const BBox& b) {
  return corner_iou(a.x0(), a.y0(), a.x1(), a.y1(), b.x0(), b.y0(), b.x1(), b.y1());
}

}  // namespace tatrack
