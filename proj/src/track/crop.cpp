#include "tatrack/track/crop.hpp"

#include <cmath>

#include <opencv2/imgproc.hpp>

#include "tatrack/core/error.hpp"

namespace tatrack::track {

void CropSpec::validate() const {
  if (!(template_factor > 0) || !(search_factor > template_factor)) {
    throw ConfigError("crop: need 0 < template factor < search factor");
  }
  if (template_side <= 0 || search_side <= 0) throw ConfigError("crop: output sides must be positive");
}

BBox CropGeometry::to_image(const BBox& n) const {
  return {x0 + n.cx * side, y0 + n.cy * side, n.w * side, n.h * side};
}

BBox CropGeometry::to_normalized(const BBox& b) const {
  return {(b.cx - x0) / side, (b.cy - y0) / side, b.w / side, b.h / side};
}

CropGeometry crop_geometry(const BBox& box, double area_factor, int out_side) {
  if (!(box.w > 0) || !(box.h > 0) || !std::isfinite(box.w * box.h) || !std::isfinite(box.cx) ||
      !std::isfinite(box.cy)) {
    throw InputError("crop: degenerate box " + std::to_string(box.w) + "x" + std::to_string(box.h));
  }
  if (!(area_factor > 0) || out_side <= 0) throw InputError("crop: bad factor or output side");
  CropGeometry g;
  g.side = std::sqrt(area_factor * box.w * box.h);
  g.x0 = box.cx - 0.5 * g.side;
  g.y0 = box.cy - 0.5 * g.side;
  g.out = out_side;
  return g;
}

namespace {

cv::Mat crop_one(const cv::Mat& img, const CropGeometry& g, bool& padded) {
  const double x1 = g.x0 + g.side, y1 = g.y0 + g.side;
  padded = g.x0 < 0 || g.y0 < 0 || x1 > img.cols || y1 > img.rows;
  const bool integral = g.x0 == std::floor(g.x0) && g.y0 == std::floor(g.y0) && g.side == std::floor(g.side);
  cv::Mat out;
  if (integral && !padded) {
    const cv::Rect roi(static_cast<int>(g.x0), static_cast<int>(g.y0), static_cast<int>(g.side),
                       static_cast<int>(g.side));
    cv::resize(img(roi), out, cv::Size(g.out, g.out), 0, 0, cv::INTER_LINEAR);
    return out;
  }
  // dst pixel center u + 0.5 samples src at x0 + (u + 0.5) * s, i.e. pixel
  // coordinate x0 + (u + 0.5) * s - 0.5.
  const double s = g.side / g.out;
  const cv::Matx23d m(1 / s, 0, (0.5 - g.x0) / s - 0.5, 0, 1 / s, (0.5 - g.y0) / s - 0.5);
  cv::warpAffine(img, out, m, cv::Size(g.out, g.out), cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::mean(img));
  return out;
}

}  // namespace

CroppedPair crop_and_resize(const data::FramePair& frame, const BBox& box, double area_factor, int out_side) {
  if (frame.rgb.empty() || frame.tir.empty()) throw InputError("crop: empty frame");
  if (frame.rgb.size() != frame.tir.size()) throw InputError("crop: RGB and TIR frame sizes differ");
  CroppedPair c;
  c.geom = crop_geometry(box, area_factor, out_side);
  bool pad_rgb = false, pad_tir = false;
  c.rgb = crop_one(frame.rgb, c.geom, pad_rgb);
  c.tir = crop_one(frame.tir, c.geom, pad_tir);
  c.geom.padded = pad_rgb || pad_tir;
  return c;
}

template <typename T>
Tensor<T> image_to_tensor(const cv::Mat& img) {
  if (img.type() != CV_8UC3) throw InputError("image_to_tensor: expected 8-bit 3-channel image");
  const int h = img.rows, w = img.cols;
  Tensor<T> t(core::Shape{1, 3, h, w});
  const size_t plane = static_cast<size_t>(h) * w;
  for (int i = 0; i < h; ++i) {
    const auto* row = img.ptr<uint8_t>(i);
    for (int j = 0; j < w; ++j) {
      for (int c = 0; c < 3; ++c) {
        t[c * plane + static_cast<size_t>(i) * w + j] = (static_cast<T>(row[3 * j + c]) / T(255) - T(0.5)) / T(0.25);
      }
    }
  }
  return t;
}

template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& items) {
  if (items.empty()) throw InputError("stack_batch: empty batch");
  core::Shape shape = items[0].shape();
  const int64_t per = items[0].numel();
  shape[0] = static_cast<int64_t>(items.size());
  Tensor<T> out(shape);
  for (size_t b = 0; b < items.size(); ++b) {
    if (items[b].shape() != items[0].shape()) throw DimensionError("stack_batch: shape mismatch");
    std::copy(items[b].data().begin(), items[b].data().end(), out.raw() + b * per);
  }
  return out;
}

template Tensor<float> image_to_tensor(const cv::Mat&);
template Tensor<double> image_to_tensor(const cv::Mat&);
template Tensor<float> stack_batch(const std::vector<Tensor<float>>&);
template Tensor<double> stack_batch(const std::vector<Tensor<double>>&);

}  // namespace tatrack::track
