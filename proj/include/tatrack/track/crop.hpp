#pragma once

#include <opencv2/core.hpp>

#include "tatrack/core/box.hpp"
#include "tatrack/core/tensor.hpp"
#include "tatrack/data/sequence.hpp"

namespace tatrack::track {

using core::Tensor;

/// Crop side = sqrt(factor * w * h) around the box center.
struct CropSpec {
  double template_factor = 2.0;
  double search_factor = 4.0;
  int template_side = 32;
  int search_side = 64;

  void validate() const;
};

/// Square source window [x0, x0 + side) x [y0, y0 + side) resampled to
/// out x out pixels.
struct CropGeometry {
  double x0 = 0;
  double y0 = 0;
  double side = 0;
  int out = 0;
  bool padded = false;  // part of the window lies outside the frame

  /// Normalized window coordinates (0..1) to image pixels.
  BBox to_image(const BBox& normalized) const;
  /// Image pixels to normalized window coordinates.
  BBox to_normalized(const BBox& image) const;
};

struct CroppedPair {
  cv::Mat rgb;
  cv::Mat tir;
  CropGeometry geom;
};

/// Window geometry without touching pixels. InputError on non-positive or
/// non-finite box sizes.
CropGeometry crop_geometry(const BBox& image_box, double area_factor, int out_side);

/// Same window for both modalities, bilinear resampling, out-of-frame pixels
/// filled with the per-channel mean of each image. When the window is an
/// integer rectangle inside the frame the ROI is resized directly.
CroppedPair crop_and_resize(const data::FramePair& frame, const BBox& image_box, double area_factor,
                            int out_side);

/// 8-bit HxWx3 image to a [1,3,H,W] tensor, (v/255 - 0.5) / 0.25 per channel.
template <typename T>
Tensor<T> image_to_tensor(const cv::Mat& img);

/// Stacks [1,3,H,W] tensors along the batch axis.
template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& items);

inline BBox to_center_box(const ImageBox& b) { return {b.cx(), b.cy(), b.w, b.h}; }
inline ImageBox to_image_box(const BBox& b) { return ImageBox::from_center(b.cx, b.cy, b.w, b.h); }

}  // namespace tatrack::track
