#pragma once

#include <optional>

#include "tatrack/model/tatrack_model.hpp"
#include "tatrack/track/crop.hpp"
#include "tatrack/track/ots.hpp"

namespace tatrack::track {

struct TrackerOptions {
  CropSpec crop;
  int update_interval = 50;
  std::optional<double> confidence_floor;  // off: pure max-in-interval selection
};

/// Options matching a model's crop sides.
TrackerOptions default_options(const model::BackboneConfig& bb);

/// Normalized crop tensors of one modality pair, [1,3,S,S] each.
template <typename T>
struct TemplateCrop {
  Tensor<T> rgb;
  Tensor<T> tir;
};

struct TrackResult {
  ImageBox box;
  double confidence = 0.0;
  bool template_updated = false;
};

/// Per-sequence inference loop. The model is shared and never modified.
template <typename T>
class Tracker {
 public:
  Tracker(const model::TATrackModel<T>& model, TrackerOptions opts);

  /// InputError for a degenerate box or a box whose center lies outside the frame.
  void init(const data::FramePair& frame, const ImageBox& box);
  /// InputError when the frame size differs from the init frame.
  TrackResult track(const data::FramePair& frame);

  bool initialized() const { return initialized_; }
  const BBox& prev_box() const { return prev_box_; }
  const TemplateCrop<T>& initial_template() const { return initial_; }
  const TemplateCrop<T>& online_template() const { return online_; }
  const OnlineTemplateSelector& selector() const { return selector_; }
  /// Frame whose crop is the current online template (0 = the initial frame).
  int64_t online_template_frame() const { return online_frame_; }
  /// Geometry of the last search crop.
  const CropGeometry& last_search() const { return last_search_; }
  bool init_padded() const { return init_padded_; }

 private:
  TemplateCrop<T> template_crop(const data::FramePair& frame, const BBox& box, bool* padded = nullptr) const;

  const model::TATrackModel<T>& model_;
  TrackerOptions opts_;
  OnlineTemplateSelector selector_;
  bool initialized_ = false;
  bool init_padded_ = false;
  cv::Size frame_size_;
  int64_t frame_index_ = 0;
  BBox prev_box_;
  TemplateCrop<T> initial_, online_, candidate_;
  int64_t online_frame_ = 0;
  CropGeometry last_search_;
};

}  // namespace tatrack::track
