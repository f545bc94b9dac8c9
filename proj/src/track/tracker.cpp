#include "tatrack/track/tracker.hpp"

#include <algorithm>
#include <cmath>

#include "tatrack/core/error.hpp"

namespace tatrack::track {

TrackerOptions default_options(const model::BackboneConfig& bb) {
  TrackerOptions o;
  o.crop.template_side = static_cast<int>(bb.template_side);
  o.crop.search_side = static_cast<int>(bb.search_side);
  return o;
}

template <typename T>
Tracker<T>::Tracker(const model::TATrackModel<T>& model, TrackerOptions opts)
    : model_(model), opts_(opts), selector_(opts.update_interval, opts.confidence_floor) {
  opts_.crop.validate();
  const auto& bb = model.config().backbone;
  if (opts_.crop.template_side != bb.template_side || opts_.crop.search_side != bb.search_side) {
    throw ConfigError("tracker: crop sides do not match the model");
  }
}

template <typename T>
TemplateCrop<T> Tracker<T>::template_crop(const data::FramePair& frame, const BBox& box, bool* padded) const {
  const CroppedPair c = crop_and_resize(frame, box, opts_.crop.template_factor, opts_.crop.template_side);
  if (padded) *padded = c.geom.padded;
  return {image_to_tensor<T>(c.rgb), image_to_tensor<T>(c.tir)};
}

template <typename T>
void Tracker<T>::init(const data::FramePair& frame, const ImageBox& box) {
  if (!(box.w > 0) || !(box.h > 0)) throw InputError("tracker init: degenerate box");
  if (box.cx() < 0 || box.cy() < 0 || box.cx() > frame.rgb.cols || box.cy() > frame.rgb.rows) {
    throw InputError("tracker init: box center outside the frame");
  }
  prev_box_ = to_center_box(box);
  initial_ = template_crop(frame, prev_box_, &init_padded_);
  online_ = initial_;
  candidate_ = {};
  online_frame_ = 0;
  frame_size_ = frame.rgb.size();
  frame_index_ = 0;
  selector_.reset();
  initialized_ = true;
}

template <typename T>
TrackResult Tracker<T>::track(const data::FramePair& frame) {
  if (!initialized_) throw UsageError("tracker: track() before init()");
  if (frame.rgb.size() != frame_size_ || frame.tir.size() != frame_size_) {
    throw InputError("tracker: frame size changed mid-sequence");
  }
  const CroppedPair s = crop_and_resize(frame, prev_box_, opts_.crop.search_factor, opts_.crop.search_side);
  last_search_ = s.geom;

  model::HeadOutputs<T> out;
  {
    core::NoGradGuard no_grad;
    auto c = [](const Tensor<T>& t) { return core::constant(t); };
    model::ModelInputs<T> in;
    in.initial_template = {c(initial_.rgb), c(initial_.tir)};
    in.online_template = {c(online_.rgb), c(online_.tir)};
    in.search = {c(image_to_tensor<T>(s.rgb)), c(image_to_tensor<T>(s.tir))};
    out = model_.forward(in, false);
  }
  const model::DecodedBox d = model::decode_box(out.score.value(), out.offset.value(), out.size.value());

  // Keep the state inside the frame so the next crop stays meaningful.
  BBox b = s.geom.to_image(d.box);
  const double fw = frame_size_.width, fh = frame_size_.height;
  b.cx = std::clamp(b.cx, 0.0, fw);
  b.cy = std::clamp(b.cy, 0.0, fh);
  b.w = std::clamp(b.w, 2.0, fw);
  b.h = std::clamp(b.h, 2.0, fh);
  prev_box_ = b;
  ++frame_index_;

  TrackResult r;
  r.box = to_image_box(b);
  r.confidence = d.confidence;
  if (model_.config().dual_branch) {
    const auto step = selector_.observe(frame_index_, d.confidence);
    if (step.new_best) candidate_ = template_crop(frame, b);
    if (step.update) {
      online_ = candidate_;
      online_frame_ = step.chosen_frame;
      r.template_updated = true;
    }
  }
  return r;
}

template class Tracker<float>;
template class Tracker<double>;

}  // namespace tatrack::track
