#include "tatrack/train/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "tatrack/core/error.hpp"

namespace tatrack::train {

using core::Tensor;

namespace {

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace

FrameTriplet sample_frames(int n, const TrainConfig& cfg, std::mt19937_64& rng) {
  if (n < 3) throw InputError("sample_frames: need at least 3 frames");
  FrameTriplet f{};
  f.search = uniform_int(rng, 2, n - 1);
  f.online = uniform_int(rng, std::max(1, f.search - cfg.max_gap), f.search - 1);
  f.initial = uniform_int(rng, 0, std::min(f.online - 1, cfg.initial_window - 1));
  return f;
}

SamplePair sample_training_pair(const std::vector<data::Sequence>& dataset, const track::CropSpec& crop,
                                const TrainConfig& cfg, std::mt19937_64& rng, data::FrameCache* cache) {
  std::vector<size_t> usable;
  for (size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].size() >= 3) usable.push_back(i);
  }
  if (usable.empty()) throw InputError("sample_training_pair: no sequence with at least 3 frames");
  const auto& seq = dataset[usable[static_cast<size_t>(uniform_int(rng, 0, static_cast<int>(usable.size()) - 1))]];
  const FrameTriplet f = sample_frames(seq.size(), cfg, rng);

  SamplePair s;
  s.sequence = seq.name;
  s.initial_frame = f.initial;
  s.online_frame = f.online;
  s.search_frame = f.search;
  auto frame = [&](int i) { return cache ? cache->get(seq, i) : seq.frame(i); };
  auto gt_of = [&](int i) { return track::to_center_box(seq.groundtruth[static_cast<size_t>(i)]); };
  s.initial = track::crop_and_resize(frame(f.initial), gt_of(f.initial), crop.template_factor, crop.template_side);
  s.online = track::crop_and_resize(frame(f.online), gt_of(f.online), crop.template_factor, crop.template_side);

  const BBox gt = gt_of(f.search);
  std::uniform_real_distribution<double> shift(-cfg.center_jitter, cfg.center_jitter);
  std::uniform_real_distribution<double> log_scale(-cfg.scale_jitter, cfg.scale_jitter);
  const double unit = std::sqrt(gt.w * gt.h);
  const double dx = shift(rng) * unit, dy = shift(rng) * unit;
  const double sc = std::exp(log_scale(rng));
  const BBox window{gt.cx + dx, gt.cy + dy, gt.w * sc, gt.h * sc};
  s.search = track::crop_and_resize(frame(f.search), window, crop.search_factor, crop.search_side);

  const BBox n = s.search.geom.to_normalized(gt);
  const double x0 = std::max(0.0, n.x0()), y0 = std::max(0.0, n.y0());
  const double x1 = std::min(1.0, n.x1()), y1 = std::min(1.0, n.y1());
  s.partial = x0 != n.x0() || y0 != n.y0() || x1 != n.x1() || y1 != n.y1();
  s.gt = s.partial ? BBox{0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0} : n;
  return s;
}

template <typename T>
Batch<T> make_batch(const std::vector<SamplePair>& samples) {
  if (samples.empty()) throw InputError("make_batch: empty batch");
  std::vector<Tensor<T>> ir, it, orr, ot, sr, st;
  Batch<T> b;
  for (const auto& s : samples) {
    ir.push_back(track::image_to_tensor<T>(s.initial.rgb));
    it.push_back(track::image_to_tensor<T>(s.initial.tir));
    orr.push_back(track::image_to_tensor<T>(s.online.rgb));
    ot.push_back(track::image_to_tensor<T>(s.online.tir));
    sr.push_back(track::image_to_tensor<T>(s.search.rgb));
    st.push_back(track::image_to_tensor<T>(s.search.tir));
    b.gt.push_back(s.gt);
  }
  auto v = [](const std::vector<Tensor<T>>& xs) { return core::constant(track::stack_batch(xs)); };
  b.inputs.initial_template = {v(ir), v(it)};
  b.inputs.online_template = {v(orr), v(ot)};
  b.inputs.search = {v(sr), v(st)};
  return b;
}

template Batch<float> make_batch(const std::vector<SamplePair>&);
template Batch<double> make_batch(const std::vector<SamplePair>&);

}  // namespace tatrack::train
