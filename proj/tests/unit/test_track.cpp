#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <opencv2/imgproc.hpp>

#include "tatrack/core/error.hpp"
#include "tatrack/track/ots.hpp"
#include "tatrack/track/tracker.hpp"
#include "tatrack/track/variant.hpp"

using namespace tatrack;
using namespace tatrack::track;
using data::FramePair;
using model::BackboneConfig;
using model::ModelConfig;
using model::TATrackModel;

namespace {

cv::Mat random_image(int w, int h, std::mt19937_64& rng) {
  cv::Mat m(h, w, CV_8UC3);
  std::uniform_int_distribution<int> u(0, 255);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w * 3; ++j) m.ptr<uint8_t>(i)[j] = static_cast<uint8_t>(u(rng));
  }
  return m;
}

FramePair random_frame(int w, int h, std::mt19937_64& rng) { return {random_image(w, h, rng), random_image(w, h, rng)}; }

double max_abs_diff(const cv::Mat& a, const cv::Mat& b) { return cv::norm(a, b, cv::NORM_INF); }

BackboneConfig small_backbone() {
  BackboneConfig b;
  b.patch_size = 4;
  b.token_dim = 16;
  b.depth = 2;
  b.num_heads = 2;
  b.template_side = 16;
  b.search_side = 32;
  return b;
}

// Reference selection: split the script into consecutive windows of
// `interval` frames and pick the first maximum of every complete window.
std::vector<std::pair<int64_t, int64_t>> brute_force_updates(const std::vector<double>& scores, int interval) {
  std::vector<std::pair<int64_t, int64_t>> out;  // (update frame, chosen frame)
  const int64_t n = static_cast<int64_t>(scores.size());
  for (int64_t start = 1; start + interval - 1 <= n; start += interval) {
    int64_t best = start;
    for (int64_t f = start; f < start + interval; ++f) {
      if (scores[static_cast<size_t>(f - 1)] > scores[static_cast<size_t>(best - 1)]) best = f;
    }
    out.emplace_back(start + interval - 1, best);
  }
  return out;
}

std::vector<std::pair<int64_t, int64_t>> run_selector(const std::vector<double>& scores, int interval) {
  OnlineTemplateSelector sel(interval);
  std::vector<std::pair<int64_t, int64_t>> out;
  for (size_t i = 0; i < scores.size(); ++i) {
    const auto f = static_cast<int64_t>(i + 1);
    const auto s = sel.observe(f, scores[i]);
    EXPECT_GE(sel.frames_since_update(), 0);
    EXPECT_LT(sel.frames_since_update(), interval);
    if (s.update) out.emplace_back(f, s.chosen_frame);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- crops

TEST(Crop, WindowCenteredWithAreaFactor) {
  const BBox box{40.0, 30.0, 12.0, 8.0};
  const CropGeometry g = crop_geometry(box, 2.0, 16);
  EXPECT_DOUBLE_EQ(g.side, std::sqrt(2.0 * 12 * 8));
  EXPECT_DOUBLE_EQ(g.x0 + 0.5 * g.side, 40.0);
  EXPECT_DOUBLE_EQ(g.y0 + 0.5 * g.side, 30.0);
  const BBox n = g.to_normalized(box);
  EXPECT_NEAR(n.cx, 0.5, 1e-15);
  EXPECT_NEAR(n.cy, 0.5, 1e-15);
  EXPECT_NEAR(n.w * n.h, 0.5, 1e-15);  // the box covers 1/factor of the window
}

TEST(Crop, DegenerateBoxRejected) {
  std::mt19937_64 rng(1);
  const FramePair f = random_frame(32, 32, rng);
  EXPECT_THROW(crop_and_resize(f, {10, 10, 0, 5}, 2.0, 16), InputError);
  EXPECT_THROW(crop_and_resize(f, {10, 10, 5, -1}, 2.0, 16), InputError);
  EXPECT_THROW(crop_and_resize(f, {10, 10, NAN, 5}, 2.0, 16), InputError);
  CropSpec bad;
  bad.search_factor = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Crop, WindowMatchingTheFrameIsAPlainResize) {
  std::mt19937_64 rng(2);
  const FramePair f = random_frame(64, 64, rng);
  // sqrt(4 * 32 * 32) = 64: the window is the whole frame.
  const CroppedPair c = crop_and_resize(f, {32, 32, 32, 32}, 4.0, 40);
  EXPECT_FALSE(c.geom.padded);
  cv::Mat ref;
  cv::resize(f.rgb, ref, cv::Size(40, 40), 0, 0, cv::INTER_LINEAR);
  EXPECT_EQ(max_abs_diff(c.rgb, ref), 0.0);
  // Same output size: identity.
  const CroppedPair same = crop_and_resize(f, {32, 32, 32, 32}, 4.0, 64);
  EXPECT_EQ(max_abs_diff(same.rgb, f.rgb), 0.0);
  EXPECT_EQ(max_abs_diff(same.tir, f.tir), 0.0);
}

TEST(Crop, BothModalitiesShareTheWindow) {
  std::mt19937_64 rng(3);
  const cv::Mat img = random_image(50, 40, rng);
  const FramePair f{img, img.clone()};
  for (int k = 0; k < 20; ++k) {
    std::uniform_real_distribution<double> u(-5, 55);
    const BBox b{u(rng), u(rng), 3 + std::abs(u(rng)) / 3, 3 + std::abs(u(rng)) / 3};
    const CroppedPair c = crop_and_resize(f, b, 4.0, 24);
    EXPECT_EQ(max_abs_diff(c.rgb, c.tir), 0.0);
  }
}

TEST(Crop, OutOfFrameFilledWithChannelMean) {
  cv::Mat rgb(20, 30, CV_8UC3, cv::Scalar(10, 20, 30));
  rgb(cv::Rect(0, 0, 15, 20)).setTo(cv::Scalar(50, 100, 150));  // means 30, 60, 90
  cv::Mat tir(20, 30, CV_8UC3, cv::Scalar(7, 7, 7));
  const FramePair f{rgb, tir};
  // Window [-10, 10) x [-10, 10) around the top-left corner.
  const CroppedPair c = crop_and_resize(f, {0, 0, 10, 10}, 4.0, 20);
  EXPECT_TRUE(c.geom.padded);
  const cv::Vec3b pad = c.rgb.at<cv::Vec3b>(2, 2);
  EXPECT_EQ(pad, cv::Vec3b(30, 60, 90));
  EXPECT_EQ(c.tir.at<cv::Vec3b>(2, 2), cv::Vec3b(7, 7, 7));
  // The in-frame quadrant keeps the image content.
  EXPECT_EQ(c.rgb.at<cv::Vec3b>(15, 15), cv::Vec3b(50, 100, 150));

  const CroppedPair inside = crop_and_resize(f, {15, 10, 4, 4}, 4.0, 8);
  EXPECT_FALSE(inside.geom.padded);
}

TEST(Crop, InverseTransformRecoversImageBoxes) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 1000; ++k) {
    const BBox center{u(rng) * 200, u(rng) * 150, 5 + 40 * u(rng), 5 + 40 * u(rng)};
    const CropGeometry g = crop_geometry(center, 4.0, 64);
    const BBox target{center.cx + (u(rng) - 0.5) * 20, center.cy + (u(rng) - 0.5) * 20, 10 * u(rng) + 1, 10 * u(rng) + 1};
    const BBox back = g.to_image(g.to_normalized(target));
    EXPECT_NEAR(back.cx, target.cx, 1e-9);
    EXPECT_NEAR(back.cy, target.cy, 1e-9);
    EXPECT_NEAR(back.w, target.w, 1e-9);
  }
}

TEST(Crop, RenderedRectangleMapsBackWithinHalfPixel) {
  // A bright rectangle located in the resampled crop and mapped back lands
  // on its true image position.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int k = 0; k < 25; ++k) {
    cv::Mat img(100, 120, CV_8UC3, cv::Scalar(0, 0, 0));
    const int x = 40 + k % 5, y = 30 + k / 5;
    img(cv::Rect(x, y, 20, 14)).setTo(cv::Scalar(255, 255, 255));
    const FramePair f{img, img};
    const BBox guess{x + 10 + u(rng), y + 7 + u(rng), 20, 14};
    const CroppedPair c = crop_and_resize(f, guess, 4.0, 64);
    double sx = 0, sy = 0, sw = 0;
    for (int i = 0; i < c.rgb.rows; ++i) {
      for (int j = 0; j < c.rgb.cols; ++j) {
        const double v = c.rgb.at<cv::Vec3b>(i, j)[0];
        sx += v * (j + 0.5);
        sy += v * (i + 0.5);
        sw += v;
      }
    }
    const BBox found = c.geom.to_image({sx / sw / 64.0, sy / sw / 64.0, 0.1, 0.1});
    EXPECT_LT(std::abs(found.cx - (x + 10.0)), 0.5);
    EXPECT_LT(std::abs(found.cy - (y + 7.0)), 0.5);
  }
}

TEST(Crop, TensorNormalization) {
  cv::Mat img(2, 2, CV_8UC3, cv::Scalar(0, 255, 51));
  const auto t = image_to_tensor<double>(img);
  ASSERT_EQ(t.shape(), (core::Shape{1, 3, 2, 2}));
  EXPECT_DOUBLE_EQ(t[0], -2.0);
  EXPECT_DOUBLE_EQ(t[4], 2.0);
  EXPECT_NEAR(t[8], (51.0 / 255.0 - 0.5) / 0.25, 1e-15);
  const auto b = stack_batch<double>({t, t, t});
  EXPECT_EQ(b.dim(0), 3);
  EXPECT_EQ(b[24], t[0]);
}

// ---------------------------------------------------------------- OTS

TEST(Ots, MaxInIntervalChoosesTheHighestScore) {
  std::vector<double> scores(50, 0.1);
  scores[0] = 0.3;
  scores[1] = 0.9;
  scores[2] = 0.5;
  OnlineTemplateSelector sel(50);
  for (int f = 1; f <= 50; ++f) {
    const auto s = sel.observe(f, scores[static_cast<size_t>(f - 1)]);
    if (f < 50) {
      EXPECT_FALSE(s.update) << f;
    } else {
      EXPECT_TRUE(s.update);
      EXPECT_EQ(s.chosen_frame, 2);
      EXPECT_EQ(s.chosen_score, 0.9);
    }
  }
  EXPECT_EQ(sel.frames_since_update(), 0);
  EXPECT_FALSE(sel.best_frame().has_value());
}

TEST(Ots, MatchesBruteForceOnRandomScripts) {
  std::mt19937_64 rng(6);
  for (int script = 0; script < 100; ++script) {
    const int n = 1 + static_cast<int>(rng() % 400);
    std::vector<double> scores(static_cast<size_t>(n));
    // Coarse quantization produces plenty of ties.
    for (auto& s : scores) s = static_cast<double>(rng() % 8) / 8.0;
    EXPECT_EQ(run_selector(scores, 50), brute_force_updates(scores, 50)) << "script " << script;
    const int interval = 1 + static_cast<int>(rng() % 60);
    EXPECT_EQ(run_selector(scores, interval), brute_force_updates(scores, interval)) << "script " << script;
  }
}

TEST(Ots, IntervalOneUpdatesEveryFrameAndNeverDisablesUpdates) {
  OnlineTemplateSelector every(1);
  OnlineTemplateSelector never(kNeverUpdate);
  for (int f = 1; f <= 500; ++f) {
    const auto a = every.observe(f, 0.5 * std::sin(f));
    EXPECT_TRUE(a.update);
    EXPECT_EQ(a.chosen_frame, f);
    EXPECT_FALSE(never.observe(f, 1.0).update);
  }
  EXPECT_THROW(OnlineTemplateSelector(0), ConfigError);
}

TEST(Ots, OptionalConfidenceFloor) {
  OnlineTemplateSelector sel(3, 0.6);
  EXPECT_FALSE(sel.observe(1, 0.5).new_best);
  EXPECT_FALSE(sel.observe(2, 0.4).new_best);
  EXPECT_FALSE(sel.observe(3, 0.59).update);  // nothing reliable: keep the template
  sel.observe(4, 0.7);
  sel.observe(5, 0.65);
  const auto s = sel.observe(6, 0.2);
  EXPECT_TRUE(s.update);
  EXPECT_EQ(s.chosen_frame, 4);
}

// ---------------------------------------------------------------- variants

TEST(Variants, FlagsMatchComponentColumns) {
  EXPECT_EQ(all_variants().size(), 5u);
  const auto bb = small_backbone();
  for (Variant v : all_variants()) {
    const VariantFlags f = variant_flags(v);
    const ModelConfig m = variant_model(v, bb, {2});
    EXPECT_EQ(m.use_prompts, f.mcp) << variant_name(v);
    EXPECT_EQ(!m.sti_layers.empty(), f.sti) << variant_name(v);
    EXPECT_EQ(parse_variant(variant_name(v)), v);
  }
  EXPECT_FALSE(variant_model(Variant::kRgbOnly, bb, {2}).dual_branch);
  EXPECT_FALSE(variant_model(Variant::kPromptBaseline, bb, {2}).dual_branch);
  EXPECT_TRUE(variant_model(Variant::kNoSti, bb, {2}).dual_branch);
  EXPECT_EQ(variant_update_interval(Variant::kPerFrameUpdate), 1);
  EXPECT_EQ(variant_update_interval(Variant::kFull), 50);
  EXPECT_EQ(variant_update_interval(Variant::kNoSti), 50);
  EXPECT_EQ(variant_update_interval(Variant::kPromptBaseline), kNeverUpdate);
  EXPECT_EQ(weights_source(Variant::kPerFrameUpdate), Variant::kFull);
  EXPECT_THROW(parse_variant("nope"), ConfigError);
}

// ---------------------------------------------------------------- tracker

class TrackerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg_ = variant_model(Variant::kFull, small_backbone(), {2});
    model_ = std::make_unique<TATrackModel<float>>(cfg_);
    model_->init(21);
    std::mt19937_64 rng(22);
    for (int i = 0; i < 12; ++i) frames_.push_back(random_frame(80, 60, rng));
  }

  TrackerOptions options(int interval) const {
    TrackerOptions o = default_options(cfg_.backbone);
    o.update_interval = interval;
    return o;
  }

  ModelConfig cfg_;
  std::unique_ptr<TATrackModel<float>> model_;
  std::vector<FramePair> frames_;
  const ImageBox box0_{30, 20, 12, 10};
};

TEST_F(TrackerTest, InitStoresIdenticalTemplates) {
  Tracker<float> t(*model_, options(50));
  t.init(frames_[0], box0_);
  EXPECT_TRUE(t.initial_template().rgb == t.online_template().rgb);
  EXPECT_TRUE(t.initial_template().tir == t.online_template().tir);
  EXPECT_FALSE(t.init_padded());
  EXPECT_THROW(t.init(frames_[0], {10, 10, 0, 4}), InputError);
  EXPECT_THROW(t.init(frames_[0], {200, 10, 4, 4}), InputError);
}

TEST_F(TrackerTest, SearchFollowsLastPredictionAndConfidenceIsScoreMax) {
  Tracker<float> t(*model_, options(50));
  t.init(frames_[0], box0_);
  for (size_t i = 1; i < frames_.size(); ++i) {
    const BBox prev = t.prev_box();
    const auto online = t.online_template();
    const TrackResult r = t.track(frames_[i]);
    EXPECT_NEAR(t.last_search().x0 + 0.5 * t.last_search().side, prev.cx, 1e-9);
    EXPECT_NEAR(t.last_search().y0 + 0.5 * t.last_search().side, prev.cy, 1e-9);

    // Independent forward on the same crops.
    const CroppedPair s = crop_and_resize(frames_[i], prev, 4.0, 32);
    core::NoGradGuard g;
    model::ModelInputs<float> in;
    in.initial_template = {core::constant(t.initial_template().rgb), core::constant(t.initial_template().tir)};
    in.online_template = {core::constant(online.rgb), core::constant(online.tir)};
    in.search = {core::constant(image_to_tensor<float>(s.rgb)), core::constant(image_to_tensor<float>(s.tir))};
    const auto out = model_->forward(in, false);
    float mx = -1;
    for (float v : out.score.value().data()) mx = std::max(mx, v);
    EXPECT_EQ(r.confidence, static_cast<double>(mx));
  }
}

TEST_F(TrackerTest, FrameSizeChangeRejected) {
  Tracker<float> t(*model_, options(50));
  EXPECT_THROW(t.track(frames_[1]), UsageError);
  t.init(frames_[0], box0_);
  std::mt19937_64 rng(1);
  EXPECT_THROW(t.track(random_frame(81, 60, rng)), InputError);
}

TEST_F(TrackerTest, NeverUpdateKeepsInitialTemplate) {
  Tracker<float> t(*model_, options(kNeverUpdate));
  t.init(frames_[0], box0_);
  for (size_t i = 1; i < frames_.size(); ++i) {
    EXPECT_FALSE(t.track(frames_[i]).template_updated);
    EXPECT_TRUE(t.online_template().rgb == t.initial_template().rgb);
    EXPECT_EQ(t.online_template_frame(), 0);
  }
}

TEST_F(TrackerTest, IntervalOneUsesEveryPrediction) {
  Tracker<float> t(*model_, options(1));
  t.init(frames_[0], box0_);
  for (size_t i = 1; i < frames_.size(); ++i) {
    const TrackResult r = t.track(frames_[i]);
    EXPECT_TRUE(r.template_updated);
    EXPECT_EQ(t.online_template_frame(), static_cast<int64_t>(i));
    const CroppedPair c = crop_and_resize(frames_[i], t.prev_box(), 2.0, 16);
    EXPECT_TRUE(t.online_template().rgb == image_to_tensor<float>(c.rgb));
    EXPECT_TRUE(t.online_template().tir == image_to_tensor<float>(c.tir));
  }
}

TEST_F(TrackerTest, OtsUpdateUsesTheBestFrameOfTheWindow) {
  Tracker<float> t(*model_, options(4));
  t.init(frames_[0], box0_);
  std::vector<double> conf;
  std::vector<TemplateCrop<float>> crops;
  for (size_t i = 1; i <= 8; ++i) {
    const TrackResult r = t.track(frames_[i]);
    conf.push_back(r.confidence);
    const CroppedPair c = crop_and_resize(frames_[i], t.prev_box(), 2.0, 16);
    crops.push_back({image_to_tensor<float>(c.rgb), image_to_tensor<float>(c.tir)});
    EXPECT_EQ(r.template_updated, i % 4 == 0);
    if (i % 4 == 0) {
      const auto updates = brute_force_updates(conf, 4);
      const int64_t chosen = updates.back().second;
      EXPECT_EQ(t.online_template_frame(), chosen);
      EXPECT_TRUE(t.online_template().rgb == crops[static_cast<size_t>(chosen - 1)].rgb);
    }
  }
}

TEST_F(TrackerTest, SingleBranchModelIgnoresOnlineTemplate) {
  const ModelConfig rgb = variant_model(Variant::kRgbOnly, small_backbone(), {});
  TATrackModel<float> m(rgb);
  m.init(3);
  Tracker<float> t(m, options(1));
  t.init(frames_[0], box0_);
  for (size_t i = 1; i < 4; ++i) EXPECT_FALSE(t.track(frames_[i]).template_updated);
  TrackerOptions wrong = options(50);
  wrong.crop.search_side = 48;
  EXPECT_THROW(Tracker<float>(m, wrong), ConfigError);
}
