#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "tatrack/core/error.hpp"
#include "tatrack/data/synth.hpp"
#include "tatrack/eval/metrics.hpp"
#include "tatrack/eval/runner.hpp"
#include "tatrack/track/variant.hpp"

using namespace tatrack;
using namespace tatrack::eval;

namespace {

// Ground truth 10x10 at (100, 100); results shifted right by the given offsets.
std::pair<std::vector<ImageBox>, std::vector<ImageBox>> shifted_fixture(const std::vector<double>& dx) {
  std::vector<ImageBox> res, gt;
  for (double d : dx) {
    gt.push_back({100, 100, 10, 10});
    res.push_back({100 + d, 100, 10, 10});
  }
  return {res, gt};
}

SequenceResult as_result(const std::vector<ImageBox>& res, const std::vector<ImageBox>& gt,
                         std::vector<data::AttributeSpan> spans = {}) {
  SequenceResult r;
  r.errors = eval_sequence(res, gt);
  r.attributes = std::move(spans);
  return r;
}

}  // namespace

TEST(Metrics, FiveFrameFixtureMatchesHandValues) {
  // Center errors 0, 5, 15, 20, 25 px; normalized by sqrt(100) = 10.
  const auto [res, gt] = shifted_fixture({0, 5, 15, 20, 25});
  const auto e = eval_sequence(res, gt);
  EXPECT_EQ(e.center_error, (std::vector<double>{0, 5, 15, 20, 25}));
  // 20 px sits on the threshold and counts.
  EXPECT_EQ(precision_rate(e.center_error), 0.8);
  // Normalized errors 0, .5, 1.5, 2, 2.5: frame 0 passes all 51 thresholds,
  // frame 1 only t = 0.5.
  EXPECT_EQ(normalized_precision_auc(e.norm_error), 52.0 / 255.0);
  // IoUs 1, 1/3, 0, 0, 0: frame 0 passes all 51 thresholds, frame 1 passes
  // t = 0 and t = 0.02 .. 0.32 (17 thresholds).
  EXPECT_DOUBLE_EQ(e.iou[1], 1.0 / 3.0);
  EXPECT_EQ(success_auc(e.iou), 68.0 / 255.0);

  const auto m = aggregate({as_result(res, gt)});
  EXPECT_EQ(*m.precision, 0.8);
  EXPECT_EQ(*m.norm_precision, 52.0 / 255.0);
  EXPECT_EQ(*m.success, 68.0 / 255.0);
  EXPECT_EQ(m.frames, 5);
}

TEST(Metrics, TwoFramePrecisionAtTwentyPixels) {
  const auto [res, gt] = shifted_fixture({5, 25});
  EXPECT_EQ(precision_rate(eval_sequence(res, gt).center_error), 0.5);
}

TEST(Metrics, PerfectTrackingScoresOne) {
  const auto [res, gt] = shifted_fixture({0, 0, 0});
  const auto m = aggregate({as_result(res, gt)});
  EXPECT_EQ(*m.precision, 1.0);
  EXPECT_EQ(*m.norm_precision, 1.0);
  EXPECT_EQ(*m.success, 1.0);
}

TEST(Metrics, IouIdenticalAndDisjoint) {
  const ImageBox a{3, 4, 10, 20};
  EXPECT_EQ(iou(a, a), 1.0);
  EXPECT_EQ(iou(a, ImageBox{13, 4, 10, 20}), 0.0);
  EXPECT_EQ(iou(a, ImageBox{50, 50, 5, 5}), 0.0);
}

TEST(Metrics, PoolingWeighsFramesNotSequences) {
  const auto [good_res, good_gt] = shifted_fixture({0, 0});
  const auto [bad_res, bad_gt] = shifted_fixture({40, 40});
  EXPECT_EQ(*aggregate({as_result(good_res, good_gt), as_result(bad_res, bad_gt)}).precision, 0.5);
  // Unequal lengths: 2 good frames and 6 bad ones pool to 0.25.
  const auto [long_res, long_gt] = shifted_fixture({40, 40, 40, 40, 40, 40});
  EXPECT_EQ(*aggregate({as_result(good_res, good_gt), as_result(long_res, long_gt)}).precision, 0.25);
}

TEST(Metrics, SuccessIsInvariantToFrameOrder) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-12, 12);
  std::vector<double> dx;
  for (int i = 0; i < 40; ++i) dx.push_back(u(rng));
  const auto [res, gt] = shifted_fixture(dx);
  const double base = success_auc(eval_sequence(res, gt).iou);
  for (int k = 0; k < 5; ++k) {
    std::shuffle(dx.begin(), dx.end(), rng);
    const auto [r2, g2] = shifted_fixture(dx);
    EXPECT_EQ(success_auc(eval_sequence(r2, g2).iou), base);
  }
}

TEST(Metrics, CurvesHaveFixedGridsAndMatchAucs) {
  const auto [res, gt] = shifted_fixture({0, 5, 15, 20, 25});
  const auto e = eval_sequence(res, gt);
  const auto sc = success_curve(e.iou);
  ASSERT_EQ(sc.size(), 51u);
  EXPECT_EQ(sc.front(), 0.4);
  EXPECT_EQ(sc.back(), 0.2);
  EXPECT_EQ(norm_precision_curve(e.norm_error).size(), 51u);
  const auto pc = precision_curve(e.center_error);
  ASSERT_EQ(pc.size(), 51u);
  EXPECT_EQ(pc[20], 0.8);
  EXPECT_TRUE(std::is_sorted(pc.begin(), pc.end()));
}

TEST(Metrics, AttributeFilterSelectsSpanFrames) {
  // Frames 2..4 carry LI and are the only bad ones.
  const auto [res, gt] = shifted_fixture({0, 0, 40, 40, 40, 0});
  const auto r = as_result(res, gt, {{"LI", 2, 5}, {"DEF", 0, 1}});
  const auto li = aggregate({r}, "LI");
  EXPECT_EQ(li.frames, 3);
  EXPECT_EQ(*li.precision, 0.0);
  const auto def = aggregate({r}, "DEF");
  EXPECT_EQ(def.frames, 1);
  EXPECT_EQ(*def.precision, 1.0);
  const auto none = aggregate({r}, "SA");
  EXPECT_EQ(none.frames, 0);
  EXPECT_FALSE(none.precision.has_value());
  EXPECT_FALSE(none.success.has_value());
  EXPECT_NE(to_key_values(none).find("success=absent"), std::string::npos);
}

TEST(Metrics, AttributeFilterOnSyntheticBlackoutSpan) {
  data::SynthConfig c;
  c.frames = 60;
  c.events = {{data::EventKind::kRgbBlackout, 20, 35}, {data::EventKind::kDeformation, 5, 12}};
  const auto syn = data::render_synthetic(c);
  // Mark exactly the blackout frames as failures and nothing else.
  std::vector<ImageBox> res = syn.groundtruth;
  for (int f = 0; f < c.frames; ++f) {
    const bool dark = cv::mean(syn.frames[static_cast<size_t>(f)].rgb)[0] < 40;
    if (dark) res[static_cast<size_t>(f)].x += 500;
  }
  const auto m = aggregate({as_result(res, syn.groundtruth, syn.spans)}, "LI");
  EXPECT_EQ(m.frames, 15);
  EXPECT_EQ(*m.success, 0.0);
  const auto all = aggregate({as_result(res, syn.groundtruth, syn.spans)});
  EXPECT_NEAR(*all.success, 45.0 / 60.0, 1e-12);
}

TEST(Metrics, ErrorsOnBadInput) {
  const auto [res, gt] = shifted_fixture({0, 1});
  EXPECT_THROW(eval_sequence({res[0]}, gt), InputError);
  EXPECT_THROW(eval_sequence({res[0]}, {ImageBox{0, 0, 0, 5}}), InputError);
  EXPECT_THROW(aggregate({}), InputError);
}

TEST(Metrics, FpsCountsTrackedFramesOverTrackerTime) {
  const auto [res, gt] = shifted_fixture({0, 0, 0});
  auto a = as_result(res, gt);
  a.seconds = 0.5;
  a.tracked_frames = 2;
  auto b = a;
  b.seconds = 1.5;
  b.tracked_frames = 6;
  EXPECT_EQ(aggregate({a, b}).fps, 4.0);
}

TEST(Runner, FirstFrameIsTheInitialBoxAndLengthsMatch) {
  model::BackboneConfig bb;
  bb.patch_size = 4;
  bb.token_dim = 16;
  bb.depth = 2;
  bb.num_heads = 2;
  bb.template_side = 16;
  bb.search_side = 32;
  model::TATrackModel<float> m(track::variant_model(track::Variant::kFull, bb, {2}));
  m.init(3);
  data::SynthConfig c;
  c.frames = 12;
  c.width = 64;
  c.height = 64;
  c.target_min_side = 10;
  c.target_max_side = 12;
  const auto dir = std::filesystem::temp_directory_path() / "tatrack_runner_seq";
  std::filesystem::remove_all(dir);
  const auto seq = data::generate_synthetic(c, dir);
  auto opts = track::default_options(bb);
  const auto run = run_sequence(m, seq, opts);
  ASSERT_EQ(run.boxes.size(), 12u);
  EXPECT_EQ(run.boxes[0].x, seq.groundtruth[0].x);
  EXPECT_EQ(run.boxes[0].w, seq.groundtruth[0].w);
  EXPECT_EQ(run.confidence[0], 1.0);
  EXPECT_EQ(run.tracked_frames, 11);
  const auto r = score_run(seq, run);
  EXPECT_EQ(r.errors.iou.size(), 12u);
  EXPECT_EQ(r.errors.iou[0], 1.0);
}
