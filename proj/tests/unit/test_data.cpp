#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <opencv2/core.hpp>

#include "tatrack/core/error.hpp"
#include "tatrack/data/sequence.hpp"
#include "tatrack/data/synth.hpp"

using namespace tatrack;
using namespace tatrack::data;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("tatrack_data_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

FramePair solid_pair(int w, int h, uint8_t v) {
  return {cv::Mat(h, w, CV_8UC3, cv::Scalar(v, v + 1, v + 2)), cv::Mat(h, w, CV_8UC3, cv::Scalar(v, v, v))};
}

bool same_pixels(const cv::Mat& a, const cv::Mat& b) {
  return a.size() == b.size() && a.type() == b.type() && cv::norm(a, b, cv::NORM_INF) == 0.0;
}

// Mean of one channel inside `inner` and in the ring between `inner` and
// `outer`, both clipped to the image.
std::pair<double, double> inside_ring_means(const cv::Mat& img, int ch, const ImageBox& inner, double margin) {
  double in_sum = 0, ring_sum = 0;
  int in_n = 0, ring_n = 0;
  for (int i = 0; i < img.rows; ++i) {
    for (int j = 0; j < img.cols; ++j) {
      const double x = j + 0.5, y = i + 0.5;
      const bool in = x > inner.x + 2 && x < inner.x + inner.w - 2 && y > inner.y + 2 && y < inner.y + inner.h - 2;
      const bool near = x > inner.x - margin && x < inner.x + inner.w + margin && y > inner.y - margin &&
                        y < inner.y + inner.h + margin;
      const bool outside = x < inner.x - 1 || x > inner.x + inner.w + 1 || y < inner.y - 1 || y > inner.y + inner.h + 1;
      const double v = img.at<cv::Vec3b>(i, j)[ch];
      if (in) in_sum += v, ++in_n;
      if (near && outside) ring_sum += v, ++ring_n;
    }
  }
  return {in_sum / in_n, ring_sum / ring_n};
}

}  // namespace

TEST(SequenceIo, ThreeFrameFixtureRoundTrips) {
  TempDir tmp;
  std::vector<FramePair> frames{solid_pair(20, 16, 10), solid_pair(20, 16, 90), solid_pair(20, 16, 200)};
  const std::vector<ImageBox> gt{{1.5, 2.25, 5, 6}, {0.1, 0.2, 7.75, 3}, {3, 4, 5.125, 9.0625}};
  const std::vector<AttributeSpan> spans{{"LI", 1, 3}, {"DEF", 0, 1}};
  write_sequence(tmp.path() / "seq", frames, gt, spans);

  const Sequence s = load_sequence(tmp.path() / "seq");
  EXPECT_EQ(s.name, "seq");
  ASSERT_EQ(s.size(), 3);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(s.groundtruth[i].x, gt[i].x);
    EXPECT_EQ(s.groundtruth[i].y, gt[i].y);
    EXPECT_EQ(s.groundtruth[i].w, gt[i].w);
    EXPECT_EQ(s.groundtruth[i].h, gt[i].h);
    const FramePair f = s.frame(i);
    EXPECT_TRUE(same_pixels(f.rgb, frames[i].rgb));
    EXPECT_TRUE(same_pixels(f.tir, frames[i].tir));
  }
  ASSERT_EQ(s.attributes.size(), 2u);
  EXPECT_TRUE(s.has_attribute(1, "LI"));
  EXPECT_TRUE(s.has_attribute(2, "LI"));
  EXPECT_FALSE(s.has_attribute(0, "LI"));
  EXPECT_TRUE(s.has_attribute(0, "DEF"));
  EXPECT_THROW(s.frame(3), InputError);
}

TEST(SequenceIo, MissingInfraredFrameIsNamed) {
  TempDir tmp;
  std::vector<FramePair> frames{solid_pair(8, 8, 1), solid_pair(8, 8, 2), solid_pair(8, 8, 3)};
  write_sequence(tmp.path() / "s", frames, {{0, 0, 2, 2}, {0, 0, 2, 2}, {0, 0, 2, 2}}, {});
  fs::remove(tmp.path() / "s" / "infrared" / "000003.png");
  try {
    load_sequence(tmp.path() / "s");
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("000003.png"), std::string::npos) << e.what();
  }

  // A renamed file breaks the pairing and is named as well.
  fs::rename(tmp.path() / "s" / "visible" / "000002.png", tmp.path() / "s" / "visible" / "000002b.png");
  fs::remove(tmp.path() / "s" / "visible" / "000003.png");
  try {
    load_sequence(tmp.path() / "s");
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("000002b.png"), std::string::npos) << e.what();
  }
}

TEST(SequenceIo, GroundTruthParsing) {
  TempDir tmp;
  const fs::path f = tmp.path() / "gt.txt";
  {
    std::ofstream out(f);
    out << "10,20,30,40\n11 21 31 41\n12\t22\t32\t42\n\n";
  }
  const auto boxes = read_boxes(f);
  ASSERT_EQ(boxes.size(), 3u);
  EXPECT_EQ(boxes[0].x, 10);
  EXPECT_EQ(boxes[0].y, 20);
  EXPECT_EQ(boxes[0].w, 30);
  EXPECT_EQ(boxes[0].h, 40);
  EXPECT_EQ(boxes[2].h, 42);

  {
    std::ofstream out(f);
    out << "1,2,3,4\n1,2,three,4\n";
  }
  try {
    read_boxes(f);
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("gt.txt:2"), std::string::npos) << e.what();
  }
}

TEST(SequenceIo, FrameCountMismatchAndBadAttributes) {
  TempDir tmp;
  write_sequence(tmp.path() / "s", {solid_pair(8, 8, 1), solid_pair(8, 8, 2)}, {{0, 0, 2, 2}, {0, 0, 2, 2}}, {});
  write_boxes(tmp.path() / "s" / "groundtruth.txt", {{0, 0, 2, 2}});
  EXPECT_THROW(load_sequence(tmp.path() / "s"), LoadError);
  write_boxes(tmp.path() / "s" / "groundtruth.txt", {{0, 0, 2, 2}, {0, 0, 2, 2}});
  write_attributes(tmp.path() / "s" / "attributes.txt", {{"XYZ", 0, 1}});
  EXPECT_THROW(load_sequence(tmp.path() / "s"), LoadError);
  write_attributes(tmp.path() / "s" / "attributes.txt", {{"LI", 0, 5}});
  EXPECT_THROW(load_sequence(tmp.path() / "s"), LoadError);
}

TEST(Synth, SameSeedIsBitIdentical) {
  SynthConfig cfg;
  cfg.frames = 40;
  cfg.seed = 17;
  std::mt19937_64 rng(3);
  cfg.events = random_event_schedule(cfg.frames, rng);
  const SynthSequence a = render_synthetic(cfg);
  const SynthSequence b = render_synthetic(cfg);
  ASSERT_EQ(a.frames.size(), b.frames.size());
  for (size_t i = 0; i < a.frames.size(); ++i) {
    EXPECT_TRUE(same_pixels(a.frames[i].rgb, b.frames[i].rgb));
    EXPECT_TRUE(same_pixels(a.frames[i].tir, b.frames[i].tir));
    EXPECT_EQ(a.groundtruth[i].x, b.groundtruth[i].x);
  }
  cfg.seed = 18;
  const SynthSequence c = render_synthetic(cfg);
  EXPECT_FALSE(same_pixels(a.frames[0].rgb, c.frames[0].rgb));
}

TEST(Synth, BlackoutHidesTargetInRgbOnly) {
  SynthConfig cfg;
  cfg.frames = 30;
  cfg.distractors = 0;
  cfg.seed = 5;
  cfg.events = {{EventKind::kRgbBlackout, 10, 20}};
  const SynthSequence s = render_synthetic(cfg);
  for (int t = 0; t < cfg.frames; ++t) {
    const auto& gt = s.groundtruth[t];
    double rgb_contrast = 0;
    for (int ch = 0; ch < 3; ++ch) {
      const auto [in, ring] = inside_ring_means(s.frames[t].rgb, ch, gt, 6.0);
      rgb_contrast = std::max(rgb_contrast, std::abs(in - ring));
    }
    const auto [tin, tring] = inside_ring_means(s.frames[t].tir, 0, gt, 6.0);
    const double tir_contrast = std::abs(tin - tring);
    EXPECT_GT(tir_contrast, 5 * cfg.noise) << "frame " << t;
    if (t >= 10 && t < 20) {
      EXPECT_LT(rgb_contrast, cfg.noise) << "frame " << t;
    } else {
      EXPECT_GT(rgb_contrast, 5 * cfg.noise) << "frame " << t;
    }
  }
}

TEST(Synth, CrossoverHidesTargetInThermal) {
  SynthConfig cfg;
  cfg.frames = 20;
  cfg.distractors = 0;
  cfg.seed = 9;
  cfg.events = {{EventKind::kTirCrossover, 5, 15}};
  const SynthSequence s = render_synthetic(cfg);
  const auto [in_on, ring_on] = inside_ring_means(s.frames[10].tir, 0, s.groundtruth[10], 6.0);
  const auto [in_off, ring_off] = inside_ring_means(s.frames[2].tir, 0, s.groundtruth[2], 6.0);
  EXPECT_LT(std::abs(in_on - ring_on), 5 * cfg.noise);
  EXPECT_GT(std::abs(in_off - ring_off), 5 * cfg.noise);
}

TEST(Synth, GroundTruthStaysInFrameAndMovesSmoothly) {
  SynthConfig cfg;
  cfg.frames = 200;
  cfg.seed = 11;
  std::mt19937_64 rng(1);
  cfg.events = random_event_schedule(cfg.frames, rng);
  const SynthSequence s = render_synthetic(cfg);
  for (size_t i = 0; i < s.groundtruth.size(); ++i) {
    const auto& b = s.groundtruth[i];
    EXPECT_GE(b.x, 0.0);
    EXPECT_GE(b.y, 0.0);
    EXPECT_LE(b.x + b.w, cfg.width);
    EXPECT_LE(b.y + b.h, cfg.height);
    if (i > 0) {
      const auto& p = s.groundtruth[i - 1];
      EXPECT_LE(std::hypot(b.cx() - p.cx(), b.cy() - p.cy()), cfg.max_speed + 1e-9);
    }
  }
}

TEST(Synth, EventScheduleWithinBounds) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const int frames = 60 + trial;
    const auto ev = random_event_schedule(frames, rng);
    bool has_li = false, has_def = false;
    for (const auto& e : ev) {
      EXPECT_GE(e.start, 0);
      EXPECT_LT(e.start, e.end);
      EXPECT_LE(e.end, frames);
      has_li |= e.kind == EventKind::kRgbBlackout;
      has_def |= e.kind == EventKind::kDeformation;
    }
    EXPECT_TRUE(has_li && has_def);
  }
  SynthConfig bad;
  bad.frames = 10;
  bad.events = {{EventKind::kOcclusion, 5, 11}};
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(parse_event_kind("XX"), ConfigError);
  EXPECT_EQ(parse_event_kind("rgb_blackout"), EventKind::kRgbBlackout);
  EXPECT_EQ(attribute_code(parse_event_kind("SA")), "SA");
}

TEST(Synth, GenerateThenLoadKeepsBoxesAndSpans) {
  TempDir tmp;
  SynthConfig cfg;
  cfg.frames = 12;
  cfg.seed = 4;
  cfg.events = {{EventKind::kRgbBlackout, 3, 7}, {EventKind::kDeformation, 0, 5}};
  const SynthSequence mem = render_synthetic(cfg);
  const Sequence disk = generate_synthetic(cfg, tmp.path() / "g");
  ASSERT_EQ(disk.size(), cfg.frames);
  for (int i = 0; i < cfg.frames; ++i) {
    EXPECT_EQ(disk.groundtruth[i].x, mem.groundtruth[i].x);
    EXPECT_EQ(disk.groundtruth[i].y, mem.groundtruth[i].y);
    EXPECT_EQ(disk.groundtruth[i].w, mem.groundtruth[i].w);
    EXPECT_EQ(disk.groundtruth[i].h, mem.groundtruth[i].h);
  }
  EXPECT_TRUE(same_pixels(disk.frame(5).rgb, mem.frames[5].rgb));
  EXPECT_TRUE(disk.has_attribute(4, "LI"));
  EXPECT_FALSE(disk.has_attribute(7, "LI"));

  const auto all = generate_dataset(tmp.path() / "ds", 3, cfg, 99, true);
  const auto loaded = load_dataset(tmp.path() / "ds");
  ASSERT_EQ(loaded.size(), 3u);
  EXPECT_EQ(loaded[0].name, "seq_000");
  EXPECT_EQ(loaded[2].size(), cfg.frames);
}
