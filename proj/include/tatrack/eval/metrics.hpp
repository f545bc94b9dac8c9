#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tatrack/core/box.hpp"
#include "tatrack/data/sequence.hpp"

namespace tatrack::eval {

/// Per-frame errors of one tracked sequence.
struct FrameErrors {
  std::vector<double> center_error;  // pixels
  std::vector<double> norm_error;    // center error / sqrt(gt.w * gt.h)
  std::vector<double> iou;
};

/// InputError on length mismatch or a ground-truth box with non-positive area.
FrameErrors eval_sequence(const std::vector<ImageBox>& results, const std::vector<ImageBox>& gt);

inline constexpr double kPrecisionThresholdPx = 20.0;
inline constexpr int kCurvePoints = 51;

/// Fraction of frames with center error <= 20 px.
double precision_rate(const std::vector<double>& center_error);
/// Mean over 51 thresholds t in [0, 0.5] of the fraction with normalized error <= t.
double normalized_precision_auc(const std::vector<double>& norm_error);
/// Mean over 51 thresholds t in [0, 1] of the fraction with IoU >= t (IoU > 0 at t = 0).
double success_auc(const std::vector<double>& iou);

std::vector<double> success_curve(const std::vector<double>& iou);            // 51 points over [0, 1]
std::vector<double> precision_curve(const std::vector<double>& center_error); // 0..50 px
std::vector<double> norm_precision_curve(const std::vector<double>& norm_error);

struct SequenceResult {
  std::string name;
  FrameErrors errors;
  std::vector<data::AttributeSpan> attributes;
  double seconds = 0;  // tracking time, excluding I/O when measured by the runner
  int64_t tracked_frames = 0;
};

/// Rates are absent when no frame was selected.
struct MetricsReport {
  std::optional<double> precision;
  std::optional<double> norm_precision;
  std::optional<double> success;
  int64_t frames = 0;
  double fps = 0;
};

/// Frame-pooled metrics over all sequences. With `attribute`, only frames
/// inside a span carrying that code count.
MetricsReport aggregate(const std::vector<SequenceResult>& results, const std::string& attribute = "");

/// Pooled errors, optionally restricted to an attribute.
FrameErrors pooled_errors(const std::vector<SequenceResult>& results, const std::string& attribute = "");

/// "key=value" lines (machine-readable metrics file). Speed is left out for
/// attribute subsets and for results scored from files.
std::string to_key_values(const MetricsReport& r, const std::string& prefix = "", bool with_fps = true);

}  // namespace tatrack::eval
