#include "tatrack/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tatrack/core/error.hpp"

namespace tatrack::eval {

FrameErrors eval_sequence(const std::vector<ImageBox>& results, const std::vector<ImageBox>& gt) {
  if (results.size() != gt.size()) {
    throw InputError("eval_sequence: " + std::to_string(results.size()) + " results for " +
                     std::to_string(gt.size()) + " ground-truth boxes");
  }
  FrameErrors e;
  for (size_t i = 0; i < gt.size(); ++i) {
    const auto& r = results[i];
    const auto& g = gt[i];
    if (!(g.w > 0) || !(g.h > 0)) throw InputError("eval_sequence: empty ground-truth box at frame " + std::to_string(i));
    const double d = std::hypot(r.cx() - g.cx(), r.cy() - g.cy());
    e.center_error.push_back(d);
    e.norm_error.push_back(d / std::sqrt(g.w * g.h));
    e.iou.push_back(iou(r, g));
  }
  return e;
}

namespace {

// Per-threshold hit counts; AUCs divide the integer total once so that hand
// fixtures reproduce exactly.
std::vector<int64_t> success_counts(const std::vector<double>& iou) {
  std::vector<int64_t> c;
  for (int k = 0; k < kCurvePoints; ++k) {
    const double t = static_cast<double>(k) / (kCurvePoints - 1);
    c.push_back(std::count_if(iou.begin(), iou.end(), [&](double x) { return k == 0 ? x > 0.0 : x >= t; }));
  }
  return c;
}

std::vector<int64_t> norm_precision_counts(const std::vector<double>& ne) {
  std::vector<int64_t> c;
  for (int k = 0; k < kCurvePoints; ++k) {
    const double t = 0.5 * static_cast<double>(k) / (kCurvePoints - 1);
    c.push_back(std::count_if(ne.begin(), ne.end(), [t](double x) { return x <= t; }));
  }
  return c;
}

std::vector<double> as_fractions(const std::vector<int64_t>& counts, size_t n) {
  std::vector<double> out;
  for (int64_t c : counts) out.push_back(n ? static_cast<double>(c) / static_cast<double>(n) : 0.0);
  return out;
}

double auc(const std::vector<int64_t>& counts, size_t n) {
  if (n == 0) return 0.0;
  int64_t total = 0;
  for (int64_t c : counts) total += c;
  return static_cast<double>(total) / static_cast<double>(static_cast<int64_t>(n) * static_cast<int64_t>(counts.size()));
}

}  // namespace

double precision_rate(const std::vector<double>& ce) {
  if (ce.empty()) return 0.0;
  const auto hits = std::count_if(ce.begin(), ce.end(), [](double d) { return d <= kPrecisionThresholdPx; });
  return static_cast<double>(hits) / static_cast<double>(ce.size());
}

std::vector<double> success_curve(const std::vector<double>& iou) { return as_fractions(success_counts(iou), iou.size()); }

std::vector<double> norm_precision_curve(const std::vector<double>& ne) {
  return as_fractions(norm_precision_counts(ne), ne.size());
}

std::vector<double> precision_curve(const std::vector<double>& ce) {
  std::vector<int64_t> c;
  for (int px = 0; px <= 50; ++px) c.push_back(std::count_if(ce.begin(), ce.end(), [px](double x) { return x <= px; }));
  return as_fractions(c, ce.size());
}

double normalized_precision_auc(const std::vector<double>& ne) { return auc(norm_precision_counts(ne), ne.size()); }
double success_auc(const std::vector<double>& iou) { return auc(success_counts(iou), iou.size()); }

FrameErrors pooled_errors(const std::vector<SequenceResult>& results, const std::string& attribute) {
  FrameErrors all;
  for (const auto& r : results) {
    const auto& e = r.errors;
    for (size_t i = 0; i < e.iou.size(); ++i) {
      if (!attribute.empty()) {
        const int f = static_cast<int>(i);
        const bool hit = std::any_of(r.attributes.begin(), r.attributes.end(), [&](const data::AttributeSpan& s) {
          return s.code == attribute && s.contains(f);
        });
        if (!hit) continue;
      }
      all.center_error.push_back(e.center_error[i]);
      all.norm_error.push_back(e.norm_error[i]);
      all.iou.push_back(e.iou[i]);
    }
  }
  return all;
}

MetricsReport aggregate(const std::vector<SequenceResult>& results, const std::string& attribute) {
  if (results.empty()) throw InputError("aggregate: no sequences");
  const FrameErrors e = pooled_errors(results, attribute);
  MetricsReport m;
  m.frames = static_cast<int64_t>(e.iou.size());
  if (m.frames > 0) {
    m.precision = precision_rate(e.center_error);
    m.norm_precision = normalized_precision_auc(e.norm_error);
    m.success = success_auc(e.iou);
  }
  double secs = 0;
  int64_t tracked = 0;
  for (const auto& r : results) {
    secs += r.seconds;
    tracked += r.tracked_frames;
  }
  m.fps = secs > 0 ? static_cast<double>(tracked) / secs : 0.0;
  return m;
}

std::string to_key_values(const MetricsReport& r, const std::string& prefix, bool with_fps) {
  std::ostringstream os;
  os.precision(10);
  auto put = [&](const char* k, const std::optional<double>& v) {
    os << prefix << k << "=";
    if (v) os << *v;
    else os << "absent";
    os << "\n";
  };
  put("precision", r.precision);
  put("norm_precision", r.norm_precision);
  put("success", r.success);
  os << prefix << "frames=" << r.frames << "\n";
  if (with_fps) os << prefix << "fps=" << r.fps << "\n";
  return os.str();
}

}  // namespace tatrack::eval
