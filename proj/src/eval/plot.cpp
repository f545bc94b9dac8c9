#include "tatrack/eval/plot.hpp"

#include <algorithm>
#include <cstdio>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "tatrack/core/error.hpp"
#include "tatrack/eval/metrics.hpp"

namespace tatrack::eval {

namespace {

const cv::Scalar kPalette[] = {{200, 60, 30}, {40, 140, 40}, {30, 60, 210}, {160, 40, 160},
                               {20, 150, 200}, {90, 90, 90}, {0, 0, 0}};

}  // namespace

void plot_curves(const std::filesystem::path& file, const std::string& title, const std::string& x_label,
                 const std::vector<Curve>& curves) {
  const int w = 640, h = 480, left = 60, right = 190, top = 40, bottom = 50;
  cv::Mat img(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
  double x0 = 0, x1 = 1;
  bool first = true;
  for (const auto& c : curves) {
    if (c.x.size() != c.y.size()) throw InputError("plot: curve " + c.name + " has mismatched x/y lengths");
    for (double x : c.x) {
      x0 = first ? x : std::min(x0, x);
      x1 = first ? x : std::max(x1, x);
      first = false;
    }
  }
  if (x1 <= x0) x1 = x0 + 1;
  const int pw = w - left - right, ph = h - top - bottom;
  auto to_px = [&](double x, double y) {
    return cv::Point(left + static_cast<int>((x - x0) / (x1 - x0) * pw + 0.5),
                     top + static_cast<int>((1.0 - std::clamp(y, 0.0, 1.0)) * ph + 0.5));
  };
  const auto font = cv::FONT_HERSHEY_SIMPLEX;
  for (int k = 0; k <= 10; ++k) {
    const double f = k / 10.0;
    cv::line(img, to_px(x0, f), to_px(x1, f), cv::Scalar(225, 225, 225), 1);
    cv::line(img, to_px(x0 + f * (x1 - x0), 0), to_px(x0 + f * (x1 - x0), 1), cv::Scalar(225, 225, 225), 1);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.1f", f);
    cv::putText(img, buf, to_px(x0, f) + cv::Point(-35, 4), font, 0.4, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    std::snprintf(buf, sizeof(buf), "%g", x0 + f * (x1 - x0));
    cv::putText(img, buf, to_px(x0 + f * (x1 - x0), 0) + cv::Point(-8, 16), font, 0.4, cv::Scalar(0, 0, 0), 1,
                cv::LINE_AA);
  }
  cv::rectangle(img, to_px(x0, 1), to_px(x1, 0), cv::Scalar(0, 0, 0), 1);
  cv::putText(img, title, cv::Point(left, 25), font, 0.6, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  cv::putText(img, x_label, cv::Point(left + pw / 2 - 40, h - 12), font, 0.5, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  for (size_t i = 0; i < curves.size(); ++i) {
    const auto& c = curves[i];
    const cv::Scalar color = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
    for (size_t k = 1; k < c.x.size(); ++k) {
      cv::line(img, to_px(c.x[k - 1], c.y[k - 1]), to_px(c.x[k], c.y[k]), color, 2, cv::LINE_AA);
    }
    const cv::Point key(w - right + 12, top + 20 + static_cast<int>(i) * 22);
    cv::line(img, key, key + cv::Point(20, 0), color, 2, cv::LINE_AA);
    cv::putText(img, c.name, key + cv::Point(26, 4), font, 0.45, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  }
  if (!file.parent_path().empty()) std::filesystem::create_directories(file.parent_path());
  if (!cv::imwrite(file.string(), img)) throw LoadError("plot: cannot write " + file.string());
}

Curve success_plot_curve(const std::string& name, const std::vector<double>& iou) {
  Curve c{name, {}, success_curve(iou)};
  for (int k = 0; k < kCurvePoints; ++k) c.x.push_back(static_cast<double>(k) / (kCurvePoints - 1));
  return c;
}

Curve precision_plot_curve(const std::string& name, const std::vector<double>& center_error) {
  Curve c{name, {}, precision_curve(center_error)};
  for (int px = 0; px <= 50; ++px) c.x.push_back(px);
  return c;
}

}  // namespace tatrack::eval
