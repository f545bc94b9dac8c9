#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace tatrack::eval {

struct Curve {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Line plot written as an image (format from the extension, e.g. .png).
/// y is drawn on [0, 1]; x spans the union of the curves' ranges. LoadError
/// when the file cannot be written.
void plot_curves(const std::filesystem::path& file, const std::string& title, const std::string& x_label,
                 const std::vector<Curve>& curves);

/// Success curve over IoU thresholds [0, 1] (51 points).
Curve success_plot_curve(const std::string& name, const std::vector<double>& iou);
/// Precision curve over center-error thresholds 0..50 px.
Curve precision_plot_curve(const std::string& name, const std::vector<double>& center_error);

}  // namespace tatrack::eval
