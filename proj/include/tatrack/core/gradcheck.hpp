#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "tatrack/core/autograd.hpp"

namespace tatrack::core {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_input;
  int64_t checked_elements = 0;
};

/// Compares the reverse-mode gradient of a scalar function against central
/// finite differences. `loss` must rebuild its graph from the current values of
/// the `wrt` leaves on every call. The error of each input is
/// ||analytic - numeric|| / max(||analytic|| + ||numeric||, floor), reported as
/// the maximum over inputs. `max_elements` > 0 samples that many coordinates per
/// input instead of all of them.
inline GradCheckResult gradcheck(const std::function<Var<double>()>& loss,
                                 const std::vector<Var<double>>& wrt,
                                 std::vector<std::string> names = {}, double h = 1e-5,
                                 int64_t max_elements = 0, uint64_t seed = 0,
                                 double floor = 1e-8) {
  for (auto v : wrt) v.zero_grad();
  {
    Var<double> l = loss();
    l.backward();
  }
  GradCheckResult result;
  std::mt19937_64 rng(seed);
  for (size_t k = 0; k < wrt.size(); ++k) {
    Var<double> v = wrt[k];
    const Tensor<double> analytic =
        v.grad().empty() ? Tensor<double>::zeros(v.shape()) : v.grad();
    std::vector<int64_t> coords(static_cast<size_t>(v.numel()));
    std::iota(coords.begin(), coords.end(), 0);
    if (max_elements > 0 && static_cast<int64_t>(coords.size()) > max_elements) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<size_t>(max_elements));
    }
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    NoGradGuard guard;
    for (const int64_t i : coords) {
      double& x = v.mutable_value()[static_cast<size_t>(i)];
      const double orig = x;
      x = orig + h;
      const double fp = loss().value().item();
      x = orig - h;
      const double fm = loss().value().item();
      x = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[static_cast<size_t>(i)];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
    result.checked_elements += static_cast<int64_t>(coords.size());
    const double rel = std::sqrt(diff2) / std::max(std::sqrt(a2) + std::sqrt(n2), floor);
    if (rel >= result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_input = k < names.size() ? names[k] : "input" + std::to_string(k);
    }
  }
  return result;
}

}  // namespace tatrack::core
