#include "tatrack/track/ots.hpp"

#include <string>

#include "tatrack/core/error.hpp"

namespace tatrack::track {

OnlineTemplateSelector::OnlineTemplateSelector(int interval, std::optional<double> confidence_floor)
    : interval_(interval), floor_(confidence_floor) {
  if (interval < 1) throw ConfigError("update interval must be >= 1, got " + std::to_string(interval));
}

void OnlineTemplateSelector::reset() {
  counter_ = 0;
  best_frame_.reset();
  best_score_ = 0.0;
}

OnlineTemplateSelector::Step OnlineTemplateSelector::observe(int64_t frame, double confidence) {
  Step s;
  if (interval_ == kNeverUpdate) return s;
  ++counter_;
  const bool eligible = !floor_ || confidence >= *floor_;
  if (eligible && (!best_frame_ || confidence > best_score_)) {
    best_frame_ = frame;
    best_score_ = confidence;
    s.new_best = true;
  }
  if (counter_ == interval_) {
    if (best_frame_) {
      s.update = true;
      s.chosen_frame = *best_frame_;
      s.chosen_score = best_score_;
    }
    reset();
  }
  return s;
}

}  // namespace tatrack::track
