#pragma once

#include <cstdint>
#include <limits>
#include <optional>

namespace tatrack::track {

/// Interval value meaning "never replace the online template".
inline constexpr int kNeverUpdate = std::numeric_limits<int>::max();

/// Online template selection as a pure state machine. Every tracked frame
/// reports its confidence; when `interval` frames have been seen, the frame
/// with the highest confidence in that window (earliest on ties) becomes the
/// new online template and the window restarts.
class OnlineTemplateSelector {
 public:
  struct Step {
    bool new_best = false;     // this frame is the current window's best candidate
    bool update = false;       // the window closed and a candidate was chosen
    int64_t chosen_frame = -1; // valid when update
    double chosen_score = 0.0;
  };

  explicit OnlineTemplateSelector(int interval = 50, std::optional<double> confidence_floor = std::nullopt);

  Step observe(int64_t frame, double confidence);
  void reset();

  int interval() const { return interval_; }
  int frames_since_update() const { return counter_; }
  std::optional<int64_t> best_frame() const { return best_frame_; }
  double best_score() const { return best_score_; }

 private:
  int interval_;
  std::optional<double> floor_;
  int counter_ = 0;
  std::optional<int64_t> best_frame_;
  double best_score_ = 0.0;
};

}  // namespace tatrack::track
