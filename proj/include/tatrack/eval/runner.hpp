#pragma once

#include <vector>

#include "tatrack/eval/metrics.hpp"
#include "tatrack/track/tracker.hpp"

namespace tatrack::eval {

struct TrackRun {
  std::vector<ImageBox> boxes;     // frame 0 holds the initial box
  std::vector<double> confidence;  // frame 0 holds 1
  double seconds = 0;              // time inside the tracker, frame decoding excluded
  int64_t tracked_frames = 0;
};

/// Tracks a whole sequence from its first ground-truth box.
template <typename T>
TrackRun run_sequence(const model::TATrackModel<T>& model, const data::Sequence& seq,
                      const track::TrackerOptions& opts);

SequenceResult score_run(const data::Sequence& seq, const TrackRun& run);

}  // namespace tatrack::eval
