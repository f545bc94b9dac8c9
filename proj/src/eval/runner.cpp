#include "tatrack/eval/runner.hpp"

#include <chrono>

#include "tatrack/core/error.hpp"

namespace tatrack::eval {

template <typename T>
TrackRun run_sequence(const model::TATrackModel<T>& model, const data::Sequence& seq,
                      const track::TrackerOptions& opts) {
  if (seq.size() < 1) throw InputError("run_sequence: empty sequence " + seq.name);
  using clock = std::chrono::steady_clock;
  track::Tracker<T> tracker(model, opts);
  TrackRun run;
  const data::FramePair first = seq.frame(0);
  auto t0 = clock::now();
  tracker.init(first, seq.groundtruth[0]);
  run.seconds += std::chrono::duration<double>(clock::now() - t0).count();
  run.boxes.push_back(seq.groundtruth[0]);
  run.confidence.push_back(1.0);
  for (int i = 1; i < seq.size(); ++i) {
    const data::FramePair f = seq.frame(i);
    t0 = clock::now();
    const track::TrackResult r = tracker.track(f);
    run.seconds += std::chrono::duration<double>(clock::now() - t0).count();
    run.boxes.push_back(r.box);
    run.confidence.push_back(r.confidence);
    ++run.tracked_frames;
  }
  return run;
}

SequenceResult score_run(const data::Sequence& seq, const TrackRun& run) {
  SequenceResult r;
  r.name = seq.name;
  r.errors = eval_sequence(run.boxes, seq.groundtruth);
  r.attributes = seq.attributes;
  r.seconds = run.seconds;
  r.tracked_frames = run.tracked_frames;
  return r;
}

template TrackRun run_sequence(const model::TATrackModel<float>&, const data::Sequence&,
                               const track::TrackerOptions&);
template TrackRun run_sequence(const model::TATrackModel<double>&, const data::Sequence&,
                               const track::TrackerOptions&);

}  // namespace tatrack::eval
