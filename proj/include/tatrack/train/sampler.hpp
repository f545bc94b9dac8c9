#pragma once

#include <random>
#include <string>
#include <vector>

#include "tatrack/data/sequence.hpp"
#include "tatrack/model/tatrack_model.hpp"
#include "tatrack/track/crop.hpp"
#include "tatrack/train/config.hpp"

namespace tatrack::train {

/// One training triplet. The online-template surrogate is a ground-truth crop
/// from a frame between the initial and the search frame.
struct SamplePair {
  std::string sequence;
  int initial_frame = 0;
  int online_frame = 0;
  int search_frame = 0;
  track::CroppedPair initial;
  track::CroppedPair online;
  track::CroppedPair search;
  BBox gt;               // normalized search-window coordinates, clipped to [0, 1]
  bool partial = false;  // the unclipped box left the window
};

/// Frame indices only; exposed for property tests. Requires n >= 3.
struct FrameTriplet {
  int initial, online, search;
};
FrameTriplet sample_frames(int n, const TrainConfig& cfg, std::mt19937_64& rng);

/// Picks a sequence with at least 3 frames, then frames and jitter. Throws
/// InputError when no sequence is long enough. Frames come from `cache` when
/// given, otherwise straight from disk.
SamplePair sample_training_pair(const std::vector<data::Sequence>& dataset, const track::CropSpec& crop,
                                const TrainConfig& cfg, std::mt19937_64& rng, data::FrameCache* cache = nullptr);

template <typename T>
struct Batch {
  model::ModelInputs<T> inputs;
  std::vector<BBox> gt;
};

template <typename T>
Batch<T> make_batch(const std::vector<SamplePair>& samples);

}  // namespace tatrack::train
