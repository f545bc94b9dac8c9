#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "tatrack/data/sequence.hpp"

namespace tatrack::data {

enum class EventKind {
  kRgbBlackout,       // visible channel goes dark, target stays warm in thermal (LI)
  kTirCrossover,      // target matches the thermal background, visible unchanged (TC)
  kOcclusion,         // occluder covers part of the target in both modalities (PO)
  kDeformation,       // target colours and aspect ratio drift to a new, persistent look (DEF)
  kSimilarDistractor  // a decoy with the target's original look follows it (SA)
};

std::string attribute_code(EventKind kind);
/// Accepts both the attribute code (LI, TC, PO, DEF, SA) and the long names
/// (rgb_blackout, tir_crossover, occlusion, deformation, similar_distractor).
EventKind parse_event_kind(const std::string& text);

/// Frames [start, end).
struct SynthEvent {
  EventKind kind = EventKind::kRgbBlackout;
  int start = 0;
  int end = 0;
};

struct SynthConfig {
  std::string name = "synth";
  int frames = 200;
  int width = 128;
  int height = 128;
  double target_min_side = 16.0;  // initial target sides drawn from [min, max]
  double target_max_side = 24.0;
  double max_speed = 1.2;         // pixels per frame
  double scale_drift = 0.004;     // std of the per-frame log-scale step
  int distractors = 2;
  double noise = 4.0;             // per-pixel Gaussian noise, 8-bit units
  std::vector<SynthEvent> events;
  uint64_t seed = 0;

  /// Throws ConfigError on non-positive sizes or spans outside [0, frames).
  void validate() const;
};

/// Frames, exact ground truth and attribute spans, before they touch the disk.
struct SynthSequence {
  std::vector<FramePair> frames;
  std::vector<ImageBox> groundtruth;
  std::vector<AttributeSpan> spans;
};

SynthSequence render_synthetic(const SynthConfig& cfg);

/// Renders and writes the sequence to `dir`, then loads it back.
Sequence generate_synthetic(const SynthConfig& cfg, const std::filesystem::path& dir);

/// Event layout used for the RGBT experiments: an early deformation, a
/// mid-sequence visible blackout, a late similar-looking decoy, and optional
/// occlusion / thermal crossover spans. Positions scale with `frames`.
std::vector<SynthEvent> random_event_schedule(int frames, std::mt19937_64& rng);

/// Writes `count` sequences named <prefix>_NNN under `root`. With
/// `with_events` each sequence gets random_event_schedule(), otherwise none.
std::vector<Sequence> generate_dataset(const std::filesystem::path& root, int count, const SynthConfig& base,
                                       uint64_t seed, bool with_events, const std::string& prefix = "seq");

}  // namespace tatrack::data
