#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tatrack/eval/metrics.hpp"
#include "tatrack/model/tatrack_model.hpp"
#include "tatrack/track/variant.hpp"

namespace tatrack::eval {

struct AblationRow {
  track::Variant variant = track::Variant::kFull;
  std::filesystem::path checkpoint;               // empty when the variant had none
  std::optional<MetricsReport> overall;           // absent without a checkpoint
  std::map<std::string, MetricsReport> by_attribute;
  std::vector<SequenceResult> sequences;
};

/// Runs every component variant over `test`. Checkpoints are looked up by the
/// variant's weight source, so the per-frame-update row reuses the full
/// model. Variants without a checkpoint come back with `overall` empty.
std::vector<AblationRow> run_component_ablation(const std::map<track::Variant, std::filesystem::path>& checkpoints,
                                                const std::vector<data::Sequence>& test, int ots_interval = 50);

/// Insertion sets {}, {4}, {4,7}, {4,7,10} rescaled to `depth`.
std::vector<std::set<int>> default_sweep_sets(int64_t depth);

struct SweepRow {
  std::set<int> layers;
  std::filesystem::path checkpoint;
  std::optional<MetricsReport> overall;  // only with a checkpoint for this layout
  double fps = 0;                        // always measured
};

/// STI insertion sweep at a fixed backbone. Rows with a checkpoint are scored
/// on `test`. Speed is timed for every row on the first test sequence with
/// freshly initialized weights (speed does not depend on their values):
/// `repeats` passes interleaved frame by frame, fastest timing per frame.
std::vector<SweepRow> run_sti_sweep(const model::BackboneConfig& bb, const std::vector<std::set<int>>& sets,
                                    const std::map<std::set<int>, std::filesystem::path>& checkpoints,
                                    const std::vector<data::Sequence>& test, int repeats = 3);

/// Tracking speed of several models on the same preloaded frames. Models take
/// turns frame by frame and each frame keeps its fastest timing over
/// `repeats` passes, which damps scheduler noise on a shared machine.
template <typename T>
std::vector<double> interleaved_fps(const std::vector<const model::TATrackModel<T>*>& models,
                                    const data::Sequence& seq, int repeats, int max_frames = 0);

std::string format_layers(const std::set<int>& layers);
std::string format_component_table(const std::vector<AblationRow>& rows);
std::string format_sweep_table(const std::vector<SweepRow>& rows);

}  // namespace tatrack::eval
