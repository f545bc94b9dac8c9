#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tatrack/data/sequence.hpp"
#include "tatrack/model/tatrack_model.hpp"
#include "tatrack/train/config.hpp"
#include "tatrack/train/losses.hpp"

namespace tatrack::train {

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double loss = 0;  // mean total loss over the epoch's steps
  double cls = 0;
  double iou = 0;
  double l1 = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::vector<std::string> dead_params;  // trainable, but never saw a nonzero gradient
  std::string frozen_hash_before;        // SHA-256 of backbone + head, finetuning only
  std::string frozen_hash_after;
  int64_t steps = 0;
  double seconds = 0;
};

/// Hex SHA-256 over names, shapes and raw bytes of the given parameters.
template <typename T>
std::string parameter_hash(const std::vector<core::Param<T>*>& params);

/// Optimizes the model's currently trainable parameters on pairs sampled from
/// `dataset`. One log record per `log_every` steps (or per epoch) goes to
/// `log`. NumericalError (with the seed) when the loss or a gradient turns
/// non-finite.
template <typename T>
TrainReport train_model(model::TATrackModel<T>& model, const std::vector<data::Sequence>& dataset,
                        const TrainConfig& cfg, std::ostream* log = nullptr);

/// Trains a single-branch tracker without prompts from scratch: the stand-in
/// for the pretrained base tracker whose weights the prompt model inherits.
template <typename T>
TrainReport pretrain_base(model::TATrackModel<T>& model, const std::vector<data::Sequence>& dataset,
                          const TrainConfig& cfg, std::ostream* log = nullptr);

/// Loads backbone + head from `base_checkpoint`, re-initializes prompters,
/// STI and fusion (Xavier uniform), freezes the base and trains the rest.
template <typename T>
TrainReport finetune_tatrack(model::TATrackModel<T>& model, const std::filesystem::path& base_checkpoint,
                             const std::vector<data::Sequence>& dataset, const TrainConfig& cfg,
                             std::ostream* log = nullptr);

}  // namespace tatrack::train
