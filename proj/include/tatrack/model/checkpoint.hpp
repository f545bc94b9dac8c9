#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "tatrack/model/tatrack_model.hpp"

namespace tatrack::model {

// A checkpoint is a directory holding `manifest.txt` and `weights.bin`.
// The manifest starts with a version line and the model config, then one line
// per parameter: `param <name> f32 <d0xd1x..> <byte offset> <trainable 0/1>`.
// The blob is the parameters' little-endian float32 values in manifest order.

std::string config_to_line(const ModelConfig& cfg);
/// Throws ConfigError on unknown keys or malformed values.
ModelConfig config_from_line(const std::string& line);

template <typename T>
void save_checkpoint(TATrackModel<T>& model, const std::filesystem::path& dir);

/// Reads the stored config; LoadError when the manifest is missing or malformed.
ModelConfig read_checkpoint_config(const std::filesystem::path& dir);

/// Constructs a model from the stored config and loads every parameter.
template <typename T>
std::unique_ptr<TATrackModel<T>> load_checkpoint(const std::filesystem::path& dir);

/// Loads into an existing model. With `base_only` only backbone and head
/// parameters are required and read (used to start fine-tuning from a
/// pretrained base tracker); otherwise the checkpoint must list exactly the
/// model's parameters. Any shape mismatch, missing entry or short blob throws
/// LoadError and leaves the model untouched.
template <typename T>
void load_into(TATrackModel<T>& model, const std::filesystem::path& dir, bool base_only = false);

}  // namespace tatrack::model
