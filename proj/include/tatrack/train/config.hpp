#pragma once

#include <cstdint>
#include <string>

#include "tatrack/core/kvconfig.hpp"

namespace tatrack::train {

struct TrainConfig {
  int epochs = 25;
  int samples_per_epoch = 256;
  int batch_size = 16;
  double lr = 1e-4;
  int lr_drop_epoch = 10;        // epochs after this one use lr * lr_drop_factor
  double lr_drop_factor = 0.1;
  double weight_decay = 1e-4;
  double grad_clip = 0.1;        // global L2 norm; 0 disables clipping
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  uint64_t seed = 0;

  // Pair sampling.
  int max_gap = 50;              // online surrogate at most this many frames before the search frame
  int initial_window = 10;       // initial template drawn from the first frames of a sequence
  double center_jitter = 0.5;    // search-window shift, fraction of sqrt(w*h) per axis
  double scale_jitter = 0.15;    // search-window scale exp(U(-s, s))

  int cache_frames = 8192;       // decoded frame pairs kept in memory
  int log_every = 0;             // steps between log records; 0 logs once per epoch

  /// Learning rate for a 1-indexed epoch.
  double lr_at_epoch(int epoch) const;
  int steps_per_epoch() const;
  void validate() const;

  /// Unknown keys throw ConfigError.
  void apply(const KeyValues& kv);
  KeyValues to_key_values() const;
};

}  // namespace tatrack::train
