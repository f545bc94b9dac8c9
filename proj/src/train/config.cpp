#include "tatrack/train/config.hpp"

#include <charconv>

#include "tatrack/core/error.hpp"

namespace tatrack::train {

double TrainConfig::lr_at_epoch(int epoch) const { return epoch > lr_drop_epoch ? lr * lr_drop_factor : lr; }

int TrainConfig::steps_per_epoch() const { return std::max(1, samples_per_epoch / batch_size); }

void TrainConfig::validate() const {
  if (epochs <= 0 || samples_per_epoch <= 0 || batch_size <= 0) {
    throw ConfigError("train: epochs, samples_per_epoch and batch_size must be positive");
  }
  if (!(lr > 0) || !(lr_drop_factor > 0) || weight_decay < 0 || grad_clip < 0) {
    throw ConfigError("train: lr and lr_drop_factor must be positive, decay and clip non-negative");
  }
  if (lr_drop_epoch <= 0 || lr_drop_epoch >= epochs) throw ConfigError("train: need 0 < lr_drop_epoch < epochs");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(eps > 0)) {
    throw ConfigError("train: bad AdamW moments");
  }
  if (max_gap < 1 || initial_window < 1) throw ConfigError("train: max_gap and initial_window must be >= 1");
  if (center_jitter < 0 || scale_jitter < 0 || log_every < 0 || cache_frames < 0) throw ConfigError("train: negative jitter");
}

void TrainConfig::apply(const KeyValues& kv) {
  for (const auto& [k, v] : kv) {
    auto as_int = [&] { return static_cast<int>(parse_int(k, v)); };
    if (k == "epochs") epochs = as_int();
    else if (k == "samples_per_epoch") samples_per_epoch = as_int();
    else if (k == "batch_size") batch_size = as_int();
    else if (k == "lr") lr = parse_double(k, v);
    else if (k == "lr_drop_epoch") lr_drop_epoch = as_int();
    else if (k == "lr_drop_factor") lr_drop_factor = parse_double(k, v);
    else if (k == "weight_decay") weight_decay = parse_double(k, v);
    else if (k == "grad_clip") grad_clip = parse_double(k, v);
    else if (k == "beta1") beta1 = parse_double(k, v);
    else if (k == "beta2") beta2 = parse_double(k, v);
    else if (k == "eps") eps = parse_double(k, v);
    else if (k == "seed") seed = static_cast<uint64_t>(parse_int(k, v));
    else if (k == "max_gap") max_gap = as_int();
    else if (k == "initial_window") initial_window = as_int();
    else if (k == "center_jitter") center_jitter = parse_double(k, v);
    else if (k == "scale_jitter") scale_jitter = parse_double(k, v);
    else if (k == "log_every") log_every = as_int();
    else if (k == "cache_frames") cache_frames = as_int();
    else throw ConfigError("train: unknown key '" + k + "'");
  }
}

KeyValues TrainConfig::to_key_values() const {
  auto num = [](double d) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof(buf), d);
    return std::string(buf, r.ptr);
  };
  return {{"epochs", std::to_string(epochs)},
          {"samples_per_epoch", std::to_string(samples_per_epoch)},
          {"batch_size", std::to_string(batch_size)},
          {"lr", num(lr)},
          {"lr_drop_epoch", std::to_string(lr_drop_epoch)},
          {"lr_drop_factor", num(lr_drop_factor)},
          {"weight_decay", num(weight_decay)},
          {"grad_clip", num(grad_clip)},
          {"beta1", num(beta1)},
          {"beta2", num(beta2)},
          {"eps", num(eps)},
          {"seed", std::to_string(seed)},
          {"max_gap", std::to_string(max_gap)},
          {"initial_window", std::to_string(initial_window)},
          {"center_jitter", num(center_jitter)},
          {"scale_jitter", num(scale_jitter)},
          {"cache_frames", std::to_string(cache_frames)},
          {"log_every", std::to_string(log_every)}};
}

}  // namespace tatrack::train
