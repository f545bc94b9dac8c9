#include "tatrack/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>

#include <openssl/evp.h>

#include "tatrack/core/error.hpp"
#include "tatrack/model/checkpoint.hpp"
#include "tatrack/track/variant.hpp"
#include "tatrack/train/optimizer.hpp"
#include "tatrack/train/sampler.hpp"

namespace tatrack::train {

template <typename T>
std::string parameter_hash(const std::vector<core::Param<T>*>& params) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw UsageError("parameter_hash: SHA-256 unavailable");
  }
  for (const auto* p : params) {
    const std::string head = p->name() + ":" + core::shape_str(p->shape()) + ";";
    EVP_DigestUpdate(ctx, head.data(), head.size());
    EVP_DigestUpdate(ctx, p->value().raw(), static_cast<size_t>(p->numel()) * sizeof(T));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

template <typename T>
TrainReport train_model(model::TATrackModel<T>& model, const std::vector<data::Sequence>& dataset,
                        const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto& bb = model.config().backbone;
  track::CropSpec crop;
  crop.template_side = static_cast<int>(bb.template_side);
  crop.search_side = static_cast<int>(bb.search_side);

  const auto params = model.parameters();
  std::set<const core::Param<T>*> seen_grad;
  AdamW<T> opt(cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
  std::mt19937_64 rng(cfg.seed ^ 0x243f6a8885a308d3ULL);
  data::FrameCache cache(static_cast<size_t>(cfg.cache_frames));
  TrainReport report;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at_epoch(epoch);
    EpochRecord rec{epoch, lr, 0, 0, 0, 0};
    double win_loss = 0, win_cls = 0, win_iou = 0, win_l1 = 0;
    int win_steps = 0;
    const int steps = cfg.steps_per_epoch();
    for (int step = 1; step <= steps; ++step) {
      std::vector<SamplePair> samples;
      samples.reserve(static_cast<size_t>(cfg.batch_size));
      for (int b = 0; b < cfg.batch_size; ++b) samples.push_back(sample_training_pair(dataset, crop, cfg, rng, &cache));
      const Batch<T> batch = make_batch<T>(samples);

      zero_grads(params);
      const auto out = model.forward(batch.inputs, true);
      const auto terms = loss::tracking_loss(out, batch.gt);
      const double total = static_cast<double>(terms.total.value().item());
      if (!std::isfinite(total)) {
        throw NumericalError("training diverged (non-finite loss) at epoch " + std::to_string(epoch) + " step " +
                             std::to_string(step) + ", seed " + std::to_string(cfg.seed));
      }
      terms.total.backward();
      for (const auto* p : params) {
        if (!p->trainable() || seen_grad.count(p)) continue;
        for (T g : p->grad().data()) {
          if (g != T(0)) {
            seen_grad.insert(p);
            break;
          }
        }
      }
      clip_grad_norm(params, cfg.grad_clip);
      try {
        opt.step(params, lr);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " (seed " + std::to_string(cfg.seed) + ")");
      }
      ++report.steps;

      const double c = static_cast<double>(terms.cls.value().item());
      const double i = static_cast<double>(terms.iou.value().item());
      const double l = static_cast<double>(terms.l1.value().item());
      rec.loss += total;
      rec.cls += c;
      rec.iou += i;
      rec.l1 += l;
      win_loss += total, win_cls += c, win_iou += i, win_l1 += l, ++win_steps;
      const bool emit = cfg.log_every > 0 ? (report.steps % cfg.log_every == 0) : (step == steps);
      if (log && emit) {
        *log << "epoch=" << epoch << " step=" << report.steps << " lr=" << lr << " loss=" << win_loss / win_steps
             << " cls=" << win_cls / win_steps << " iou=" << win_iou / win_steps << " l1=" << win_l1 / win_steps
             << "\n";
        log->flush();
        win_loss = win_cls = win_iou = win_l1 = 0;
        win_steps = 0;
      }
    }
    rec.loss /= steps;
    rec.cls /= steps;
    rec.iou /= steps;
    rec.l1 /= steps;
    report.epochs.push_back(rec);
  }
  for (const auto* p : params) {
    if (p->trainable() && !seen_grad.count(p)) report.dead_params.push_back(p->name());
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

template <typename T>
TrainReport pretrain_base(model::TATrackModel<T>& model, const std::vector<data::Sequence>& dataset,
                          const TrainConfig& cfg, std::ostream* log) {
  if (model.config().use_prompts || model.config().dual_branch) {
    throw ConfigError("pretrain_base expects the single-branch RGB-only configuration");
  }
  model.init(cfg.seed);
  model.set_all_trainable();
  return train_model(model, dataset, cfg, log);
}

template <typename T>
TrainReport finetune_tatrack(model::TATrackModel<T>& model, const std::filesystem::path& base_checkpoint,
                             const std::vector<data::Sequence>& dataset, const TrainConfig& cfg,
                             std::ostream* log) {
  if (!model.config().use_prompts) throw ConfigError("finetune_tatrack: model has nothing to tune");
  model::load_into(model, base_checkpoint, /*base_only=*/true);
  model.init_prompt_params(cfg.seed ^ 0x13198a2e03707344ULL);
  model.freeze_base();
  const std::string before = parameter_hash(model.base_parameters());
  TrainReport r = train_model(model, dataset, cfg, log);
  r.frozen_hash_before = before;
  r.frozen_hash_after = parameter_hash(model.base_parameters());
  return r;
}

#define TATRACK_INSTANTIATE(T)                                                                              \
  template std::string parameter_hash(const std::vector<core::Param<T>*>&);                                 \
  template TrainReport train_model(model::TATrackModel<T>&, const std::vector<data::Sequence>&,            \
                                   const TrainConfig&, std::ostream*);                                      \
  template TrainReport pretrain_base(model::TATrackModel<T>&, const std::vector<data::Sequence>&,          \
                                     const TrainConfig&, std::ostream*);                                    \
  template TrainReport finetune_tatrack(model::TATrackModel<T>&, const std::filesystem::path&,             \
                                        const std::vector<data::Sequence>&, const TrainConfig&, std::ostream*);

TATRACK_INSTANTIATE(float)
TATRACK_INSTANTIATE(double)
#undef TATRACK_INSTANTIATE

}  // namespace tatrack::train
