#pragma once

#include <set>
#include <string>
#include <vector>

#include "tatrack/model/config.hpp"

namespace tatrack::track {

/// Component-analysis variants. Numbering follows the ablation table:
/// 1 RGB-only base tracker, 2 modality prompts on a single branch, 3 dual
/// branch with STI but the online template replaced every frame, 4 dual
/// branch with OTS and no STI, and the full tracker.
enum class Variant { kRgbOnly, kPromptBaseline, kPerFrameUpdate, kNoSti, kFull };

struct VariantFlags {
  bool mcp;
  bool sti;
  bool ots;
};

const std::vector<Variant>& all_variants();
std::string variant_name(Variant v);    // rgb_only, prompt_baseline, ...
std::string variant_label(Variant v);   // "(1)".."(4)", "TATrack"
Variant parse_variant(const std::string& name);
VariantFlags variant_flags(Variant v);

/// Network layout for a variant. `sti_layers` is used by variants with STI.
model::ModelConfig variant_model(Variant v, const model::BackboneConfig& bb, const std::set<int>& sti_layers);
/// Runtime update interval: 1 for per-frame update, 50 with OTS, never otherwise.
int variant_update_interval(Variant v, int ots_interval = 50);
/// Variants that share trained weights: per-frame update reuses the full model.
Variant weights_source(Variant v);

}  // namespace tatrack::track
