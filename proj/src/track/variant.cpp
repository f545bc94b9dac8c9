#include "tatrack/track/variant.hpp"

#include "tatrack/core/error.hpp"
#include "tatrack/track/ots.hpp"

namespace tatrack::track {

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v{Variant::kRgbOnly, Variant::kPromptBaseline, Variant::kPerFrameUpdate,
                                      Variant::kNoSti, Variant::kFull};
  return v;
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kRgbOnly: return "rgb_only";
    case Variant::kPromptBaseline: return "prompt_baseline";
    case Variant::kPerFrameUpdate: return "per_frame_update";
    case Variant::kNoSti: return "no_sti";
    case Variant::kFull: return "full";
  }
  return "?";
}

std::string variant_label(Variant v) {
  switch (v) {
    case Variant::kRgbOnly: return "(1)";
    case Variant::kPromptBaseline: return "(2)";
    case Variant::kPerFrameUpdate: return "(3)";
    case Variant::kNoSti: return "(4)";
    case Variant::kFull: return "TATrack";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : all_variants()) {
    if (variant_name(v) == name) return v;
  }
  throw ConfigError("unknown variant '" + name + "'");
}

VariantFlags variant_flags(Variant v) {
  switch (v) {
    case Variant::kRgbOnly: return {false, false, false};
    case Variant::kPromptBaseline: return {true, false, false};
    case Variant::kPerFrameUpdate: return {true, true, false};
    case Variant::kNoSti: return {true, false, true};
    case Variant::kFull: return {true, true, true};
  }
  return {false, false, false};
}

model::ModelConfig variant_model(Variant v, const model::BackboneConfig& bb, const std::set<int>& sti_layers) {
  model::ModelConfig cfg;
  cfg.backbone = bb;
  cfg.use_prompts = v != Variant::kRgbOnly;
  cfg.dual_branch = v == Variant::kPerFrameUpdate || v == Variant::kNoSti || v == Variant::kFull;
  if (variant_flags(v).sti) cfg.sti_layers = sti_layers;
  cfg.validate();
  return cfg;
}

int variant_update_interval(Variant v, int ots_interval) {
  switch (v) {
    case Variant::kPerFrameUpdate: return 1;
    case Variant::kNoSti:
    case Variant::kFull: return ots_interval;
    default: return kNeverUpdate;
  }
}

Variant weights_source(Variant v) { return v == Variant::kPerFrameUpdate ? Variant::kFull : v; }

}  // namespace tatrack::track
