#pragma once

#include <cstdint>
#include <set>
#include <string>

namespace tatrack::model {

/// Geometry and width of the ViT backbone.
struct BackboneConfig {
  int64_t patch_size = 16;
  int64_t token_dim = 768;
  int64_t depth = 12;
  int64_t num_heads = 12;
  int64_t ffn_ratio = 4;
  int64_t template_side = 128;
  int64_t search_side = 256;

  int64_t template_grid() const { return template_side / patch_size; }
  int64_t search_grid() const { return search_side / patch_size; }
  int64_t template_tokens() const { return template_grid() * template_grid(); }
  int64_t search_tokens() const { return search_grid() * search_grid(); }
  int64_t head_dim() const { return token_dim / num_heads; }

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

/// Which parts of the tracker are present. The five Table-5 style variants are
/// combinations of these flags plus the runtime update interval.
struct ModelConfig {
  BackboneConfig backbone;
  bool use_prompts = true;     // modality prompts (TIR input) on/off
  bool dual_branch = true;     // initial + online branches with fusion
  std::set<int> sti_layers;    // 1-indexed encoder layers preceded by STI
  bool sti_multi_head = false; // false: single-head STI attention

  int64_t sti_heads() const { return sti_multi_head ? backbone.num_heads : 1; }
  void validate() const;
};

/// ViT-B geometry with template 128 / search 256 crops.
BackboneConfig paper_scale_backbone();
/// C=64, L=6, h=4, P=8 with 32 / 64 pixel crops.
BackboneConfig desk_scale_backbone();
/// Smallest profile used for the CPU ablation study: C=32, L=4, h=2, P=8 with
/// 24 / 48 pixel crops.
BackboneConfig ablation_backbone();

/// STI insertion layers for a given depth: {4,7,10} at depth 12, rescaled
/// proportionally (rounded up, deduplicated) for other depths.
std::set<int> default_sti_layers(int64_t depth);

std::string describe(const ModelConfig& cfg);

}  // namespace tatrack::model
