#include "tatrack/model/config.hpp"

#include <cmath>
#include <sstream>

#include "tatrack/core/error.hpp"

namespace tatrack::model {

void BackboneConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("backbone config: " + msg); };
  if (patch_size < 1 || token_dim < 1 || depth < 1 || num_heads < 1 || ffn_ratio < 1) {
    fail("all sizes must be positive");
  }
  if (template_side % patch_size != 0) fail("template_side not divisible by patch_size");
  if (search_side % patch_size != 0) fail("search_side not divisible by patch_size");
  if (token_dim % num_heads != 0) fail("token_dim not divisible by num_heads");
  // The center head halves the width three times.
  if (token_dim % 8 != 0) fail("token_dim must be a multiple of 8");
}

void ModelConfig::validate() const {
  backbone.validate();
  for (const int l : sti_layers) {
    if (l < 1 || l > backbone.depth) {
      throw ConfigError("STI insertion layer " + std::to_string(l) + " outside [1," +
                        std::to_string(backbone.depth) + "]");
    }
  }
  if (!sti_layers.empty() && !dual_branch) {
    throw ConfigError("STI requires the dual-branch model");
  }
}

BackboneConfig paper_scale_backbone() { return BackboneConfig{}; }

BackboneConfig desk_scale_backbone() {
  BackboneConfig c;
  c.patch_size = 8;
  c.token_dim = 64;
  c.depth = 6;
  c.num_heads = 4;
  c.template_side = 32;
  c.search_side = 64;
  return c;
}

BackboneConfig ablation_backbone() {
  BackboneConfig c;
  c.patch_size = 8;
  c.token_dim = 32;
  c.depth = 4;
  c.num_heads = 2;
  c.template_side = 24;
  c.search_side = 48;
  return c;
}

std::set<int> default_sti_layers(int64_t depth) {
  std::set<int> out;
  for (const int l : {4, 7, 10}) {
    const auto scaled = static_cast<int>(std::ceil(static_cast<double>(l) * depth / 12.0 - 1e-9));
    out.insert(std::max(1, std::min<int>(scaled, static_cast<int>(depth))));
  }
  return out;
}

std::string describe(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "C=" << cfg.backbone.token_dim << " L=" << cfg.backbone.depth << " h=" << cfg.backbone.num_heads
     << " P=" << cfg.backbone.patch_size << " z=" << cfg.backbone.template_side
     << " x=" << cfg.backbone.search_side << " prompts=" << cfg.use_prompts
     << " dual=" << cfg.dual_branch << " sti={";
  bool first = true;
  for (const int l : cfg.sti_layers) {
    os << (first ? "" : ",") << l;
    first = false;
  }
  os << "}";
  return os.str();
}

}  // namespace tatrack::model
