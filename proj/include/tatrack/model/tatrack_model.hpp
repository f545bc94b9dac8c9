#pragma once

#include <map>
#include <memory>
#include <optional>

#include "tatrack/core/box.hpp"
#include "tatrack/model/backbone.hpp"
#include "tatrack/model/config.hpp"
#include "tatrack/model/head.hpp"
#include "tatrack/model/mcp.hpp"
#include "tatrack/model/sti.hpp"

namespace tatrack::model {

/// Aligned RGB / TIR crops, each [B,3,H,W], already normalized.
template <typename T>
struct ImagePair {
  Var<T> rgb;
  Var<T> tir;
};

template <typename T>
struct ModelInputs {
  ImagePair<T> initial_template;
  ImagePair<T> online_template;  // ignored by single-branch variants
  ImagePair<T> search;
};

/// Conv(1x1, 2C -> C) + BN + ReLU over the channel-concatenated search features.
template <typename T>
struct FusionWeights {
  Param<T> w, b;
  BatchNorm<T> bn;

  explicit FusionWeights(int64_t c)
      : w("fusion.conv.w", Tensor<T>(Shape{c, 2 * c})), b("fusion.conv.b", Tensor<T>(Shape{c})),
        bn("fusion.bn", c) {}
  void init(std::mt19937_64& rng) {
    xavier_uniform(w, w.shape()[1], w.shape()[0], rng);
    fill(b, T(0));
    bn.init();
  }
  void collect(ParamList<T>& out) {
    out.push_back(&w);
    out.push_back(&b);
    bn.collect(out);
  }
};

/// The full tracker network. Depending on ModelConfig it is the RGB-only base
/// tracker, the single-branch prompt baseline or the dual-branch model with STI.
template <typename T>
class TATrackModel {
 public:
  explicit TATrackModel(const ModelConfig& cfg);
  TATrackModel(const TATrackModel&) = delete;
  TATrackModel& operator=(const TATrackModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  int64_t score_side() const { return cfg_.backbone.search_grid(); }

  /// Random init of every parameter (pretraining start).
  void init(uint64_t seed);
  /// Xavier-uniform re-init of the prompt-learning parameters: prompters, STI
  /// blocks and the fusion layer.
  void init_prompt_params(uint64_t seed);
  /// Backbone and head frozen; prompters, STI and fusion trainable. While
  /// frozen the head's batch norms run on their stored statistics even in
  /// training mode, so the inherited tracker stays bit-identical.
  void freeze_base();
  bool base_frozen() const { return base_frozen_; }
  void set_all_trainable();

  ParamList<T> parameters();
  /// Backbone + head, the parameters inherited from the base tracker.
  ParamList<T> base_parameters();
  ParamList<T> prompt_parameters();

  HeadOutputs<T> forward(const ModelInputs<T>& in, bool training) const;

  /// Embeds one branch: H^0_r from RGB and, with prompts, P^0 = H^0_t from TIR.
  BranchState<T> start_branch(const ImagePair<T>& tpl, const ImagePair<T>& search,
                              TemplateKind which) const;
  /// Advances a branch by one encoder layer: prompt update, injection, encoder.
  void step_branch(BranchState<T>& b) const;
  /// Final norm, search segment, folded to [B,C,S,S].
  Var<T> search_map(const BranchState<T>& b) const;

  HeadOutputs<T> single_forward(const ImagePair<T>& tpl, const ImagePair<T>& search, bool training) const;
  HeadOutputs<T> dual_forward(const ImagePair<T>& initial_tpl, const ImagePair<T>& online_tpl,
                              const ImagePair<T>& search, bool training) const;

  Backbone<T>& backbone() { return backbone_; }
  CenterHead<T>& head() { return head_; }
  const std::map<int, StiWeights<T>>& sti() const { return sti_; }
  Mcp<T>* mcp(TemplateKind which);
  const Mcp<T>* mcp(TemplateKind which) const;
  std::map<int, StiWeights<T>>& sti() { return sti_; }
  FusionWeights<T>* fusion() { return fusion_ ? &*fusion_ : nullptr; }

 private:
  ModelConfig cfg_;
  Backbone<T> backbone_;
  CenterHead<T> head_;
  std::optional<Mcp<T>> mcp_initial_;
  std::optional<Mcp<T>> mcp_online_;
  std::map<int, StiWeights<T>> sti_;
  std::optional<FusionWeights<T>> fusion_;
  bool base_frozen_ = false;
};

struct DecodedBox {
  BBox box;           // normalized search-region coordinates
  double confidence;  // score at the argmax cell
  int64_t row;
  int64_t col;
};

/// Box at the score argmax: cx = (j + offset_x)/S, cy = (i + offset_y)/S,
/// (w, h) = size[:, i, j]. Maps are [1,S,S] / [2,S,S] (or with a leading B=1).
template <typename T>
DecodedBox decode_box(const Tensor<T>& score, const Tensor<T>& offset, const Tensor<T>& size);

/// Decodes the box the head predicts at a given cell (used for regression losses).
template <typename T>
Var<T> boxes_at_cells(const HeadOutputs<T>& out, const std::vector<int64_t>& flat_cells);

}  // namespace tatrack::model
