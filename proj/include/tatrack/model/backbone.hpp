#pragma once

#include <vector>

#include "tatrack/model/config.hpp"
#include "tatrack/model/layers.hpp"

namespace tatrack::model {

/// Tokens [B, N, C] whose first `boundary` tokens are the template segment and
/// the rest the search segment.
template <typename T>
struct TokenSequence {
  Var<T> tokens;
  int64_t boundary = 0;

  int64_t length() const { return tokens.dim(-2); }
  int64_t search_length() const { return length() - boundary; }
};

/// Weights of one pre-norm transformer encoder layer.
template <typename T>
struct EncoderLayerWeights {
  LayerNorm<T> ln1;
  Linear<T> q, k, v, out;
  LayerNorm<T> ln2;
  FeedForward<T> ffn;

  EncoderLayerWeights() = default;
  EncoderLayerWeights(const std::string& name, int64_t c, int64_t ffn_ratio)
      : ln1(name + ".ln1", c), q(name + ".attn.q", c, c), k(name + ".attn.k", c, c),
        v(name + ".attn.v", c, c), out(name + ".attn.out", c, c), ln2(name + ".ln2", c),
        ffn(name + ".ffn", c, ffn_ratio) {}

  void init(std::mt19937_64& rng);
  void collect(ParamList<T>& out_params);
};

/// Learnable 1D position embeddings; one table per segment, shared by the RGB
/// and TIR streams and by the initial and online templates.
template <typename T>
struct PosEmbed {
  Param<T> template_pe;
  Param<T> search_pe;
};

/// Multi-head self-attention over x[.., N, C] with per-head 1/sqrt(C/h)
/// scaling. When `attn_probs` is non-null the [B, h, N, N] probabilities are
/// appended to it.
template <typename T>
Var<T> msa(const Var<T>& x, const Linear<T>& q, const Linear<T>& k, const Linear<T>& v,
           const Linear<T>& out, int64_t heads, std::vector<Tensor<T>>* attn_probs = nullptr);

template <typename T>
Var<T> msa(const Var<T>& x, const EncoderLayerWeights<T>& w, int64_t heads,
           std::vector<Tensor<T>>* attn_probs = nullptr) {
  return msa(x, w.q, w.k, w.v, w.out, heads, attn_probs);
}

/// x + MSA(LN1(x)), then + FFN(LN2(.)).
template <typename T>
Var<T> encoder_forward(const Var<T>& x, const EncoderLayerWeights<T>& w, int64_t heads,
                       std::vector<Tensor<T>>* attn_probs = nullptr);

/// Adds template_pe to the template segment and search_pe to the search one.
template <typename T>
TokenSequence<T> add_pos(const TokenSequence<T>& seq, const PosEmbed<T>& pe);

/// Patch embedding, position embeddings, encoder stack and the final norm.
template <typename T>
class Backbone {
 public:
  explicit Backbone(const BackboneConfig& cfg);

  const BackboneConfig& config() const { return cfg_; }

  /// image[B,3,H,W] -> tokens [B, HW/P^2, C].
  Var<T> patch_embed(const Var<T>& image) const;

  /// Embeds a template/search image pair of one modality into H^0.
  TokenSequence<T> embed(const Var<T>& template_image, const Var<T>& search_image) const;

  Var<T> encode_layer(int layer, const Var<T>& x, std::vector<Tensor<T>>* attn_probs = nullptr) const;
  Var<T> final_norm(const Var<T>& x) const { return norm_(x); }

  const PosEmbed<T>& pos_embed() const { return pos_; }
  EncoderLayerWeights<T>& layer(int l) { return layers_.at(static_cast<size_t>(l - 1)); }

  void init(std::mt19937_64& rng);
  void collect(ParamList<T>& out);

 private:
  BackboneConfig cfg_;
  Linear<T> patch_proj_;
  PosEmbed<T> pos_;
  std::vector<EncoderLayerWeights<T>> layers_;
  LayerNorm<T> norm_;
};

}  // namespace tatrack::model
