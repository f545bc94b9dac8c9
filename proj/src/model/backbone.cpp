#include "tatrack/model/backbone.hpp"

#include <cmath>

#include "tatrack/core/error.hpp"

namespace tatrack::model {

using core::Shape;

template <typename T>
void EncoderLayerWeights<T>::init(std::mt19937_64& rng) {
  ln1.init();
  q.init(rng);
  k.init(rng);
  v.init(rng);
  out.init(rng);
  ln2.init();
  ffn.init(rng);
}

template <typename T>
void EncoderLayerWeights<T>::collect(ParamList<T>& out_params) {
  ln1.collect(out_params);
  q.collect(out_params);
  k.collect(out_params);
  v.collect(out_params);
  out.collect(out_params);
  ln2.collect(out_params);
  ffn.collect(out_params);
}

template <typename T>
Var<T> msa(const Var<T>& x, const Linear<T>& q, const Linear<T>& k, const Linear<T>& v,
           const Linear<T>& out, int64_t heads, std::vector<Tensor<T>>* attn_probs) {
  const Shape in_shape = x.shape();
  if (in_shape.size() < 2) throw DimensionError("msa: expected [.., N, C], got " + core::shape_str(in_shape));
  const int64_t n = in_shape[in_shape.size() - 2];
  const int64_t c = in_shape.back();
  if (heads < 1 || c % heads != 0) throw DimensionError("msa: token dim not divisible by heads");
  const int64_t d = c / heads;
  const int64_t b = x.numel() / (n * c);
  const Var<T> x3 = core::reshape(x, {b, n, c});

  auto split_heads = [&](const Var<T>& t) {
    return core::permute(core::reshape(t, {b, n, heads, d}), {0, 2, 1, 3});  // [B,h,N,d]
  };
  const Var<T> qh = split_heads(q(x3));
  const Var<T> kh = split_heads(k(x3));
  const Var<T> vh = split_heads(v(x3));
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  const Var<T> scores = core::scale(core::matmul(qh, core::transpose(kh, -1, -2)), scale);
  const Var<T> probs = core::softmax_lastdim(scores);
  if (attn_probs) attn_probs->push_back(probs.value());
  const Var<T> ctx = core::reshape(core::permute(core::matmul(probs, vh), {0, 2, 1, 3}), {b, n, c});
  return core::reshape(out(ctx), in_shape);
}

template <typename T>
Var<T> encoder_forward(const Var<T>& x, const EncoderLayerWeights<T>& w, int64_t heads,
                       std::vector<Tensor<T>>* attn_probs) {
  const Var<T> y = core::add(x, msa(w.ln1(x), w, heads, attn_probs));
  return core::add(y, w.ffn(w.ln2(y)));
}

template <typename T>
TokenSequence<T> add_pos(const TokenSequence<T>& seq, const PosEmbed<T>& pe) {
  const int64_t nz = pe.template_pe.shape()[0];
  const int64_t nx = pe.search_pe.shape()[0];
  if (seq.boundary != nz || seq.search_length() != nx) {
    throw DimensionError("add_pos: sequence segments (" + std::to_string(seq.boundary) + "," +
                         std::to_string(seq.search_length()) + ") vs position tables (" +
                         std::to_string(nz) + "," + std::to_string(nx) + ")");
  }
  const Var<T> table = core::concat<T>({pe.template_pe.var(), pe.search_pe.var()}, 0);
  return {core::add(seq.tokens, table), seq.boundary};
}

template <typename T>
Backbone<T>::Backbone(const BackboneConfig& cfg)
    : cfg_(cfg),
      patch_proj_("backbone.patch", 3 * cfg.patch_size * cfg.patch_size, cfg.token_dim),
      norm_("backbone.norm", cfg.token_dim) {
  cfg_.validate();
  pos_.template_pe = Param<T>("backbone.pos.template", Tensor<T>(Shape{cfg.template_tokens(), cfg.token_dim}));
  pos_.search_pe = Param<T>("backbone.pos.search", Tensor<T>(Shape{cfg.search_tokens(), cfg.token_dim}));
  layers_.reserve(static_cast<size_t>(cfg.depth));
  for (int64_t l = 1; l <= cfg.depth; ++l) {
    layers_.emplace_back("backbone.layers." + std::to_string(l), cfg.token_dim, cfg.ffn_ratio);
  }
}

template <typename T>
Var<T> Backbone<T>::patch_embed(const Var<T>& image) const {
  return patch_proj_(core::patchify(image, cfg_.patch_size));
}

template <typename T>
TokenSequence<T> Backbone<T>::embed(const Var<T>& template_image, const Var<T>& search_image) const {
  const Var<T> z = patch_embed(template_image);
  const Var<T> x = patch_embed(search_image);
  if (z.dim(1) != cfg_.template_tokens() || x.dim(1) != cfg_.search_tokens()) {
    throw DimensionError("embed: crop sizes " + core::shape_str(template_image.shape()) + " / " +
                         core::shape_str(search_image.shape()) + " do not match the backbone config");
  }
  TokenSequence<T> seq{core::concat<T>({z, x}, 1), z.dim(1)};
  return add_pos(seq, pos_);
}

template <typename T>
Var<T> Backbone<T>::encode_layer(int layer, const Var<T>& x, std::vector<Tensor<T>>* attn_probs) const {
  if (layer < 1 || layer > cfg_.depth) throw ConfigError("encoder layer index out of range");
  return encoder_forward(x, layers_[static_cast<size_t>(layer - 1)], cfg_.num_heads, attn_probs);
}

template <typename T>
void Backbone<T>::init(std::mt19937_64& rng) {
  patch_proj_.init(rng);
  pos_.template_pe.assign(Tensor<T>::randn(pos_.template_pe.shape(), rng, T(0.02)));
  pos_.search_pe.assign(Tensor<T>::randn(pos_.search_pe.shape(), rng, T(0.02)));
  for (auto& l : layers_) l.init(rng);
  norm_.init();
}

template <typename T>
void Backbone<T>::collect(ParamList<T>& out) {
  patch_proj_.collect(out);
  out.push_back(&pos_.template_pe);
  out.push_back(&pos_.search_pe);
  for (auto& l : layers_) l.collect(out);
  norm_.collect(out);
}

#define TATRACK_INSTANTIATE(T)                                                                      \
  template struct EncoderLayerWeights<T>;                                                           \
  template class Backbone<T>;                                                                       \
  template Var<T> msa(const Var<T>&, const Linear<T>&, const Linear<T>&, const Linear<T>&,          \
                      const Linear<T>&, int64_t, std::vector<Tensor<T>>*);                          \
  template Var<T> encoder_forward(const Var<T>&, const EncoderLayerWeights<T>&, int64_t,            \
                                  std::vector<Tensor<T>>*);                                         \
  template TokenSequence<T> add_pos(const TokenSequence<T>&, const PosEmbed<T>&);

TATRACK_INSTANTIATE(float)
TATRACK_INSTANTIATE(double)
#undef TATRACK_INSTANTIATE

}  // namespace tatrack::model
