#include "tatrack/model/mcp.hpp"

#include <cmath>

#include "tatrack/core/error.hpp"

namespace tatrack::model {

using core::Shape;

template <typename T>
McpLayerWeights<T>::McpLayerWeights(const std::string& name, int64_t c)
    : down_prompt_w(name + ".down_prompt.w", Tensor<T>(Shape{kPromptBottleneck, c})),
      down_prompt_b(name + ".down_prompt.b", Tensor<T>(Shape{kPromptBottleneck})),
      down_stream_w(name + ".down_stream.w", Tensor<T>(Shape{kPromptBottleneck, c})),
      down_stream_b(name + ".down_stream.b", Tensor<T>(Shape{kPromptBottleneck})),
      up_w(name + ".up.w", Tensor<T>(Shape{c, kPromptBottleneck})),
      up_b(name + ".up.b", Tensor<T>(Shape{c})) {}

template <typename T>
void McpLayerWeights<T>::init(std::mt19937_64& rng) {
  const int64_t c = up_w.shape()[0];
  xavier_uniform(down_prompt_w, c, kPromptBottleneck, rng);
  xavier_uniform(down_stream_w, c, kPromptBottleneck, rng);
  xavier_uniform(up_w, kPromptBottleneck, c, rng);
  fill(down_prompt_b, T(0));
  fill(down_stream_b, T(0));
  fill(up_b, T(0));
}

template <typename T>
void McpLayerWeights<T>::zero() {
  for (auto* p : {&down_prompt_w, &down_prompt_b, &down_stream_w, &down_stream_b, &up_w, &up_b}) {
    fill(*p, T(0));
  }
}

template <typename T>
void McpLayerWeights<T>::collect(ParamList<T>& out) {
  for (auto* p : {&down_prompt_w, &down_prompt_b, &down_stream_w, &down_stream_b, &up_w, &up_b}) {
    out.push_back(p);
  }
}

template <typename T>
Var<T> fovea(const Var<T>& map) {
  const Shape s = map.shape();
  if (s.size() < 3) throw DimensionError("fovea: expected [.., c, H, W], got " + core::shape_str(s));
  const int64_t hw = s[s.size() - 1] * s[s.size() - 2];
  const Var<T> flat = core::reshape(map, {map.numel() / hw, hw});
  const Var<T> weights = core::softmax_lastdim(flat);
  return core::reshape(core::scale(core::mul(flat, weights), static_cast<T>(hw)), s);
}

SegmentGrids SegmentGrids::from_token_counts(int64_t template_tokens, int64_t search_tokens) {
  auto side = [](int64_t n, const char* what) {
    const auto r = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(n))));
    if (r * r != n) {
      throw ConfigError(std::string("prompter: ") + what + " segment has " + std::to_string(n) +
                        " tokens, which is not a square grid");
    }
    return r;
  };
  return {side(template_tokens, "template"), side(search_tokens, "search")};
}

namespace {

// tokens [B, n, C] -> map [B, C, g, g] -> ... -> tokens [B, n, C]
template <typename T>
Var<T> segment_prompt(const Var<T>& prompt_tokens, const Var<T>& stream_tokens,
                      const McpLayerWeights<T>& w, int64_t grid) {
  const int64_t b = prompt_tokens.dim(0), n = prompt_tokens.dim(1), c = prompt_tokens.dim(2);
  auto to_map = [&](const Var<T>& t) { return core::reshape(core::transpose(t, 1, 2), {b, c, grid, grid}); };
  const Var<T> p = core::conv1x1(to_map(prompt_tokens), w.down_prompt_w.var(), w.down_prompt_b.var());
  const Var<T> s = core::conv1x1(to_map(stream_tokens), w.down_stream_w.var(), w.down_stream_b.var());
  const Var<T> mixed = core::add(fovea(s), p);
  const Var<T> up = core::conv1x1(mixed, w.up_w.var(), w.up_b.var());
  return core::transpose(core::reshape(up, {b, c, n}), 1, 2);
}

}  // namespace

template <typename T>
PromptState<T> mcp_forward(const PromptState<T>& prompt, const TokenSequence<T>& stream,
                           const McpLayerWeights<T>& w, const SegmentGrids& grids) {
  if (prompt.tokens.shape() != stream.tokens.shape() || prompt.boundary != stream.boundary) {
    throw DimensionError("mcp_forward: prompt " + core::shape_str(prompt.tokens.shape()) + " / boundary " +
                         std::to_string(prompt.boundary) + " vs stream " +
                         core::shape_str(stream.tokens.shape()) + " / boundary " +
                         std::to_string(stream.boundary));
  }
  const int64_t nz = grids.template_side * grids.template_side;
  const int64_t nx = grids.search_side * grids.search_side;
  if (prompt.boundary != nz || stream.search_length() != nx) {
    throw DimensionError("mcp_forward: segments do not match the prompter grids");
  }
  auto ps = core::split(prompt.tokens, 1, {nz, nx});
  auto ss = core::split(stream.tokens, 1, {nz, nx});
  const Var<T> z = segment_prompt(ps[0], ss[0], w, grids.template_side);
  const Var<T> x = segment_prompt(ps[1], ss[1], w, grids.search_side);
  return {core::concat<T>({z, x}, 1), prompt.boundary};
}

template <typename T>
TokenSequence<T> inject(const TokenSequence<T>& stream, const PromptState<T>& prompt) {
  if (stream.tokens.shape() != prompt.tokens.shape() || stream.boundary != prompt.boundary) {
    throw DimensionError("inject: stream " + core::shape_str(stream.tokens.shape()) + " vs prompt " +
                         core::shape_str(prompt.tokens.shape()));
  }
  return {core::add(stream.tokens, prompt.tokens), stream.boundary};
}

template <typename T>
Mcp<T>::Mcp(const std::string& name, const BackboneConfig& cfg)
    : grids_(SegmentGrids::from_token_counts(cfg.template_tokens(), cfg.search_tokens())) {
  layers_.reserve(static_cast<size_t>(cfg.depth));
  for (int64_t l = 1; l <= cfg.depth; ++l) layers_.emplace_back(name + "." + std::to_string(l), cfg.token_dim);
}

template <typename T>
void Mcp<T>::init(std::mt19937_64& rng) {
  for (auto& l : layers_) l.init(rng);
}

template <typename T>
void Mcp<T>::zero() {
  for (auto& l : layers_) l.zero();
}

template <typename T>
void Mcp<T>::collect(ParamList<T>& out) {
  for (auto& l : layers_) l.collect(out);
}

#define TATRACK_INSTANTIATE(T)                                                                      \
  template struct McpLayerWeights<T>;                                                               \
  template class Mcp<T>;                                                                            \
  template Var<T> fovea(const Var<T>&);                                                             \
  template PromptState<T> mcp_forward(const PromptState<T>&, const TokenSequence<T>&,              \
                                      const McpLayerWeights<T>&, const SegmentGrids&);             \
  template TokenSequence<T> inject(const TokenSequence<T>&, const PromptState<T>&);

TATRACK_INSTANTIATE(float)
TATRACK_INSTANTIATE(double)
#undef TATRACK_INSTANTIATE

}  // namespace tatrack::model
