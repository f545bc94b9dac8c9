#pragma once

#include <vector>

#include "tatrack/model/backbone.hpp"

namespace tatrack::model {

/// Channel width of the prompter bottleneck.
inline constexpr int64_t kPromptBottleneck = 8;

/// Prompt tokens P^l, aligned token-for-token with the fused stream.
template <typename T>
struct PromptState {
  Var<T> tokens;
  int64_t boundary = 0;
};

/// One prompter: two 1x1 down-projections (prompt path, stream path) to 8
/// channels and a 1x1 up-projection back to C. Weights are shared by the
/// template and search segments.
template <typename T>
struct McpLayerWeights {
  Param<T> down_prompt_w, down_prompt_b;
  Param<T> down_stream_w, down_stream_b;
  Param<T> up_w, up_b;

  McpLayerWeights() = default;
  McpLayerWeights(const std::string& name, int64_t c);

  void init(std::mt19937_64& rng);
  void zero();
  void collect(ParamList<T>& out);
};

/// Per-channel spatial softmax re-weighting of map[.., c, H, W]:
/// out = map * (H*W) * softmax_{H,W}(map). Constant maps are fixed points.
template <typename T>
Var<T> fovea(const Var<T>& map);

/// Segment grid sides used to fold token segments back into square maps.
struct SegmentGrids {
  int64_t template_side = 0;
  int64_t search_side = 0;

  /// Throws ConfigError when a token count is not a perfect square.
  static SegmentGrids from_token_counts(int64_t template_tokens, int64_t search_tokens);
};

/// P^l = P^l(P^{l-1}, H^{l-1}_r), applied to each segment independently.
template <typename T>
PromptState<T> mcp_forward(const PromptState<T>& prompt, const TokenSequence<T>& stream,
                           const McpLayerWeights<T>& w, const SegmentGrids& grids);

/// H^{l-1}_r + P^l.
template <typename T>
TokenSequence<T> inject(const TokenSequence<T>& stream, const PromptState<T>& prompt);

/// The L prompters owned by one branch.
template <typename T>
class Mcp {
 public:
  Mcp(const std::string& name, const BackboneConfig& cfg);

  const McpLayerWeights<T>& layer(int l) const { return layers_.at(static_cast<size_t>(l - 1)); }
  McpLayerWeights<T>& layer(int l) { return layers_.at(static_cast<size_t>(l - 1)); }
  const SegmentGrids& grids() const { return grids_; }
  int depth() const { return static_cast<int>(layers_.size()); }

  void init(std::mt19937_64& rng);
  void zero();
  void collect(ParamList<T>& out);

 private:
  SegmentGrids grids_;
  std::vector<McpLayerWeights<T>> layers_;
};

}  // namespace tatrack::model
