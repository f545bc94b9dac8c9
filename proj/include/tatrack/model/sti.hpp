#pragma once

#include <map>
#include <set>
#include <utility>

#include "tatrack/model/backbone.hpp"
#include "tatrack/model/mcp.hpp"

namespace tatrack::model {

/// Joint attention block bridging the template features of the two branches.
template <typename T>
struct StiWeights {
  Linear<T> q, k, v, out;
  LayerNorm<T> ln1, ln2;
  FeedForward<T> ffn;

  StiWeights() = default;
  StiWeights(const std::string& name, int64_t c, int64_t ffn_ratio)
      : q(name + ".q", c, c), k(name + ".k", c, c), v(name + ".v", c, c), out(name + ".out", c, c),
        ln1(name + ".ln1", c), ln2(name + ".ln2", c), ffn(name + ".ffn", c, ffn_ratio) {}

  void init(std::mt19937_64& rng);
  /// Output projection set to the identity (and zero bias).
  void set_identity_output();
  void collect(ParamList<T>& out_params);
};

struct StiConfig {
  std::set<int> insertion_layers;
  int64_t heads = 1;
};

/// Z = [Z_i; Z_o]; F = Attn(Z); F~ = LN(F + Z); Z' = LN(F~ + FFN(F~)); split Z'.
template <typename T>
std::pair<Var<T>, Var<T>> sti_forward(const Var<T>& z_initial, const Var<T>& z_online,
                                      const StiWeights<T>& w, int64_t heads = 1);

enum class TemplateKind { kInitial, kOnline };

/// One branch's streams while stepping through the encoder stack.
template <typename T>
struct BranchState {
  TokenSequence<T> fused;
  PromptState<T> prompt;  // tokens undefined when prompts are disabled
  TemplateKind which = TemplateKind::kInitial;
  int layer = 0;          // number of encoder layers already applied
};

/// Runs STI on the template segments of both fused streams when `layer` is an
/// insertion layer; otherwise leaves both branches untouched.
template <typename T>
void apply_sti_at_layer(BranchState<T>& initial, BranchState<T>& online, int layer,
                        const StiConfig& cfg, const std::map<int, StiWeights<T>>& weights,
                        int64_t depth);

}  // namespace tatrack::model
