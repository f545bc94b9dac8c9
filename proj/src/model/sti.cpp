#include "tatrack/model/sti.hpp"

#include "tatrack/core/error.hpp"

namespace tatrack::model {

template <typename T>
void StiWeights<T>::init(std::mt19937_64& rng) {
  q.init(rng);
  k.init(rng);
  v.init(rng);
  out.init(rng);
  ln1.init();
  ln2.init();
  ffn.init(rng);
}

template <typename T>
void StiWeights<T>::set_identity_output() {
  const int64_t c = out.w.shape()[0];
  Tensor<T> eye(core::Shape{c, c});
  for (int64_t i = 0; i < c; ++i) eye[static_cast<size_t>(i * c + i)] = T(1);
  out.w.assign(eye);
  fill(out.b, T(0));
}

template <typename T>
void StiWeights<T>::collect(ParamList<T>& out_params) {
  q.collect(out_params);
  k.collect(out_params);
  v.collect(out_params);
  out.collect(out_params);
  ln1.collect(out_params);
  ln2.collect(out_params);
  ffn.collect(out_params);
}

template <typename T>
std::pair<Var<T>, Var<T>> sti_forward(const Var<T>& z_initial, const Var<T>& z_online,
                                      const StiWeights<T>& w, int64_t heads) {
  if (z_initial.shape() != z_online.shape()) {
    throw DimensionError("sti_forward: template features " + core::shape_str(z_initial.shape()) +
                         " vs " + core::shape_str(z_online.shape()));
  }
  const int64_t nz = z_initial.dim(-2);
  const int64_t axis = static_cast<int64_t>(z_initial.shape().size()) - 2;
  const Var<T> z = core::concat<T>({z_initial, z_online}, axis);
  const Var<T> f = msa(z, w.q, w.k, w.v, w.out, heads);
  const Var<T> f_tilde = w.ln1(core::add(f, z));
  const Var<T> z_out = w.ln2(core::add(f_tilde, w.ffn(f_tilde)));
  auto halves = core::split(z_out, axis, {nz, nz});
  return {halves[0], halves[1]};
}

template <typename T>
void apply_sti_at_layer(BranchState<T>& initial, BranchState<T>& online, int layer,
                        const StiConfig& cfg, const std::map<int, StiWeights<T>>& weights,
                        int64_t depth) {
  if (layer < 1 || layer > depth) {
    throw ConfigError("apply_sti_at_layer: layer " + std::to_string(layer) + " outside [1," +
                      std::to_string(depth) + "]");
  }
  if (initial.layer != online.layer) {
    throw UsageError("apply_sti_at_layer: branches are desynchronized");
  }
  if (!cfg.insertion_layers.count(layer)) return;
  const auto it = weights.find(layer);
  if (it == weights.end()) throw ConfigError("no STI weights for layer " + std::to_string(layer));

  const int64_t nz = initial.fused.boundary;
  const int64_t nx = initial.fused.search_length();
  auto si = core::split(initial.fused.tokens, 1, {nz, nx});
  auto so = core::split(online.fused.tokens, 1, {nz, nx});
  auto [zi, zo] = sti_forward(si[0], so[0], it->second, cfg.heads);
  initial.fused.tokens = core::concat<T>({zi, si[1]}, 1);
  online.fused.tokens = core::concat<T>({zo, so[1]}, 1);
}

#define TATRACK_INSTANTIATE(T)                                                                      \
  template struct StiWeights<T>;                                                                    \
  template std::pair<Var<T>, Var<T>> sti_forward(const Var<T>&, const Var<T>&, const StiWeights<T>&, \
                                                 int64_t);                                          \
  template void apply_sti_at_layer(BranchState<T>&, BranchState<T>&, int, const StiConfig&,         \
                                   const std::map<int, StiWeights<T>>&, int64_t);

TATRACK_INSTANTIATE(float)
TATRACK_INSTANTIATE(double)
#undef TATRACK_INSTANTIATE

}  // namespace tatrack::model
