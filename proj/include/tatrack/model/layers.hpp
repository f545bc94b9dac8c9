#pragma once

#include <random>
#include <string>

#include "tatrack/core/ops.hpp"
#include "tatrack/core/param.hpp"

// Small parameter bundles shared by the model modules.
namespace tatrack::model {

using core::Param;
using core::ParamList;
using core::Shape;
using core::Tensor;
using core::Var;

/// Xavier/Glorot uniform fill, bound sqrt(6 / (fan_in + fan_out)).
template <typename T>
void xavier_uniform(Param<T>& p, int64_t fan_in, int64_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  p.assign(Tensor<T>::uniform(p.shape(), rng, T(-bound), T(bound)));
}

template <typename T>
void fill(Param<T>& p, T v) {
  p.mutable_value().fill(v);
}

/// x[..,in] -> x W + b with W stored [in, out].
template <typename T>
struct Linear {
  Param<T> w;
  Param<T> b;

  Linear() = default;
  Linear(const std::string& name, int64_t in, int64_t out)
      : w(name + ".w", Tensor<T>(Shape{in, out})), b(name + ".b", Tensor<T>(Shape{out})) {}

  Var<T> operator()(const Var<T>& x) const { return core::linear(x, w.var(), b.var()); }
  void init(std::mt19937_64& rng) {
    xavier_uniform(w, w.shape()[0], w.shape()[1], rng);
    fill(b, T(0));
  }
  void collect(ParamList<T>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

template <typename T>
struct LayerNorm {
  Param<T> gamma;
  Param<T> beta;
  T eps = T(1e-6);

  LayerNorm() = default;
  LayerNorm(const std::string& name, int64_t c)
      : gamma(name + ".gamma", Tensor<T>(Shape{c}, T(1))), beta(name + ".beta", Tensor<T>(Shape{c})) {}

  Var<T> operator()(const Var<T>& x) const { return core::layer_norm(x, gamma.var(), beta.var(), eps); }
  void init() {
    fill(gamma, T(1));
    fill(beta, T(0));
  }
  void collect(ParamList<T>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

/// Batch norm with persisted running statistics. Batch statistics are used only
/// when the caller asks for training mode and the affine params are trainable.
/// The running statistics are treated as mutable state: inference calls only
/// read them, training calls update them and must not run concurrently.
template <typename T>
struct BatchNorm {
  Param<T> gamma;
  Param<T> beta;
  Param<T> running_mean;
  Param<T> running_var;

  BatchNorm() = default;
  BatchNorm(const std::string& name, int64_t c)
      : gamma(name + ".gamma", Tensor<T>(Shape{c}, T(1))),
        beta(name + ".beta", Tensor<T>(Shape{c})),
        running_mean(name + ".running_mean", Tensor<T>(Shape{c}), false, true),
        running_var(name + ".running_var", Tensor<T>(Shape{c}, T(1)), false, true) {}

  Var<T> operator()(const Var<T>& x, bool training) const {
    auto& rm = const_cast<Param<T>&>(running_mean);
    auto& rv = const_cast<Param<T>&>(running_var);
    return core::batch_norm(x, gamma.var(), beta.var(), rm.mutable_value(), rv.mutable_value(),
                            training && gamma.trainable());
  }
  void init() {
    fill(gamma, T(1));
    fill(beta, T(0));
    fill(running_mean, T(0));
    fill(running_var, T(1));
  }
  void collect(ParamList<T>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
    out.push_back(&running_mean);
    out.push_back(&running_var);
  }
};

/// Feed-forward block C -> rC -> C with GELU.
template <typename T>
struct FeedForward {
  Linear<T> fc1;
  Linear<T> fc2;

  FeedForward() = default;
  FeedForward(const std::string& name, int64_t c, int64_t ratio)
      : fc1(name + ".fc1", c, c * ratio), fc2(name + ".fc2", c * ratio, c) {}

  Var<T> operator()(const Var<T>& x) const { return fc2(core::gelu(fc1(x))); }
  void init(std::mt19937_64& rng) {
    fc1.init(rng);
    fc2.init(rng);
  }
  void collect(ParamList<T>& out) {
    fc1.collect(out);
    fc2.collect(out);
  }
};

}  // namespace tatrack::model
