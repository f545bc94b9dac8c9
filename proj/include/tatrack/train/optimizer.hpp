#pragma once

#include <unordered_map>

#include "tatrack/core/param.hpp"

namespace tatrack::train {

using core::Param;
using core::Tensor;

/// Decoupled-weight-decay Adam. Only trainable, non-buffer parameters move.
template <typename T>
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8, double weight_decay = 1e-4)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  /// Throws NumericalError naming the first parameter with a non-finite
  /// gradient; no parameter is modified in that case.
  void step(const std::vector<Param<T>*>& params, double lr);

  int64_t steps() const { return t_; }

 private:
  struct Moments {
    Tensor<T> m, v;
  };
  double beta1_, beta2_, eps_, weight_decay_;
  int64_t t_ = 0;
  std::unordered_map<const Param<T>*, Moments> state_;
};

/// Scales trainable gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(const std::vector<Param<T>*>& params, double max_norm);

template <typename T>
void zero_grads(const std::vector<Param<T>*>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace tatrack::train
