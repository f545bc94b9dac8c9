#include "tatrack/train/optimizer.hpp"

#include <cmath>

#include "tatrack/core/error.hpp"

namespace tatrack::train {

namespace {

template <typename T>
bool updatable(const Param<T>* p) {
  return p->trainable() && !p->is_buffer();
}

}  // namespace

template <typename T>
void AdamW<T>::step(const std::vector<Param<T>*>& params, double lr) {
  for (const auto* p : params) {
    if (updatable(p) && !p->grad().all_finite()) {
      throw NumericalError("AdamW: non-finite gradient in " + p->name() + ", step aborted");
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto* p : params) {
    if (!updatable(p)) continue;
    auto& st = state_[p];
    if (st.m.numel() != p->numel()) {
      st.m = Tensor<T>::zeros(p->shape());
      st.v = Tensor<T>::zeros(p->shape());
    }
    auto w = p->mutable_value().data();
    const auto g = p->grad().data();
    auto m = st.m.data();
    auto v = st.v.data();
    for (size_t i = 0; i < w.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = beta1_ * static_cast<double>(m[i]) + (1 - beta1_) * gi;
      const double vi = beta2_ * static_cast<double>(v[i]) + (1 - beta2_) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      double wi = static_cast<double>(w[i]) * (1 - lr * weight_decay_);
      wi -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps_);
      w[i] = static_cast<T>(wi);
    }
  }
}

template <typename T>
double clip_grad_norm(const std::vector<Param<T>*>& params, double max_norm) {
  double sq = 0;
  for (const auto* p : params) {
    if (!updatable(p)) continue;
    for (T g : p->grad().data()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / (norm + 1e-6));
    for (auto* p : params) {
      if (!updatable(p)) continue;
      for (T& g : p->mutable_grad().data()) g *= s;
    }
  }
  return norm;
}

template class AdamW<float>;
template class AdamW<double>;
template double clip_grad_norm(const std::vector<Param<float>*>&, double);
template double clip_grad_norm(const std::vector<Param<double>*>&, double);

}  // namespace tatrack::train
