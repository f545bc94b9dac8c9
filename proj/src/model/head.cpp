#include "tatrack/model/head.hpp"

#include <cmath>

namespace tatrack::model {

template <typename T>
CenterHead<T>::CenterHead(int64_t channels) {
  const std::array<const char*, 3> names{"score", "offset", "size"};
  const std::array<int64_t, 3> outs{1, 2, 2};
  for (size_t s = 0; s < 3; ++s) {
    const std::string base = std::string("head.") + names[s];
    int64_t c = channels;
    for (int i = 0; i < 3; ++i) {
      stacks_[s].layers.emplace_back(base + "." + std::to_string(i), c, c / 2);
      c /= 2;
    }
    stacks_[s].out_w = Param<T>(base + ".out.w", Tensor<T>(Shape{outs[s], c}));
    stacks_[s].out_b = Param<T>(base + ".out.b", Tensor<T>(Shape{outs[s]}));
  }
}

template <typename T>
Var<T> CenterHead<T>::run(const Stack& s, const Var<T>& x, bool training) {
  Var<T> h = x;
  for (auto& l : s.layers) h = l(h, training);
  return core::sigmoid(core::conv1x1(h, s.out_w.var(), s.out_b.var()));
}

template <typename T>
HeadOutputs<T> CenterHead<T>::forward(const Var<T>& features, bool training) const {
  return {run(stacks_[0], features, training), run(stacks_[1], features, training),
          run(stacks_[2], features, training)};
}

template <typename T>
void CenterHead<T>::init(std::mt19937_64& rng) {
  for (auto& s : stacks_) {
    for (auto& l : s.layers) l.init(rng);
    xavier_uniform(s.out_w, s.out_w.shape()[1], s.out_w.shape()[0], rng);
    fill(s.out_b, T(0));
  }
  // Score prior of 0.1 keeps the focal loss well-behaved at the start.
  fill(stacks_[0].out_b, static_cast<T>(-std::log((1.0 - 0.1) / 0.1)));
}

template <typename T>
void CenterHead<T>::collect(ParamList<T>& out) {
  for (auto& s : stacks_) {
    for (auto& l : s.layers) l.collect(out);
    out.push_back(&s.out_w);
    out.push_back(&s.out_b);
  }
}

template class CenterHead<float>;
template class CenterHead<double>;

}  // namespace tatrack::model
