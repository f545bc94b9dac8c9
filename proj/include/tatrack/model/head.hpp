#pragma once

#include <array>
#include <vector>

#include "tatrack/model/layers.hpp"

namespace tatrack::model {

/// 3x3 conv + batch norm + ReLU.
template <typename T>
struct ConvBnRelu {
  Param<T> w, b;
  BatchNorm<T> bn;

  ConvBnRelu() = default;
  ConvBnRelu(const std::string& name, int64_t in, int64_t out)
      : w(name + ".conv.w", Tensor<T>(Shape{out, in, 3, 3})), b(name + ".conv.b", Tensor<T>(Shape{out})),
        bn(name + ".bn", out) {}

  Var<T> operator()(const Var<T>& x, bool training) const {
    return core::relu(bn(core::conv2d(x, w.var(), b.var(), 1), training));
  }
  void init(std::mt19937_64& rng) {
    xavier_uniform(w, w.shape()[1] * 9, w.shape()[0] * 9, rng);
    fill(b, T(0));
    bn.init();
  }
  void collect(ParamList<T>& out) {
    out.push_back(&w);
    out.push_back(&b);
    bn.collect(out);
  }
};

/// All maps are post-sigmoid: score [B,1,S,S], offset [B,2,S,S] (x, y cell-local),
/// size [B,2,S,S] (w, h as fractions of the search region).
template <typename T>
struct HeadOutputs {
  Var<T> score;
  Var<T> offset;
  Var<T> size;
};

/// Fully convolutional center head: three stacks C -> C/2 -> C/4 -> C/8 -> out.
template <typename T>
class CenterHead {
 public:
  explicit CenterHead(int64_t channels);

  HeadOutputs<T> forward(const Var<T>& features, bool training) const;

  void init(std::mt19937_64& rng);
  void collect(ParamList<T>& out);

 private:
  struct Stack {
    std::vector<ConvBnRelu<T>> layers;
    Param<T> out_w, out_b;
  };
  static Var<T> run(const Stack& s, const Var<T>& x, bool training);

  std::array<Stack, 3> stacks_;  // score, offset, size
};

}  // namespace tatrack::model
