#pragma once

#include <string>
#include <vector>

#include "tatrack/core/autograd.hpp"

namespace tatrack::core {

/// A named model tensor. Trainable params are graph leaves that require grad;
/// frozen params never receive a gradient. Buffers (batch-norm running stats)
/// are persisted with the model but are never touched by the optimizer.
template <typename T>
class Param {
 public:
  Param() = default;
  Param(std::string name, Tensor<T> value, bool trainable = true, bool buffer = false)
      : name_(std::move(name)), var_(std::move(value), trainable && !buffer),
        trainable_(trainable && !buffer), buffer_(buffer) {
    var_.node()->grad = Tensor<T>::zeros(var_.shape());
  }
  Param(const Param&) = delete;
  Param& operator=(const Param&) = delete;
  Param(Param&&) noexcept = default;
  Param& operator=(Param&&) noexcept = default;

  const std::string& name() const { return name_; }
  void set_name(std::string n) { name_ = std::move(n); }
  const Var<T>& var() const { return var_; }
  const Tensor<T>& value() const { return var_.value(); }
  Tensor<T>& mutable_value() { return var_.mutable_value(); }
  const Tensor<T>& grad() const { return var_.node()->grad; }
  Tensor<T>& mutable_grad() { return var_.node()->grad_ref(); }
  const Shape& shape() const { return var_.shape(); }
  int64_t numel() const { return var_.numel(); }

  bool trainable() const { return trainable_; }
  bool is_buffer() const { return buffer_; }
  void set_trainable(bool on) {
    trainable_ = on && !buffer_;
    var_.set_requires_grad(trainable_);
  }

  void zero_grad() { var_.node()->grad_ref().fill(T(0)); }

  // Replaces the value, keeping shape. Used by checkpoint loading and init.
  void assign(const Tensor<T>& v) {
    if (v.shape() != shape()) {
      throw DimensionError("param " + name_ + ": assign shape " + shape_str(v.shape()) +
                           " vs " + shape_str(shape()));
    }
    var_.mutable_value() = v;
  }

 private:
  std::string name_;
  Var<T> var_;
  bool trainable_ = false;
  bool buffer_ = false;
};

template <typename T>
using ParamList = std::vector<Param<T>*>;

template <typename T>
int64_t count_params(const ParamList<T>& params, bool include_buffers = false) {
  int64_t n = 0;
  for (const auto* p : params) {
    if (include_buffers || !p->is_buffer()) n += p->numel();
  }
  return n;
}

}  // namespace tatrack::core
