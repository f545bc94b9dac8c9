#pragma once

#include <cstdint>
#include <vector>

#include "tatrack/core/autograd.hpp"

// Differentiable tensor operations. Every op checks shapes eagerly and throws
// DimensionError naming the offending shapes. Instantiated for float and double.
namespace tatrack::core {

template <typename T>
Var<T> constant(Tensor<T> value) {
  return Var<T>(std::move(value), false);
}

// Elementwise. `b` may have the same shape as `a` or a suffix of it, in which
// case it is broadcast over the leading axes of `a`.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T s);
template <typename T> Var<T> add_scalar(const Var<T>& a, T s);

template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);

/// a[..,M,K] x b[..,K,N] -> [..,M,N]. Batch axes must match, or either side may
/// be rank 2 and is then shared across the other's batch.
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);

/// x[..,K] * w[K,M] + bias[M]. `bias` may be undefined.
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias);

template <typename T> Var<T> softmax_lastdim(const Var<T>& x);
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-6));

template <typename T> Var<T> gelu(const Var<T>& x);
template <typename T> Var<T> relu(const Var<T>& x);
template <typename T> Var<T> sigmoid(const Var<T>& x);

template <typename T> Var<T> concat(const std::vector<Var<T>>& xs, int64_t axis);
template <typename T>
std::vector<Var<T>> split(const Var<T>& x, int64_t axis, const std::vector<int64_t>& sizes);
template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);
template <typename T> Var<T> permute(const Var<T>& x, const std::vector<int64_t>& perm);
template <typename T> Var<T> transpose(const Var<T>& x, int64_t d0, int64_t d1);

/// Pointwise channel mixing: x[..,C_in,H,W], w[C_out,C_in], b[C_out].
template <typename T> Var<T> conv1x1(const Var<T>& x, const Var<T>& w, const Var<T>& b);

/// Stride-1 k x k convolution with symmetric zero padding: x[B,C_in,H,W],
/// w[C_out,C_in,k,k], b[C_out].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t pad);

/// Batch norm over x[B,C,H,W] (statistics per channel over B*H*W). In training
/// mode the running statistics are updated with `momentum`; otherwise they are
/// used for normalization.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                  T momentum = T(0.1), T eps = T(1e-5));

/// x[B,C,H,W] -> [B, (H/P)*(W/P), C*P*P], raster patch order, features (c,py,px).
template <typename T> Var<T> patchify(const Var<T>& x, int64_t patch);

/// map[B,C,H,W], flat spatial index per batch item -> [B,C].
template <typename T>
Var<T> gather_spatial(const Var<T>& map, const std::vector<int64_t>& flat_index);

}  // namespace tatrack::core
