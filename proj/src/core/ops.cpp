#include "tatrack/core/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace tatrack::core {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

// C[M,N] (+)= op(A) * op(B) on row-major buffers.
template <typename T>
void gemm(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool trans_a,
          bool trans_b, bool accumulate) {
  CMapMat<T> A(a, trans_a ? k : m, trans_a ? m : k);
  CMapMat<T> B(b, trans_b ? n : k, trans_b ? k : n);
  MapMat<T> C(c, m, n);
  if (!accumulate) C.setZero();
  if (trans_a && trans_b) {
    C.noalias() += A.transpose() * B.transpose();
  } else if (trans_a) {
    C.noalias() += A.transpose() * B;
  } else if (trans_b) {
    C.noalias() += A * B.transpose();
  } else {
    C.noalias() += A * B;
  }
}

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw DimensionError(op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

bool is_suffix(const Shape& big, const Shape& small) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Reduces a gradient of shape `big` onto a broadcast suffix shape.
template <typename T>
Tensor<T> reduce_to(const Tensor<T>& g, const Shape& target) {
  if (g.shape() == target) return g;
  Tensor<T> out(target);
  const int64_t inner = out.numel();
  const int64_t outer = g.numel() / inner;
  for (int64_t o = 0; o < outer; ++o) {
    const T* src = g.raw() + o * inner;
    for (int64_t i = 0; i < inner; ++i) out[i] += src[i];
  }
  return out;
}

template <typename T>
void check_same_or_suffix(const std::string& op, const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape() && !is_suffix(a.shape(), b.shape())) {
    shape_error(op, a.shape(), b.shape());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same_or_suffix("add", a, b);
  Tensor<T> out = a.value();
  const int64_t inner = b.numel();
  const T* bv = b.value().raw();
  T* o = out.raw();
  for (int64_t i = 0; i < out.numel(); ++i) o[i] += bv[i % inner];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    if (na.requires_grad) na.accumulate(self.grad);
    if (nb.requires_grad) nb.accumulate(reduce_to(self.grad, nb.value.shape()));
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
  Tensor<T> out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    if (na.requires_grad) na.accumulate(self.grad);
    if (nb.requires_grad) {
      Tensor<T> g = self.grad;
      for (auto& v : g.data()) v = -v;
      nb.accumulate(g);
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_same_or_suffix("mul", a, b);
  Tensor<T> out = a.value();
  const int64_t inner = b.numel();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i % inner];
  return make_result<T>(std::move(out), {a, b}, [inner](Node<T>& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    const int64_t n = self.grad.numel();
    if (na.requires_grad) {
      Tensor<T> g(self.grad.shape());
      for (int64_t i = 0; i < n; ++i) g[i] = self.grad[i] * nb.value[i % inner];
      na.accumulate(g);
    }
    if (nb.requires_grad) {
      Tensor<T> g(nb.value.shape());
      for (int64_t i = 0; i < n; ++i) g[i % inner] += self.grad[i] * na.value[i];
      nb.accumulate(g);
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v *= s;
  return make_result<T>(std::move(out), {a}, [s](Node<T>& self) {
    Tensor<T> g = self.grad;
    for (auto& v : g.data()) v *= s;
    self.inputs[0]->accumulate(g);
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v += s;
  return make_result<T>(std::move(out), {a},
                        [](Node<T>& self) { self.inputs[0]->accumulate(self.grad); });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T s = 0;
  for (const T v : a.value().data()) s += v;
  return make_result<T>(Tensor<T>::scalar(s), {a}, [](Node<T>& self) {
    auto& na = *self.inputs[0];
    na.accumulate(Tensor<T>(na.value.shape(), self.grad.item()));
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  const T inv = T(1) / static_cast<T>(a.numel());
  return scale(sum(a), inv);
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) shape_error("matmul", sa, sb);
  const int64_t m = sa[sa.size() - 2], k = sa.back();
  const int64_t kb = sb[sb.size() - 2], n = sb.back();
  if (k != kb) shape_error("matmul", sa, sb);
  const Shape batch_a(sa.begin(), sa.end() - 2);
  const Shape batch_b(sb.begin(), sb.end() - 2);
  if (!batch_a.empty() && !batch_b.empty() && batch_a != batch_b) shape_error("matmul", sa, sb);
  const Shape batch = batch_a.empty() ? batch_b : batch_a;
  const int64_t nb = shape_numel(batch);
  const bool a_shared = batch_a.empty();
  const bool b_shared = batch_b.empty();

  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor<T> out(out_shape);
  if (b_shared) {
    // One GEMM over the stacked rows of a.
    gemm(a.value().raw(), b.value().raw(), out.raw(), (a_shared ? 1 : nb) * m, k, n, false,
         false, false);
  } else {
    for (int64_t i = 0; i < nb; ++i) {
      gemm(a.value().raw() + (a_shared ? 0 : i * m * k), b.value().raw() + i * k * n,
           out.raw() + i * m * n, m, k, n, false, false, false);
    }
  }
  return make_result<T>(std::move(out), {a, b}, [=](Node<T>& self) {
    auto& na = *self.inputs[0];
    auto& nbn = *self.inputs[1];
    const T* g = self.grad.raw();
    if (na.requires_grad) {
      Tensor<T>& ga = na.grad_ref();
      if (b_shared) {
        gemm(g, nbn.value.raw(), ga.raw(), (a_shared ? 1 : nb) * m, n, k, false, true, true);
      } else {
        for (int64_t i = 0; i < nb; ++i) {
          gemm(g + i * m * n, nbn.value.raw() + i * k * n, ga.raw() + (a_shared ? 0 : i * m * k),
               m, n, k, false, true, true);
        }
      }
    }
    if (nbn.requires_grad) {
      Tensor<T>& gb = nbn.grad_ref();
      if (b_shared) {
        gemm(na.value.raw(), g, gb.raw(), k, (a_shared ? 1 : nb) * m, n, true, false, true);
      } else {
        for (int64_t i = 0; i < nb; ++i) {
          gemm(na.value.raw() + (a_shared ? 0 : i * m * k), g + i * m * n, gb.raw() + i * k * n,
               k, m, n, true, false, true);
        }
      }
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  const Shape& sx = x.shape();
  if (w.shape().size() != 2 || sx.empty() || sx.back() != w.dim(0)) {
    shape_error("linear", sx, w.shape());
  }
  const int64_t k = w.dim(0), m = w.dim(1);
  if (bias.defined() && (bias.shape().size() != 1 || bias.dim(0) != m)) {
    shape_error("linear(bias)", w.shape(), bias.shape());
  }
  const int64_t rows = x.numel() / k;
  Shape out_shape = sx;
  out_shape.back() = m;
  Tensor<T> out(out_shape);
  gemm(x.value().raw(), w.value().raw(), out.raw(), rows, k, m, false, false, false);
  if (bias.defined()) {
    MapMat<T>(out.raw(), rows, m).rowwise() +=
        Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.value().raw(), m);
  }
  std::vector<Var<T>> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>(std::move(out), std::move(inputs), [=](Node<T>& self) {
    auto& nx = *self.inputs[0];
    auto& nw = *self.inputs[1];
    const T* g = self.grad.raw();
    if (nx.requires_grad) gemm(g, nw.value.raw(), nx.grad_ref().raw(), rows, m, k, false, true, true);
    if (nw.requires_grad) gemm(nx.value.raw(), g, nw.grad_ref().raw(), k, rows, m, true, false, true);
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(self.inputs[2]->grad_ref().raw(), m) +=
          CMapMat<T>(g, rows, m).colwise().sum();
    }
  });
}

// ---------------------------------------------------------------------------
// Normalization and activations
// ---------------------------------------------------------------------------

template <typename T>
Var<T> softmax_lastdim(const Var<T>& x) {
  if (x.shape().empty() || x.numel() == 0) throw DimensionError("softmax_lastdim: empty tensor");
  const int64_t n = x.shape().back();
  const int64_t rows = x.numel() / n;
  Tensor<T> out(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const T* src = x.value().raw() + r * n;
    T* dst = out.raw() + r * n;
    const T mx = *std::max_element(src, src + n);
    T s = 0;
    for (int64_t i = 0; i < n; ++i) {
      dst[i] = std::exp(src[i] - mx);
      s += dst[i];
    }
    const T inv = T(1) / s;
    for (int64_t i = 0; i < n; ++i) dst[i] *= inv;
  }
  return make_result<T>(std::move(out), {x}, [n, rows](Node<T>& self) {
    Tensor<T>& gx = self.inputs[0]->grad_ref();
    for (int64_t r = 0; r < rows; ++r) {
      const T* y = self.value.raw() + r * n;
      const T* gy = self.grad.raw() + r * n;
      T dot = 0;
      for (int64_t i = 0; i < n; ++i) dot += gy[i] * y[i];
      T* dst = gx.raw() + r * n;
      for (int64_t i = 0; i < n; ++i) dst[i] += y[i] * (gy[i] - dot);
    }
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  if (x.shape().empty()) throw DimensionError("layer_norm: scalar input");
  const int64_t c = x.shape().back();
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    shape_error("layer_norm", x.shape(), gamma.shape());
  }
  const int64_t rows = x.numel() / c;
  Tensor<T> out(x.shape());
  auto xhat = std::make_shared<std::vector<T>>(static_cast<size_t>(x.numel()));
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
  const T* g = gamma.value().raw();
  const T* b = beta.value().raw();
  for (int64_t r = 0; r < rows; ++r) {
    const T* src = x.value().raw() + r * c;
    T mu = 0;
    for (int64_t i = 0; i < c; ++i) mu += src[i];
    mu /= static_cast<T>(c);
    T var = 0;
    for (int64_t i = 0; i < c; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<T>(c);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (int64_t i = 0; i < c; ++i) {
      const T h = (src[i] - mu) * is;
      (*xhat)[r * c + i] = h;
      out[r * c + i] = h * g[i] + b[i];
    }
  }
  return make_result<T>(std::move(out), {x, gamma, beta}, [=](Node<T>& self) {
    auto& nx = *self.inputs[0];
    auto& ng = *self.inputs[1];
    auto& nb = *self.inputs[2];
    const T* gy = self.grad.raw();
    const T* gam = ng.value.raw();
    if (ng.requires_grad) {
      Tensor<T>& gg = ng.grad_ref();
      for (int64_t r = 0; r < rows; ++r) {
        for (int64_t i = 0; i < c; ++i) gg[i] += gy[r * c + i] * (*xhat)[r * c + i];
      }
    }
    if (nb.requires_grad) {
      Tensor<T>& gbt = nb.grad_ref();
      for (int64_t r = 0; r < rows; ++r) {
        for (int64_t i = 0; i < c; ++i) gbt[i] += gy[r * c + i];
      }
    }
    if (nx.requires_grad) {
      Tensor<T>& gx = nx.grad_ref();
      for (int64_t r = 0; r < rows; ++r) {
        T m1 = 0, m2 = 0;
        for (int64_t i = 0; i < c; ++i) {
          const T d = gy[r * c + i] * gam[i];
          m1 += d;
          m2 += d * (*xhat)[r * c + i];
        }
        m1 /= static_cast<T>(c);
        m2 /= static_cast<T>(c);
        for (int64_t i = 0; i < c; ++i) {
          const T d = gy[r * c + i] * gam[i];
          gx[r * c + i] += (*inv_std)[r] * (d - m1 - (*xhat)[r * c + i] * m2);
        }
      }
    }
  });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const T v = x.value()[i];
    out[i] = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  }
  return make_result<T>(std::move(out), {x}, [inv_sqrt2](Node<T>& self) {
    auto& nx = *self.inputs[0];
    Tensor<T>& gx = nx.grad_ref();
    const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
    for (int64_t i = 0; i < gx.numel(); ++i) {
      const T v = nx.value[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      gx[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::max(x.value()[i], T(0));
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& nx = *self.inputs[0];
    Tensor<T>& gx = nx.grad_ref();
    for (int64_t i = 0; i < gx.numel(); ++i) {
      if (nx.value[i] > T(0)) gx[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    const T v = x.value()[i];
    out[i] = v >= 0 ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  }
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    Tensor<T>& gx = self.inputs[0]->grad_ref();
    for (int64_t i = 0; i < gx.numel(); ++i) {
      const T y = self.value[i];
      gx[i] += self.grad[i] * y * (T(1) - y);
    }
  });
}

// ---------------------------------------------------------------------------
// Layout
// ---------------------------------------------------------------------------

template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, int64_t axis) {
  if (xs.empty()) throw DimensionError("concat: no inputs");
  const Shape& s0 = xs[0].shape();
  const int64_t ax = xs[0].value().normalize_axis(axis);
  int64_t total = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    if (s.size() != s0.size()) shape_error("concat", s0, s);
    for (size_t d = 0; d < s.size(); ++d) {
      if (static_cast<int64_t>(d) != ax && s[d] != s0[d]) shape_error("concat", s0, s);
    }
    total += s[ax];
  }
  Shape out_shape = s0;
  out_shape[ax] = total;
  int64_t outer = 1, inner = 1;
  for (int64_t d = 0; d < ax; ++d) outer *= s0[d];
  for (size_t d = ax + 1; d < s0.size(); ++d) inner *= s0[d];
  Tensor<T> out(out_shape);
  std::vector<int64_t> widths;
  for (const auto& x : xs) widths.push_back(x.shape()[ax] * inner);
  const int64_t row = total * inner;
  for (int64_t o = 0; o < outer; ++o) {
    int64_t col = 0;
    for (size_t k = 0; k < xs.size(); ++k) {
      std::copy_n(xs[k].value().raw() + o * widths[k], widths[k], out.raw() + o * row + col);
      col += widths[k];
    }
  }
  return make_result<T>(std::move(out), xs, [outer, row, widths](Node<T>& self) {
    int64_t col = 0;
    for (size_t k = 0; k < self.inputs.size(); ++k) {
      auto& nk = *self.inputs[k];
      if (nk.requires_grad) {
        Tensor<T>& g = nk.grad_ref();
        for (int64_t o = 0; o < outer; ++o) {
          const T* src = self.grad.raw() + o * row + col;
          T* dst = g.raw() + o * widths[k];
          for (int64_t i = 0; i < widths[k]; ++i) dst[i] += src[i];
        }
      }
      col += widths[k];
    }
  });
}

template <typename T>
std::vector<Var<T>> split(const Var<T>& x, int64_t axis, const std::vector<int64_t>& sizes) {
  const int64_t ax = x.value().normalize_axis(axis);
  const Shape& s = x.shape();
  int64_t total = 0;
  for (const int64_t v : sizes) {
    if (v < 1) throw DimensionError("split: sizes must be positive");
    total += v;
  }
  if (total != s[ax]) {
    throw DimensionError("split: sizes sum to " + std::to_string(total) + " but axis has " +
                         std::to_string(s[ax]) + " in shape " + shape_str(s));
  }
  int64_t outer = 1, inner = 1;
  for (int64_t d = 0; d < ax; ++d) outer *= s[d];
  for (size_t d = ax + 1; d < s.size(); ++d) inner *= s[d];
  const int64_t row = total * inner;
  std::vector<Var<T>> outs;
  int64_t col = 0;
  for (const int64_t sz : sizes) {
    Shape os = s;
    os[ax] = sz;
    Tensor<T> out(os);
    const int64_t w = sz * inner;
    for (int64_t o = 0; o < outer; ++o) {
      std::copy_n(x.value().raw() + o * row + col, w, out.raw() + o * w);
    }
    outs.push_back(make_result<T>(std::move(out), {x}, [outer, row, col, w](Node<T>& self) {
      Tensor<T>& g = self.inputs[0]->grad_ref();
      for (int64_t o = 0; o < outer; ++o) {
        const T* src = self.grad.raw() + o * w;
        T* dst = g.raw() + o * row + col;
        for (int64_t i = 0; i < w; ++i) dst[i] += src[i];
      }
    }));
    col += w;
  }
  return outs;
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& nx = *self.inputs[0];
    nx.accumulate(self.grad.reshaped(nx.value.shape()));
  });
}

namespace {

template <typename T>
Tensor<T> permute_tensor(const Tensor<T>& x, const std::vector<int64_t>& perm) {
  const Shape& s = x.shape();
  const size_t r = s.size();
  Shape os(r);
  for (size_t d = 0; d < r; ++d) os[d] = s[perm[d]];
  std::vector<int64_t> in_stride(r, 1);
  for (int64_t d = static_cast<int64_t>(r) - 2; d >= 0; --d) in_stride[d] = in_stride[d + 1] * s[d + 1];
  std::vector<int64_t> stride(r);
  for (size_t d = 0; d < r; ++d) stride[d] = in_stride[perm[d]];
  Tensor<T> out(os);
  std::vector<int64_t> idx(r, 0);
  int64_t src = 0;
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    out[i] = x[src];
    for (int64_t d = static_cast<int64_t>(r) - 1; d >= 0; --d) {
      if (++idx[d] < os[d]) {
        src += stride[d];
        break;
      }
      src -= stride[d] * (os[d] - 1);
      idx[d] = 0;
    }
  }
  return out;
}

}  // namespace

template <typename T>
Var<T> permute(const Var<T>& x, const std::vector<int64_t>& perm) {
  const size_t r = x.shape().size();
  if (perm.size() != r) throw DimensionError("permute: rank mismatch for shape " + shape_str(x.shape()));
  std::vector<int64_t> inv(r, -1);
  for (size_t d = 0; d < r; ++d) {
    if (perm[d] < 0 || perm[d] >= static_cast<int64_t>(r) || inv[perm[d]] != -1) {
      throw DimensionError("permute: invalid permutation for shape " + shape_str(x.shape()));
    }
    inv[perm[d]] = static_cast<int64_t>(d);
  }
  return make_result<T>(permute_tensor(x.value(), perm), {x}, [inv](Node<T>& self) {
    self.inputs[0]->accumulate(permute_tensor(self.grad, inv));
  });
}

template <typename T>
Var<T> transpose(const Var<T>& x, int64_t d0, int64_t d1) {
  const int64_t a = x.value().normalize_axis(d0);
  const int64_t b = x.value().normalize_axis(d1);
  std::vector<int64_t> perm(x.shape().size());
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[a], perm[b]);
  return permute(x, perm);
}

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

template <typename T>
Var<T> conv1x1(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const Shape& sx = x.shape();
  if (sx.size() < 3 || w.shape().size() != 2 || w.dim(1) != sx[sx.size() - 3]) {
    shape_error("conv1x1", sx, w.shape());
  }
  const int64_t cout = w.dim(0);
  if (b.shape() != Shape{cout}) shape_error("conv1x1(bias)", w.shape(), b.shape());
  const int64_t cin = w.dim(1);
  const int64_t hw = sx[sx.size() - 1] * sx[sx.size() - 2];
  const int64_t nb = x.numel() / (cin * hw);
  Shape os = sx;
  os[os.size() - 3] = cout;
  Tensor<T> out(os);
  for (int64_t i = 0; i < nb; ++i) {
    T* o = out.raw() + i * cout * hw;
    gemm(w.value().raw(), x.value().raw() + i * cin * hw, o, cout, cin, hw, false, false, false);
    for (int64_t c = 0; c < cout; ++c) {
      for (int64_t p = 0; p < hw; ++p) o[c * hw + p] += b.value()[c];
    }
  }
  return make_result<T>(std::move(out), {x, w, b}, [=](Node<T>& self) {
    auto& nx = *self.inputs[0];
    auto& nw = *self.inputs[1];
    auto& nbias = *self.inputs[2];
    for (int64_t i = 0; i < nb; ++i) {
      const T* g = self.grad.raw() + i * cout * hw;
      if (nx.requires_grad) {
        gemm(nw.value.raw(), g, nx.grad_ref().raw() + i * cin * hw, cin, cout, hw, true, false, true);
      }
      if (nw.requires_grad) {
        gemm(g, nx.value.raw() + i * cin * hw, nw.grad_ref().raw(), cout, hw, cin, false, true, true);
      }
      if (nbias.requires_grad) {
        Tensor<T>& gb = nbias.grad_ref();
        for (int64_t c = 0; c < cout; ++c) {
          for (int64_t p = 0; p < hw; ++p) gb[c] += g[c * hw + p];
        }
      }
    }
  });
}

namespace {

// cols[(c*k+ky)*k+kx, y*W+x] = x[c, y+ky-pad, x+kx-pad] (zero outside).
template <typename T>
void im2col(const T* img, int64_t c, int64_t h, int64_t w, int64_t k, int64_t pad, T* cols) {
  for (int64_t ci = 0; ci < c; ++ci) {
    for (int64_t ky = 0; ky < k; ++ky) {
      for (int64_t kx = 0; kx < k; ++kx) {
        T* row = cols + ((ci * k + ky) * k + kx) * h * w;
        for (int64_t y = 0; y < h; ++y) {
          const int64_t sy = y + ky - pad;
          for (int64_t x = 0; x < w; ++x) {
            const int64_t sx = x + kx - pad;
            row[y * w + x] = (sy >= 0 && sy < h && sx >= 0 && sx < w) ? img[(ci * h + sy) * w + sx] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, int64_t c, int64_t h, int64_t w, int64_t k, int64_t pad, T* img) {
  for (int64_t ci = 0; ci < c; ++ci) {
    for (int64_t ky = 0; ky < k; ++ky) {
      for (int64_t kx = 0; kx < k; ++kx) {
        const T* row = cols + ((ci * k + ky) * k + kx) * h * w;
        for (int64_t y = 0; y < h; ++y) {
          const int64_t sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          for (int64_t x = 0; x < w; ++x) {
            const int64_t sx = x + kx - pad;
            if (sx >= 0 && sx < w) img[(ci * h + sy) * w + sx] += row[y * w + x];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t pad) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.size() != 4 || sw.size() != 4 || sw[1] != sx[1] || sw[2] != sw[3] || sw[2] != 2 * pad + 1) {
    shape_error("conv2d", sx, sw);
  }
  const int64_t nb = sx[0], cin = sx[1], h = sx[2], wd = sx[3];
  const int64_t cout = sw[0], k = sw[2];
  if (b.shape() != Shape{cout}) shape_error("conv2d(bias)", sw, b.shape());
  const int64_t hw = h * wd, ck = cin * k * k;
  auto cols = std::make_shared<std::vector<T>>(static_cast<size_t>(nb * ck * hw));
  Tensor<T> out(Shape{nb, cout, h, wd});
  for (int64_t i = 0; i < nb; ++i) {
    T* ci = cols->data() + i * ck * hw;
    im2col(x.value().raw() + i * cin * hw, cin, h, wd, k, pad, ci);
    T* o = out.raw() + i * cout * hw;
    gemm(w.value().raw(), ci, o, cout, ck, hw, false, false, false);
    for (int64_t c = 0; c < cout; ++c) {
      for (int64_t p = 0; p < hw; ++p) o[c * hw + p] += b.value()[c];
    }
  }
  return make_result<T>(std::move(out), {x, w, b}, [=](Node<T>& self) {
    auto& nx = *self.inputs[0];
    auto& nw = *self.inputs[1];
    auto& nbias = *self.inputs[2];
    std::vector<T> dcols(static_cast<size_t>(ck * hw));
    for (int64_t i = 0; i < nb; ++i) {
      const T* g = self.grad.raw() + i * cout * hw;
      const T* ci = cols->data() + i * ck * hw;
      if (nw.requires_grad) gemm(g, ci, nw.grad_ref().raw(), cout, hw, ck, false, true, true);
      if (nbias.requires_grad) {
        Tensor<T>& gb = nbias.grad_ref();
        for (int64_t c = 0; c < cout; ++c) {
          for (int64_t p = 0; p < hw; ++p) gb[c] += g[c * hw + p];
        }
      }
      if (nx.requires_grad) {
        gemm(nw.value.raw(), g, dcols.data(), ck, cout, hw, true, false, false);
        col2im(dcols.data(), cin, h, wd, k, pad, nx.grad_ref().raw() + i * cin * hw);
      }
    }
  });
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  Tensor<T>& running_mean, Tensor<T>& running_var, bool training, T momentum,
                  T eps) {
  const Shape& sx = x.shape();
  if (sx.size() != 4) throw DimensionError("batch_norm: expected [B,C,H,W], got " + shape_str(sx));
  const int64_t nb = sx[0], c = sx[1], hw = sx[2] * sx[3];
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c} || running_mean.shape() != Shape{c} ||
      running_var.shape() != Shape{c}) {
    shape_error("batch_norm", sx, gamma.shape());
  }
  const int64_t count = nb * hw;
  std::vector<T> mu(c), inv_std(c);
  const T* xv = x.value().raw();
  for (int64_t ch = 0; ch < c; ++ch) {
    if (training) {
      T m = 0;
      for (int64_t i = 0; i < nb; ++i) {
        for (int64_t p = 0; p < hw; ++p) m += xv[(i * c + ch) * hw + p];
      }
      m /= static_cast<T>(count);
      T v = 0;
      for (int64_t i = 0; i < nb; ++i) {
        for (int64_t p = 0; p < hw; ++p) {
          const T d = xv[(i * c + ch) * hw + p] - m;
          v += d * d;
        }
      }
      const T biased = v / static_cast<T>(count);
      const T unbiased = count > 1 ? v / static_cast<T>(count - 1) : biased;
      running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * m;
      running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * unbiased;
      mu[ch] = m;
      inv_std[ch] = T(1) / std::sqrt(biased + eps);
    } else {
      mu[ch] = running_mean[ch];
      inv_std[ch] = T(1) / std::sqrt(running_var[ch] + eps);
    }
  }
  Tensor<T> out(sx);
  auto xhat = std::make_shared<std::vector<T>>(static_cast<size_t>(x.numel()));
  for (int64_t i = 0; i < nb; ++i) {
    for (int64_t ch = 0; ch < c; ++ch) {
      for (int64_t p = 0; p < hw; ++p) {
        const int64_t idx = (i * c + ch) * hw + p;
        const T h = (xv[idx] - mu[ch]) * inv_std[ch];
        (*xhat)[idx] = h;
        out[idx] = h * gamma.value()[ch] + beta.value()[ch];
      }
    }
  }
  return make_result<T>(std::move(out), {x, gamma, beta}, [=](Node<T>& self) {
    auto& nx = *self.inputs[0];
    auto& ng = *self.inputs[1];
    auto& nbeta = *self.inputs[2];
    const T* gy = self.grad.raw();
    std::vector<T> sum_g(c, T(0)), sum_gx(c, T(0));
    for (int64_t i = 0; i < nb; ++i) {
      for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t p = 0; p < hw; ++p) {
          const int64_t idx = (i * c + ch) * hw + p;
          sum_g[ch] += gy[idx];
          sum_gx[ch] += gy[idx] * (*xhat)[idx];
        }
      }
    }
    if (ng.requires_grad) {
      for (int64_t ch = 0; ch < c; ++ch) ng.grad_ref()[ch] += sum_gx[ch];
    }
    if (nbeta.requires_grad) {
      for (int64_t ch = 0; ch < c; ++ch) nbeta.grad_ref()[ch] += sum_g[ch];
    }
    if (nx.requires_grad) {
      Tensor<T>& gx = nx.grad_ref();
      const T inv_n = T(1) / static_cast<T>(count);
      for (int64_t i = 0; i < nb; ++i) {
        for (int64_t ch = 0; ch < c; ++ch) {
          const T gam = ng.value[ch];
          for (int64_t p = 0; p < hw; ++p) {
            const int64_t idx = (i * c + ch) * hw + p;
            if (training) {
              gx[idx] += gam * inv_std[ch] *
                         (gy[idx] - inv_n * sum_g[ch] - (*xhat)[idx] * inv_n * sum_gx[ch]);
            } else {
              gx[idx] += gam * inv_std[ch] * gy[idx];
            }
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> patchify(const Var<T>& x, int64_t patch) {
  const Shape& sx = x.shape();
  if (sx.size() != 4) throw DimensionError("patchify: expected [B,C,H,W], got " + shape_str(sx));
  const int64_t nb = sx[0], c = sx[1], h = sx[2], w = sx[3];
  if (patch < 1 || h % patch != 0 || w % patch != 0) {
    throw DimensionError("patchify: image " + shape_str(sx) + " not divisible by patch size " +
                         std::to_string(patch));
  }
  const int64_t gh = h / patch, gw = w / patch;
  const int64_t feat = c * patch * patch;
  Tensor<T> out(Shape{nb, gh * gw, feat});
  // Maps output element -> input element; shared by forward and backward.
  auto index = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(out.numel()));
  int64_t o = 0;
  for (int64_t i = 0; i < nb; ++i) {
    for (int64_t py = 0; py < gh; ++py) {
      for (int64_t px = 0; px < gw; ++px) {
        for (int64_t ch = 0; ch < c; ++ch) {
          for (int64_t y = 0; y < patch; ++y) {
            for (int64_t xx = 0; xx < patch; ++xx) {
              const int64_t src = ((i * c + ch) * h + py * patch + y) * w + px * patch + xx;
              (*index)[o] = src;
              out[o++] = x.value()[src];
            }
          }
        }
      }
    }
  }
  return make_result<T>(std::move(out), {x}, [index](Node<T>& self) {
    Tensor<T>& g = self.inputs[0]->grad_ref();
    for (size_t i = 0; i < index->size(); ++i) g[(*index)[i]] += self.grad[i];
  });
}

template <typename T>
Var<T> gather_spatial(const Var<T>& map, const std::vector<int64_t>& flat_index) {
  const Shape& s = map.shape();
  if (s.size() != 4 || static_cast<int64_t>(flat_index.size()) != s[0]) {
    throw DimensionError("gather_spatial: map " + shape_str(s) + " with " +
                         std::to_string(flat_index.size()) + " indices");
  }
  const int64_t nb = s[0], c = s[1], hw = s[2] * s[3];
  for (const int64_t idx : flat_index) {
    if (idx < 0 || idx >= hw) throw DimensionError("gather_spatial: index out of range");
  }
  Tensor<T> out(Shape{nb, c});
  for (int64_t i = 0; i < nb; ++i) {
    for (int64_t ch = 0; ch < c; ++ch) out[i * c + ch] = map.value()[(i * c + ch) * hw + flat_index[i]];
  }
  return make_result<T>(std::move(out), {map}, [=](Node<T>& self) {
    Tensor<T>& g = self.inputs[0]->grad_ref();
    for (int64_t i = 0; i < nb; ++i) {
      for (int64_t ch = 0; ch < c; ++ch) g[(i * c + ch) * hw + flat_index[i]] += self.grad[i * c + ch];
    }
  });
}

#define TATRACK_INSTANTIATE_OPS(T)                                                               \
  template Var<T> add(const Var<T>&, const Var<T>&);                                             \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                             \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                             \
  template Var<T> scale(const Var<T>&, T);                                                       \
  template Var<T> add_scalar(const Var<T>&, T);                                                  \
  template Var<T> sum(const Var<T>&);                                                            \
  template Var<T> mean(const Var<T>&);                                                           \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                          \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                           \
  template Var<T> softmax_lastdim(const Var<T>&);                                                \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);                    \
  template Var<T> gelu(const Var<T>&);                                                           \
  template Var<T> relu(const Var<T>&);                                                           \
  template Var<T> sigmoid(const Var<T>&);                                                        \
  template Var<T> concat(const std::vector<Var<T>>&, int64_t);                                   \
  template std::vector<Var<T>> split(const Var<T>&, int64_t, const std::vector<int64_t>&);       \
  template Var<T> reshape(const Var<T>&, Shape);                                                 \
  template Var<T> permute(const Var<T>&, const std::vector<int64_t>&);                           \
  template Var<T> transpose(const Var<T>&, int64_t, int64_t);                                    \
  template Var<T> conv1x1(const Var<T>&, const Var<T>&, const Var<T>&);                          \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int64_t);                  \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&,            \
                             Tensor<T>&, bool, T, T);                                            \
  template Var<T> patchify(const Var<T>&, int64_t);                                              \
  template Var<T> gather_spatial(const Var<T>&, const std::vector<int64_t>&);

TATRACK_INSTANTIATE_OPS(float)
TATRACK_INSTANTIATE_OPS(double)

#undef TATRACK_INSTANTIATE_OPS

}  // namespace tatrack::core
