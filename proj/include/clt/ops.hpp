#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "clt/tensor.hpp"

namespace clt {

// Multiply-accumulate instrumentation. Forward matrix kernels report their
// MAC volume here; the profiler opens a Scope around a forward pass and
// reads the total back.
namespace macs {

inline thread_local bool enabled = false;
inline thread_local std::uint64_t count = 0;

inline void add(std::uint64_t n) {
  if (enabled) count += n;
}

struct Scope {
  Scope() : prev_enabled(enabled), prev_count(count) {
    enabled = true;
    count = 0;
  }
  ~Scope() {
    enabled = prev_enabled;
    count = prev_count;
  }
  std::uint64_t value() const { return count; }
  bool prev_enabled;
  std::uint64_t prev_count;
};

}  // namespace macs

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// C (+)= A[m,k] * B[k,n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n,
             bool accumulate) {
  ConstMatMap<T> A(a, m, k);
  ConstMatMap<T> B(b, k, n);
  MatMap<T> C(c, m, n);
  if (accumulate)
    C.noalias() += A * B;
  else
    C.noalias() = A * B;
}

// C (+)= A[m,k] * B[n,k]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n,
             bool accumulate) {
  ConstMatMap<T> A(a, m, k);
  ConstMatMap<T> B(b, n, k);
  MatMap<T> C(c, m, n);
  if (accumulate)
    C.noalias() += A * B.transpose();
  else
    C.noalias() = A * B.transpose();
}

// C (+)= A[k,m]^T * B[k,n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n,
             bool accumulate) {
  ConstMatMap<T> A(a, k, m);
  ConstMatMap<T> B(b, k, n);
  MatMap<T> C(c, m, n);
  if (accumulate)
    C.noalias() += A.transpose() * B;
  else
    C.noalias() = A.transpose() * B;
}

template <typename T>
bool recording(std::initializer_list<const Tensor<T>*> inputs) {
  if (!Tape<T>::active()) return false;
  for (const Tensor<T>* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
void mark_output(Tensor<T>& out) {
  out.set_requires_grad(true);
  out.ensure_grad();
}

inline void check_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise arithmetic
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto av = a.data(), bv = b.data();
  auto ov = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) ov[i] = av[i] + bv[i];
  if (detail::recording<T>({&a, &b})) {
    detail::mark_output(out);
    Tape<T>::active()->record([a = a, b = b, out = out]() mutable {
      auto og = out.grad();
      if (a.requires_grad()) {
        auto g = a.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i];
      }
      if (b.requires_grad()) {
        auto g = b.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto av = a.data(), bv = b.data();
  auto ov = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) ov[i] = av[i] - bv[i];
  if (detail::recording<T>({&a, &b})) {
    detail::mark_output(out);
    Tape<T>::active()->record([a = a, b = b, out = out]() mutable {
      auto og = out.grad();
      if (a.requires_grad()) {
        auto g = a.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i];
      }
      if (b.requires_grad()) {
        auto g = b.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= og[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto av = a.data(), bv = b.data();
  auto ov = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) ov[i] = av[i] * bv[i];
  if (detail::recording<T>({&a, &b})) {
    detail::mark_output(out);
    Tape<T>::active()->record([a = a, b = b, out = out]() mutable {
      auto og = out.grad();
      auto av2 = a.data();
      auto bv2 = b.data();
      if (a.requires_grad()) {
        auto g = a.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i] * bv2[i];
      }
      if (b.requires_grad()) {
        auto g = b.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i] * av2[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto av = a.data();
  auto ov = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) ov[i] = av[i] * c;
  if (detail::recording<T>({&a})) {
    detail::mark_output(out);
    Tape<T>::active()->record([a = a, out = out, c = c]() mutable {
      auto og = out.grad();
      auto g = a.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i] * c;
    });
  }
  return out;
}

// x[..., h] + bias[h]
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  if (bias.rank() != 1 || x.shape().back() != bias.dim(0)) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match last axis of " +
                     shape_str(x.shape()));
  }
  const std::int64_t h = bias.dim(0);
  const std::int64_t rows = x.size() / h;
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto xv = x.data(), bv = bias.data();
  auto ov = out.data();
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t j = 0; j < h; ++j) ov[r * h + j] = xv[r * h + j] + bv[j];
  if (detail::recording<T>({&x, &bias})) {
    detail::mark_output(out);
    Tape<T>::active()->record([x = x, bias = bias, out = out, rows = rows, h = h]() mutable {
      auto og = out.grad();
      if (x.requires_grad()) {
        auto g = x.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i];
      }
      if (bias.requires_grad()) {
        auto g = bias.grad_mut();
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t j = 0; j < h; ++j) g[j] += og[r * h + j];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// structural
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
  if (numel(new_shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(new_shape));
  }
  Tensor<T> out = Tensor<T>::from(std::move(new_shape),
                                  std::vector<T>(x.data().begin(), x.data().end()));
  if (detail::recording<T>({&x})) {
    detail::mark_output(out);
    Tape<T>::active()->record([x = x, out = out]() mutable {
      auto og = out.grad();
      auto g = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i];
    });
  }
  return out;
}

namespace detail {

inline std::vector<std::int64_t> row_major_strides(const Shape& shape) {
  std::vector<std::int64_t> s(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) s[i] = s[i + 1] * shape[i + 1];
  return s;
}

// flat permutation map for an axis swap; out_to_in[i] is the source index
inline std::vector<std::int64_t> axis_swap_map(const Shape& in_shape, std::size_t a0,
                                               std::size_t a1) {
  Shape out_shape = in_shape;
  std::swap(out_shape[a0], out_shape[a1]);
  auto in_strides = row_major_strides(in_shape);
  auto out_strides = row_major_strides(out_shape);
  const std::int64_t n = numel(in_shape);
  std::vector<std::int64_t> map(static_cast<std::size_t>(n));
  std::vector<std::int64_t> idx(in_shape.size(), 0);
  for (std::int64_t flat = 0; flat < n; ++flat) {
    std::int64_t rem = flat;
    for (std::size_t d = 0; d < out_shape.size(); ++d) {
      idx[d] = rem / out_strides[d];
      rem %= out_strides[d];
    }
    std::swap(idx[a0], idx[a1]);
    std::int64_t src = 0;
    for (std::size_t d = 0; d < in_shape.size(); ++d) src += idx[d] * in_strides[d];
    map[static_cast<std::size_t>(flat)] = src;
  }
  return map;
}

}  // namespace detail

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, std::size_t axis0, std::size_t axis1) {
  if (axis0 >= x.rank() || axis1 >= x.rank()) {
    throw ShapeError("transpose: axis out of range for " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  std::swap(out_shape[axis0], out_shape[axis1]);
  auto map = detail::axis_swap_map(x.shape(), axis0, axis1);
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  auto xv = x.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < map.size(); ++i) ov[i] = xv[map[i]];
  if (detail::recording<T>({&x})) {
    detail::mark_output(out);
    Tape<T>::active()->record([x = x, out = out, map = map]() mutable {
      auto og = out.grad();
      auto g = x.grad_mut();
      for (std::size_t i = 0; i < map.size(); ++i) g[map[i]] += og[i];
    });
  }
  return out;
}

// out[b, :] = x[b, 0, :] for x of shape [B, L, h]
template <typename T>
Tensor<T> take_first_token(const Tensor<T>& x) {
  if (x.rank() != 3) throw ShapeError("take_first_token: expected rank-3 input, got " + shape_str(x.shape()));
  const std::int64_t B = x.dim(0), L = x.dim(1), h = x.dim(2);
  Tensor<T> out = Tensor<T>::zeros({B, h});
  auto xv = x.data();
  auto ov = out.data();
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t j = 0; j < h; ++j) ov[b * h + j] = xv[b * L * h + j];
  if (detail::recording<T>({&x})) {
    detail::mark_output(out);
    Tape<T>::active()->record([x = x, out = out, B = B, L = L, h = h]() mutable {
      auto og = out.grad();
      auto g = x.grad_mut();
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t j = 0; j < h; ++j) g[b * L * h + j] += og[b * h + j];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// matrix products
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  macs::add(static_cast<std::uint64_t>(m) * k * n);
  Tensor<T> out = Tensor<T>::zeros({m, n});
  detail::gemm_nn(a.data().data(), b.data().data(), out.data().data(), m, k, n, false);
  if (detail::recording<T>({&a, &b})) {
    detail::mark_output(out);
    Tape<T>::active()->record([a = a, b = b, out = out, m = m, k = k, n = n]() mutable {
      const T* og = out.grad().data();
      if (a.requires_grad()) {
        detail::gemm_nt(og, b.data().data(), a.grad_mut().data(), m, n, k, true);
      }
      if (b.requires_grad()) {
        detail::gemm_tn(a.data().data(), og, b.grad_mut().data(), k, m, n, true);
      }
    });
  }
  return out;
}

// a[m,k] * b[n,k]^T; used for decoders tied to an embedding table
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw ShapeError("matmul_nt: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()) + "^T");
  }
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  macs::add(static_cast<std::uint64_t>(m) * k * n);
  Tensor<T> out = Tensor<T>::zeros({m, n});
  detail::gemm_nt(a.data().data(), b.data().data(), out.data().data(), m, k, n, false);
  if (detail::recording<T>({&a, &b})) {
    detail::mark_output(out);
    Tape<T>::active()->record([a = a, b = b, out = out, m = m, k = k, n = n]() mutable {
      const T* og = out.grad().data();
      if (a.requires_grad()) {
        detail::gemm_nn(og, b.data().data(), a.grad_mut().data(), m, n, k, true);
      }
      if (b.requires_grad()) {
        detail::gemm_tn(og, a.data().data(), b.grad_mut().data(), n, m, k, true);
      }
    });
  }
  return out;
}

// batched matmul over shared leading dims: [..., m, k] x [..., k, n]
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 3 || a.rank() != b.rank()) {
    throw ShapeError("bmm: expected equal ranks >= 3, got " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  for (std::size_t i = 0; i + 2 < a.rank(); ++i) {
    if (a.dim(i) != b.dim(i)) {
      throw ShapeError("bmm: leading dims differ: " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
    }
  }
  const std::size_t r = a.rank();
  const std::int64_t m = a.dim(r - 2), k = a.dim(r - 1), n = b.dim(r - 1);
  if (b.dim(r - 2) != k) {
    throw ShapeError("bmm: inner dims differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::int64_t batch = 1;
  for (std::size_t i = 0; i + 2 < r; ++i) batch *= a.dim(i);
  macs::add(static_cast<std::uint64_t>(batch) * m * k * n);
  Shape out_shape(a.shape().begin(), a.shape().end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  const T* av = a.data().data();
  const T* bv = b.data().data();
  T* ov = out.data().data();
  for (std::int64_t s = 0; s < batch; ++s) {
    detail::gemm_nn(av + s * m * k, bv + s * k * n, ov + s * m * n, m, k, n, false);
  }
  if (detail::recording<T>({&a, &b})) {
    detail::mark_output(out);
    Tape<T>::active()->record([a = a, b = b, out = out, batch = batch, m = m, k = k, n = n]() mutable {
      const T* og = out.grad().data();
      if (a.requires_grad()) {
        T* ag = a.grad_mut().data();
        const T* bv2 = b.data().data();
        for (std::int64_t s = 0; s < batch; ++s) {
          detail::gemm_nt(og + s * m * n, bv2 + s * k * n, ag + s * m * k, m, n, k, true);
        }
      }
      if (b.requires_grad()) {
        T* bg = b.grad_mut().data();
        const T* av2 = a.data().data();
        for (std::int64_t s = 0; s < batch; ++s) {
          detail::gemm_tn(av2 + s * m * k, og + s * m * n, bg + s * k * n, k, m, n, true);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (detail::recording<T>({&x})) {
    detail::mark_output(out);
    Tape<T>::active()->record([x = x, out = out]() mutable {
      T og = out.grad()[0];
      auto g = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += og;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  const T inv = T(1) / static_cast<T>(x.size());
  Tensor<T> out = Tensor<T>::scalar(acc * inv);
  if (detail::recording<T>({&x})) {
    detail::mark_output(out);
    Tape<T>::active()->record([x = x, out = out, inv = inv]() mutable {
      T og = out.grad()[0] * inv;
      auto g = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += og;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// activations and normalization
// ---------------------------------------------------------------------------

namespace detail {

struct AxisFibers {
  std::int64_t outer, len, inner;
};

inline AxisFibers axis_fibers(const Shape& shape, int axis) {
  const int r = static_cast<int>(shape.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("axis out of range for " + shape_str(shape));
  AxisFibers f{1, shape[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) f.outer *= shape[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < r; ++i) f.inner *= shape[static_cast<std::size_t>(i)];
  return f;
}

}  // namespace detail

// numerically stable softmax along `axis` (max subtraction per fiber)
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis = -1) {
  auto f = detail::axis_fibers(x.shape(), axis);
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto xv = x.data();
  auto ov = out.data();
  for (std::int64_t o = 0; o < f.outer; ++o) {
    for (std::int64_t i = 0; i < f.inner; ++i) {
      const std::int64_t base = o * f.len * f.inner + i;
      T mx = xv[base];
      for (std::int64_t j = 1; j < f.len; ++j) mx = std::max(mx, xv[base + j * f.inner]);
      T denom = T(0);
      for (std::int64_t j = 0; j < f.len; ++j) {
        T e = std::exp(xv[base + j * f.inner] - mx);
        ov[base + j * f.inner] = e;
        denom += e;
      }
      for (std::int64_t j = 0; j < f.len; ++j) ov[base + j * f.inner] /= denom;
    }
  }
  if (detail::recording<T>({&x})) {
    detail::mark_output(out);
    Tape<T>::active()->record([x = x, out = out, f = f]() mutable {
      auto og = out.grad();
      auto yv = out.data();
      auto g = x.grad_mut();
      for (std::int64_t o = 0; o < f.outer; ++o) {
        for (std::int64_t i = 0; i < f.inner; ++i) {
          const std::int64_t base = o * f.len * f.inner + i;
          T dot = T(0);
          for (std::int64_t j = 0; j < f.len; ++j) dot += og[base + j * f.inner] * yv[base + j * f.inner];
          for (std::int64_t j = 0; j < f.len; ++j) {
            const std::int64_t p = base + j * f.inner;
            g[p] += yv[p] * (og[p] - dot);
          }
        }
      }
    });
  }
  return out;
}

// per-row normalization over the last axis with population variance
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  const std::int64_t h = x.shape().back();
  if (gain.rank() != 1 || gain.dim(0) != h || bias.rank() != 1 || bias.dim(0) != h) {
    throw ShapeError("layer_norm: gain/bias must be [" + std::to_string(h) + "]");
  }
  const std::int64_t rows = x.size() / h;
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  std::vector<T> xhat(static_cast<std::size_t>(x.size()));
  std::vector<T> inv_std(static_cast<std::size_t>(rows));
  auto xv = x.data();
  auto gv = gain.data();
  auto bv = bias.data();
  auto ov = out.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int64_t base = r * h;
    T mu = T(0);
    for (std::int64_t j = 0; j < h; ++j) mu += xv[base + j];
    mu /= static_cast<T>(h);
    T var = T(0);
    for (std::int64_t j = 0; j < h; ++j) {
      T d = xv[base + j] - mu;
      var += d * d;
    }
    var /= static_cast<T>(h);
    const T inv = T(1) / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = inv;
    for (std::int64_t j = 0; j < h; ++j) {
      T xh = (xv[base + j] - mu) * inv;
      xhat[static_cast<std::size_t>(base + j)] = xh;
      ov[base + j] = gv[j] * xh + bv[j];
    }
  }
  if (detail::recording<T>({&x, &gain, &bias})) {
    detail::mark_output(out);
    Tape<T>::active()->record([x = x, gain = gain, bias = bias, out = out, xhat = std::move(xhat), inv_std = std::move(inv_std), rows = rows, h = h]() mutable {
      auto og = out.grad();
      auto gv2 = gain.data();
      if (x.requires_grad()) {
        auto g = x.grad_mut();
        for (std::int64_t r = 0; r < rows; ++r) {
          const std::int64_t base = r * h;
          T mean_dxhat = T(0), mean_dxhat_xhat = T(0);
          for (std::int64_t j = 0; j < h; ++j) {
            T dxh = og[base + j] * gv2[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xhat[static_cast<std::size_t>(base + j)];
          }
          mean_dxhat /= static_cast<T>(h);
          mean_dxhat_xhat /= static_cast<T>(h);
          const T inv = inv_std[static_cast<std::size_t>(r)];
          for (std::int64_t j = 0; j < h; ++j) {
            T dxh = og[base + j] * gv2[j];
            g[base + j] += inv * (dxh - mean_dxhat -
                                  xhat[static_cast<std::size_t>(base + j)] * mean_dxhat_xhat);
          }
        }
      }
      if (gain.requires_grad()) {
        auto g = gain.grad_mut();
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t j = 0; j < h; ++j)
            g[j] += og[r * h + j] * xhat[static_cast<std::size_t>(r * h + j)];
      }
      if (bias.requires_grad()) {
        auto g = bias.grad_mut();
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t j = 0; j < h; ++j) g[j] += og[r * h + j];
      }
    });
  }
  return out;
}

namespace detail {
template <typename T>
inline constexpr T kGeluC = T(0.7978845608028654);  // sqrt(2/pi)
template <typename T>
inline constexpr T kGeluA = T(0.044715);
}  // namespace detail

// tanh form of x * Phi(x)
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto xv = x.data();
  auto ov = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) {
    T v = xv[i];
    T u = detail::kGeluC<T> * (v + detail::kGeluA<T> * v * v * v);
    ov[i] = T(0.5) * v * (T(1) + std::tanh(u));
  }
  if (detail::recording<T>({&x})) {
    detail::mark_output(out);
    Tape<T>::active()->record([x = x, out = out]() mutable {
      auto og = out.grad();
      auto xv2 = x.data();
      auto g = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) {
        T v = xv2[i];
        T u = detail::kGeluC<T> * (v + detail::kGeluA<T> * v * v * v);
        T th = std::tanh(u);
        T du = detail::kGeluC<T> * (T(1) + T(3) * detail::kGeluA<T> * v * v);
        g[i] += og[i] * (T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th * th) * du);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> tanh_act(const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto xv = x.data();
  auto ov = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) ov[i] = std::tanh(xv[i]);
  if (detail::recording<T>({&x})) {
    detail::mark_output(out);
    Tape<T>::active()->record([x = x, out = out]() mutable {
      auto og = out.grad();
      auto yv = out.data();
      auto g = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i] * (T(1) - yv[i] * yv[i]);
    });
  }
  return out;
}

// inverted dropout; identity when not training or rate == 0
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T rate, Rng& rng, bool training) {
  if (!training || rate <= T(0)) return x;
  if (rate >= T(1)) throw ValueError("dropout: rate must be < 1");
  const T keep_scale = T(1) / (T(1) - rate);
  std::vector<T> mask(static_cast<std::size_t>(x.size()));
  for (T& m : mask) m = (rng.uniform() >= static_cast<double>(rate)) ? keep_scale : T(0);
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto xv = x.data();
  auto ov = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) ov[i] = xv[i] * mask[static_cast<std::size_t>(i)];
  if (detail::recording<T>({&x})) {
    detail::mark_output(out);
    Tape<T>::active()->record([x = x, out = out, mask = std::move(mask)]() mutable {
      auto og = out.grad();
      auto g = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i] * mask[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// gather / attention masking
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const std::int32_t> ids) {
  if (table.rank() != 2) throw ShapeError("embedding_lookup: table must be rank 2");
  const std::int64_t V = table.dim(0), h = table.dim(1);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= V) {
      throw ValueError("embedding_lookup: id " + std::to_string(ids[i]) + " out of range [0, " +
                       std::to_string(V) + ")");
    }
  }
  Tensor<T> out = Tensor<T>::zeros({static_cast<std::int64_t>(ids.size()), h});
  auto tv = table.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const T* src = tv.data() + static_cast<std::int64_t>(ids[i]) * h;
    std::copy(src, src + h, ov.data() + static_cast<std::int64_t>(i) * h);
  }
  if (detail::recording<T>({&table})) {
    detail::mark_output(out);
    std::vector<std::int32_t> ids_copy(ids.begin(), ids.end());
    Tape<T>::active()->record([table = table, out = out, ids_copy = std::move(ids_copy), h = h]() mutable {
      auto og = out.grad();
      auto g = table.grad_mut();
      for (std::size_t i = 0; i < ids_copy.size(); ++i) {
        T* dst = g.data() + static_cast<std::int64_t>(ids_copy[i]) * h;
        const T* src = og.data() + static_cast<std::int64_t>(i) * h;
        for (std::int64_t j = 0; j < h; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

namespace detail {
template <typename T>
inline constexpr T kMaskFill = T(-1e9);
}

// adds a large negative bias to attention scores at padded key positions;
// scores [B, H, L, L], key_mask row-major [B, L] with 1 = content
template <typename T>
Tensor<T> add_key_padding_mask(const Tensor<T>& scores, std::span<const std::uint8_t> key_mask) {
  if (scores.rank() != 4) throw ShapeError("add_key_padding_mask: scores must be [B,H,L,L]");
  const std::int64_t B = scores.dim(0), H = scores.dim(1), Lq = scores.dim(2), Lk = scores.dim(3);
  if (static_cast<std::int64_t>(key_mask.size()) != B * Lk) {
    throw ShapeError("add_key_padding_mask: mask length " + std::to_string(key_mask.size()) +
                     " does not match B*L = " + std::to_string(B * Lk));
  }
  Tensor<T> out = Tensor<T>::zeros(scores.shape());
  auto sv = scores.data();
  auto ov = out.data();
  std::int64_t p = 0;
  for (std::int64_t b = 0; b < B; ++b) {
    const std::uint8_t* mrow = key_mask.data() + b * Lk;
    for (std::int64_t hh = 0; hh < H; ++hh) {
      for (std::int64_t q = 0; q < Lq; ++q) {
        for (std::int64_t k = 0; k < Lk; ++k, ++p) {
          ov[p] = sv[p] + (mrow[k] ? T(0) : detail::kMaskFill<T>);
        }
      }
    }
  }
  if (detail::recording<T>({&scores})) {
    detail::mark_output(out);
    Tape<T>::active()->record([scores = scores, out = out]() mutable {
      auto og = out.grad();
      auto g = scores.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i];
    });
  }
  return out;
}

}  // namespace clt
