#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "clt/ops.hpp"
#include "clt/tensor.hpp"

namespace clt {

// mean of squared differences over all elements
template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "mse");
  auto av = a.data(), bv = b.data();
  T acc = T(0);
  for (std::int64_t i = 0; i < a.size(); ++i) {
    T d = av[i] - bv[i];
    acc += d * d;
  }
  const T inv = T(1) / static_cast<T>(a.size());
  Tensor<T> out = Tensor<T>::scalar(acc * inv);
  if (detail::recording<T>({&a, &b})) {
    detail::mark_output(out);
    Tape<T>::active()->record([a = a, b = b, out = out, inv = inv]() mutable {
      T og = out.grad()[0];
      auto av2 = a.data();
      auto bv2 = b.data();
      if (a.requires_grad()) {
        auto g = a.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og * T(2) * (av2[i] - bv2[i]) * inv;
      }
      if (b.requires_grad()) {
        auto g = b.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= og * T(2) * (av2[i] - bv2[i]) * inv;
      }
    });
  }
  return out;
}

// mean of squared differences over elements where mask != 0; 0 if none
template <typename T>
Tensor<T> masked_mse(const Tensor<T>& a, const Tensor<T>& b, std::span<const std::uint8_t> mask) {
  detail::check_same_shape(a.shape(), b.shape(), "masked_mse");
  if (static_cast<std::int64_t>(mask.size()) != a.size()) {
    throw ShapeError("masked_mse: mask length " + std::to_string(mask.size()) +
                     " does not match tensor of " + std::to_string(a.size()) + " elements");
  }
  auto av = a.data(), bv = b.data();
  T acc = T(0);
  std::int64_t count = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    T d = av[i] - bv[i];
    acc += d * d;
    ++count;
  }
  if (count == 0) return Tensor<T>::scalar(T(0));
  const T inv = T(1) / static_cast<T>(count);
  Tensor<T> out = Tensor<T>::scalar(acc * inv);
  if (detail::recording<T>({&a, &b})) {
    detail::mark_output(out);
    std::vector<std::uint8_t> m(mask.begin(), mask.end());
    Tape<T>::active()->record([a = a, b = b, out = out, inv = inv, m = std::move(m)]() mutable {
      T og = out.grad()[0];
      auto av2 = a.data();
      auto bv2 = b.data();
      if (a.requires_grad()) {
        auto g = a.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i)
          if (m[i]) g[i] += og * T(2) * (av2[i] - bv2[i]) * inv;
      }
      if (b.requires_grad()) {
        auto g = b.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i)
          if (m[i]) g[i] -= og * T(2) * (av2[i] - bv2[i]) * inv;
      }
    });
  }
  return out;
}

// mean over fibers along `axis` of sum p * (ln p - ln q), with 0*ln0 := 0.
// p and q must be normalized along the axis to within 1e-6.
template <typename T>
Tensor<T> kl_divergence(const Tensor<T>& p, const Tensor<T>& q, int axis = -1) {
  detail::check_same_shape(p.shape(), q.shape(), "kl_divergence");
  auto f = detail::axis_fibers(p.shape(), axis);
  auto pv = p.data(), qv = q.data();
  const T tol = T(1e-6);
  T acc = T(0);
  std::int64_t row = 0;
  for (std::int64_t o = 0; o < f.outer; ++o) {
    for (std::int64_t i = 0; i < f.inner; ++i, ++row) {
      const std::int64_t base = o * f.len * f.inner + i;
      T sp = T(0), sq = T(0);
      for (std::int64_t j = 0; j < f.len; ++j) {
        sp += pv[base + j * f.inner];
        sq += qv[base + j * f.inner];
      }
      if (std::fabs(static_cast<double>(sp - T(1))) > static_cast<double>(tol)) {
        throw ValueError("kl_divergence: row " + std::to_string(row) + " of p sums to " +
                         std::to_string(static_cast<double>(sp)) + ", not normalized within 1e-6");
      }
      if (std::fabs(static_cast<double>(sq - T(1))) > static_cast<double>(tol)) {
        throw ValueError("kl_divergence: row " + std::to_string(row) + " of q sums to " +
                         std::to_string(static_cast<double>(sq)) + ", not normalized within 1e-6");
      }
      for (std::int64_t j = 0; j < f.len; ++j) {
        T pj = pv[base + j * f.inner];
        T qj = qv[base + j * f.inner];
        if (pj > T(0)) {
          if (qj <= T(0)) {
            throw ValueError("kl_divergence: q is 0 where p > 0 at row " + std::to_string(row) +
                             ", index " + std::to_string(j));
          }
          acc += pj * (std::log(pj) - std::log(qj));
        }
      }
    }
  }
  const std::int64_t rows = f.outer * f.inner;
  const T inv = T(1) / static_cast<T>(rows);
  Tensor<T> out = Tensor<T>::scalar(acc * inv);
  if (detail::recording<T>({&p, &q})) {
    detail::mark_output(out);
    Tape<T>::active()->record([p = p, q = q, out = out, f = f, inv = inv]() mutable {
      T og = out.grad()[0] * inv;
      auto pv2 = p.data();
      auto qv2 = q.data();
      for (std::int64_t o = 0; o < f.outer; ++o) {
        for (std::int64_t i = 0; i < f.inner; ++i) {
          const std::int64_t base = o * f.len * f.inner + i;
          for (std::int64_t j = 0; j < f.len; ++j) {
            const std::int64_t idx = base + j * f.inner;
            T pj = pv2[idx], qj = qv2[idx];
            if (pj <= T(0)) continue;
            if (p.requires_grad()) p.grad_mut()[idx] += og * (std::log(pj) - std::log(qj) + T(1));
            if (q.requires_grad()) q.grad_mut()[idx] -= og * pj / qj;
          }
        }
      }
    });
  }
  return out;
}

namespace detail {

template <typename T>
struct CosineRow {
  T dot, su, sv, denom, cos;
};

template <typename T>
CosineRow<T> cosine_row(const T* u, const T* v, std::int64_t h) {
  CosineRow<T> r{T(0), T(0), T(0), T(0), T(0)};
  for (std::int64_t j = 0; j < h; ++j) {
    r.dot += u[j] * v[j];
    r.su += u[j] * u[j];
    r.sv += v[j] * v[j];
  }
  // sqrt(su * sv) rather than sqrt(su) * sqrt(sv): for bitwise-equal rows
  // this evaluates to su exactly, so the loss is exactly 0
  r.denom = std::sqrt(r.su * r.sv);
  r.cos = r.dot / r.denom;
  return r;
}

}  // namespace detail

// mean over rows (last axis = row) of 1 - cos(u_row, v_row); rows with a
// zero norm are an error. With row_mask non-empty, only rows with mask != 0
// contribute and the mean is over those rows.
template <typename T>
Tensor<T> cosine_embedding_loss(const Tensor<T>& u, const Tensor<T>& v,
                                std::span<const std::uint8_t> row_mask = {}) {
  detail::check_same_shape(u.shape(), v.shape(), "cosine_embedding_loss");
  const std::int64_t h = u.shape().back();
  const std::int64_t rows = u.size() / h;
  if (!row_mask.empty() && static_cast<std::int64_t>(row_mask.size()) != rows) {
    throw ShapeError("cosine_embedding_loss: row mask length " + std::to_string(row_mask.size()) +
                     " does not match " + std::to_string(rows) + " rows");
  }
  auto uv = u.data(), vv = v.data();
  T acc = T(0);
  std::int64_t count = 0;
  for (std::int64_t r = 0; r < rows; ++r) {
    if (!row_mask.empty() && !row_mask[static_cast<std::size_t>(r)]) continue;
    auto cr = detail::cosine_row(uv.data() + r * h, vv.data() + r * h, h);
    if (cr.su == T(0) || cr.sv == T(0)) {
      throw ValueError("cosine_embedding_loss: zero-norm row " + std::to_string(r));
    }
    acc += T(1) - cr.cos;
    ++count;
  }
  if (count == 0) return Tensor<T>::scalar(T(0));
  const T inv = T(1) / static_cast<T>(count);
  Tensor<T> out = Tensor<T>::scalar(acc * inv);
  if (detail::recording<T>({&u, &v})) {
    detail::mark_output(out);
    std::vector<std::uint8_t> m(row_mask.begin(), row_mask.end());
    Tape<T>::active()->record([u = u, v = v, out = out, inv = inv, h = h, rows = rows, m = std::move(m)]() mutable {
      T og = out.grad()[0] * inv;
      auto uv2 = u.data();
      auto vv2 = v.data();
      for (std::int64_t r = 0; r < rows; ++r) {
        if (!m.empty() && !m[static_cast<std::size_t>(r)]) continue;
        const T* ur = uv2.data() + r * h;
        const T* vr = vv2.data() + r * h;
        auto cr = detail::cosine_row(ur, vr, h);
        if (u.requires_grad()) {
          auto g = u.grad_mut();
          for (std::int64_t j = 0; j < h; ++j)
            g[r * h + j] -= og * (vr[j] / cr.denom - cr.cos * ur[j] / cr.su);
        }
        if (v.requires_grad()) {
          auto g = v.grad_mut();
          for (std::int64_t j = 0; j < h; ++j)
            g[r * h + j] -= og * (ur[j] / cr.denom - cr.cos * vr[j] / cr.sv);
        }
      }
    });
  }
  return out;
}

namespace detail {

// log-softmax of one row with max subtraction; writes into `out`
template <typename T>
void log_softmax_row(const T* x, T* out, std::int64_t n) {
  T mx = x[0];
  for (std::int64_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  T denom = T(0);
  for (std::int64_t j = 0; j < n; ++j) denom += std::exp(x[j] - mx);
  const T lse = mx + std::log(denom);
  for (std::int64_t j = 0; j < n; ++j) out[j] = x[j] - lse;
}

}  // namespace detail

// mean negative log-softmax probability of the label over rows whose label
// is not `ignore_index`; 0 with no gradient when every row is ignored
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> labels,
                        std::int32_t ignore_index = kIgnoreIndex) {
  if (logits.rank() != 2) {
    throw ShapeError("cross_entropy: logits must be [n, C], got " + shape_str(logits.shape()));
  }
  const std::int64_t n = logits.dim(0), C = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  }
  auto lv = logits.data();
  std::vector<T> logp(static_cast<std::size_t>(C));
  T acc = T(0);
  std::int64_t count = 0;
  for (std::int64_t r = 0; r < n; ++r) {
    const std::int32_t y = labels[static_cast<std::size_t>(r)];
    if (y == ignore_index) continue;
    if (y < 0 || y >= C) {
      throw ValueError("cross_entropy: label " + std::to_string(y) + " out of range [0, " +
                       std::to_string(C) + ") at row " + std::to_string(r));
    }
    detail::log_softmax_row(lv.data() + r * C, logp.data(), C);
    acc -= logp[static_cast<std::size_t>(y)];
    ++count;
  }
  if (count == 0) return Tensor<T>::scalar(T(0));
  const T inv = T(1) / static_cast<T>(count);
  Tensor<T> out = Tensor<T>::scalar(acc * inv);
  if (detail::recording<T>({&logits})) {
    detail::mark_output(out);
    std::vector<std::int32_t> labels_copy(labels.begin(), labels.end());
    Tape<T>::active()->record(
        [logits = logits, out = out, labels_copy = std::move(labels_copy), n = n, C = C, inv = inv,
         ignore_index = ignore_index]() mutable {
          T og = out.grad()[0] * inv;
          auto lv2 = logits.data();
          auto g = logits.grad_mut();
          std::vector<T> lp(static_cast<std::size_t>(C));
          for (std::int64_t r = 0; r < n; ++r) {
            const std::int32_t y = labels_copy[static_cast<std::size_t>(r)];
            if (y == ignore_index) continue;
            detail::log_softmax_row(lv2.data() + r * C, lp.data(), C);
            for (std::int64_t j = 0; j < C; ++j) {
              T p = std::exp(lp[static_cast<std::size_t>(j)]);
              g[r * C + j] += og * (p - (j == y ? T(1) : T(0)));
            }
          }
        });
  }
  return out;
}

// KL(softmax(teacher/T) || softmax(student/T)) * T^2, averaged over rows
// with mask != 0 (all rows when the mask is empty). Computed from logits via
// log-softmax; gradient flows to the student side only.
template <typename T>
Tensor<T> soft_target_kl(const Tensor<T>& student_logits, const Tensor<T>& teacher_logits,
                         T temperature, std::span<const std::uint8_t> row_mask = {}) {
  detail::check_same_shape(student_logits.shape(), teacher_logits.shape(), "soft_target_kl");
  if (temperature <= T(0)) throw ValueError("soft_target_kl: temperature must be positive");
  if (student_logits.rank() != 2) {
    throw ShapeError("soft_target_kl: logits must be [n, C], got " +
                     shape_str(student_logits.shape()));
  }
  const std::int64_t n = student_logits.dim(0), C = student_logits.dim(1);
  if (!row_mask.empty() && static_cast<std::int64_t>(row_mask.size()) != n) {
    throw ShapeError("soft_target_kl: row mask length " + std::to_string(row_mask.size()) +
                     " does not match " + std::to_string(n) + " rows");
  }
  auto sv = student_logits.data();
  auto tv = teacher_logits.data();
  const T invT = T(1) / temperature;
  std::vector<T> srow(static_cast<std::size_t>(C)), trow(static_cast<std::size_t>(C));
  std::vector<T> slp(static_cast<std::size_t>(C)), tlp(static_cast<std::size_t>(C));
  T acc = T(0);
  std::int64_t count = 0;
  for (std::int64_t r = 0; r < n; ++r) {
    if (!row_mask.empty() && !row_mask[static_cast<std::size_t>(r)]) continue;
    for (std::int64_t j = 0; j < C; ++j) {
      srow[static_cast<std::size_t>(j)] = sv[r * C + j] * invT;
      trow[static_cast<std::size_t>(j)] = tv[r * C + j] * invT;
    }
    detail::log_softmax_row(srow.data(), slp.data(), C);
    detail::log_softmax_row(trow.data(), tlp.data(), C);
    for (std::int64_t j = 0; j < C; ++j) {
      T p = std::exp(tlp[static_cast<std::size_t>(j)]);
      acc += p * (tlp[static_cast<std::size_t>(j)] - slp[static_cast<std::size_t>(j)]);
    }
    ++count;
  }
  if (count == 0) return Tensor<T>::scalar(T(0));
  const T scale_out = temperature * temperature / static_cast<T>(count);
  Tensor<T> out = Tensor<T>::scalar(acc * scale_out);
  if (detail::recording<T>({&student_logits})) {
    detail::mark_output(out);
    std::vector<std::uint8_t> m(row_mask.begin(), row_mask.end());
    Tape<T>::active()->record([student_logits = student_logits, teacher_logits = teacher_logits, out = out, n = n, C = C, invT = invT, temperature = temperature, count = count, m = std::move(m)]() mutable {
      // d/ds of T^2 * KL = (T / count) * (softmax(s/T) - softmax(t/T))
      T og = out.grad()[0] * temperature / static_cast<T>(count);
      auto sv2 = student_logits.data();
      auto tv2 = teacher_logits.data();
      auto g = student_logits.grad_mut();
      std::vector<T> srow2(static_cast<std::size_t>(C)), trow2(static_cast<std::size_t>(C));
      std::vector<T> slp2(static_cast<std::size_t>(C)), tlp2(static_cast<std::size_t>(C));
      for (std::int64_t r = 0; r < n; ++r) {
        if (!m.empty() && !m[static_cast<std::size_t>(r)]) continue;
        for (std::int64_t j = 0; j < C; ++j) {
          srow2[static_cast<std::size_t>(j)] = sv2[r * C + j] * invT;
          trow2[static_cast<std::size_t>(j)] = tv2[r * C + j] * invT;
        }
        detail::log_softmax_row(srow2.data(), slp2.data(), C);
        detail::log_softmax_row(trow2.data(), tlp2.data(), C);
        for (std::int64_t j = 0; j < C; ++j) {
          T qs = std::exp(slp2[static_cast<std::size_t>(j)]);
          T pt = std::exp(tlp2[static_cast<std::size_t>(j)]);
          g[r * C + j] += og * (qs - pt);
        }
      }
    });
  }
  return out;
}

// cross entropy against teacher soft targets at temperature T with the same
// T^2 compensation; differs from soft_target_kl by the teacher entropy,
// which is constant in the student, so the gradients coincide.
template <typename T>
Tensor<T> soft_target_ce(const Tensor<T>& student_logits, const Tensor<T>& teacher_logits,
                         T temperature, std::span<const std::uint8_t> row_mask = {}) {
  detail::check_same_shape(student_logits.shape(), teacher_logits.shape(), "soft_target_ce");
  if (temperature <= T(0)) throw ValueError("soft_target_ce: temperature must be positive");
  const std::int64_t n = student_logits.dim(0), C = student_logits.dim(1);
  if (!row_mask.empty() && static_cast<std::int64_t>(row_mask.size()) != n) {
    throw ShapeError("soft_target_ce: row mask length " + std::to_string(row_mask.size()) +
                     " does not match " + std::to_string(n) + " rows");
  }
  auto sv = student_logits.data();
  auto tv = teacher_logits.data();
  const T invT = T(1) / temperature;
  std::vector<T> srow(static_cast<std::size_t>(C)), trow(static_cast<std::size_t>(C));
  std::vector<T> slp(static_cast<std::size_t>(C)), tlp(static_cast<std::size_t>(C));
  T acc = T(0);
  std::int64_t count = 0;
  for (std::int64_t r = 0; r < n; ++r) {
    if (!row_mask.empty() && !row_mask[static_cast<std::size_t>(r)]) continue;
    for (std::int64_t j = 0; j < C; ++j) {
      srow[static_cast<std::size_t>(j)] = sv[r * C + j] * invT;
      trow[static_cast<std::size_t>(j)] = tv[r * C + j] * invT;
    }
    detail::log_softmax_row(srow.data(), slp.data(), C);
    detail::log_softmax_row(trow.data(), tlp.data(), C);
    for (std::int64_t j = 0; j < C; ++j) {
      T p = std::exp(tlp[static_cast<std::size_t>(j)]);
      acc -= p * slp[static_cast<std::size_t>(j)];
    }
    ++count;
  }
  if (count == 0) return Tensor<T>::scalar(T(0));
  const T scale_out = temperature * temperature / static_cast<T>(count);
  Tensor<T> out = Tensor<T>::scalar(acc * scale_out);
  if (detail::recording<T>({&student_logits})) {
    detail::mark_output(out);
    std::vector<std::uint8_t> m(row_mask.begin(), row_mask.end());
    Tape<T>::active()->record([student_logits = student_logits, teacher_logits = teacher_logits, out = out, n = n, C = C, invT = invT, temperature = temperature, count = count, m = std::move(m)]() mutable {
      T og = out.grad()[0] * temperature / static_cast<T>(count);
      auto sv2 = student_logits.data();
      auto tv2 = teacher_logits.data();
      auto g = student_logits.grad_mut();
      std::vector<T> srow2(static_cast<std::size_t>(C)), trow2(static_cast<std::size_t>(C));
      std::vector<T> slp2(static_cast<std::size_t>(C)), tlp2(static_cast<std::size_t>(C));
      for (std::int64_t r = 0; r < n; ++r) {
        if (!m.empty() && !m[static_cast<std::size_t>(r)]) continue;
        for (std::int64_t j = 0; j < C; ++j) {
          srow2[static_cast<std::size_t>(j)] = sv2[r * C + j] * invT;
          trow2[static_cast<std::size_t>(j)] = tv2[r * C + j] * invT;
        }
        detail::log_softmax_row(srow2.data(), slp2.data(), C);
        detail::log_softmax_row(trow2.data(), tlp2.data(), C);
        for (std::int64_t j = 0; j < C; ++j) {
          T qs = std::exp(slp2[static_cast<std::size_t>(j)]);
          T pt = std::exp(tlp2[static_cast<std::size_t>(j)]);
          g[r * C + j] += og * (qs - pt);
        }
      }
    });
  }
  return out;
}

}  // namespace clt
