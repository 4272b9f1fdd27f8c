#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "clt/common.hpp"
#include "clt/rng.hpp"

namespace clt {

template <typename T>
class TapePause;

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated on demand, shape-matched to value
  bool requires_grad = false;
};

// Reverse-mode tape. Operations record themselves on the innermost active
// tape of the current thread; backward replays the records in reverse,
// which is a valid topological order because records are appended in
// execution order. One tape per thread at a time; a tape is consumed by
// its first backward pass.
template <typename T>
class Tape {
 public:
  Tape() : prev_(active_) { active_ = this; }
  ~Tape() { active_ = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_; }

  void record(std::function<void()> backward_fn) {
    records_.push_back(std::move(backward_fn));
  }

  bool consumed() const { return consumed_; }

  void run_backward() {
    if (consumed_) {
      throw ValueError("backward: tape already consumed (double backward)");
    }
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
    consumed_ = true;
    records_.clear();
  }

  std::size_t size() const { return records_.size(); }

 private:
  friend class TapePause<T>;
  std::vector<std::function<void()>> records_;
  bool consumed_ = false;
  Tape* prev_ = nullptr;
  static thread_local Tape* active_;
};

template <typename T>
thread_local Tape<T>* Tape<T>::active_ = nullptr;

// Temporarily disables recording; used to run a frozen model (e.g. a
// distillation teacher) under an active tape without bookkeeping it.
template <typename T>
class TapePause {
 public:
  TapePause() : saved_(Tape<T>::active_) { Tape<T>::active_ = nullptr; }
  ~TapePause() { Tape<T>::active_ = saved_; }
  TapePause(const TapePause&) = delete;
  TapePause& operator=(const TapePause&) = delete;

 private:
  Tape<T>* saved_;
};

// Dense row-major tensor handle. Copies are shallow; the underlying buffer
// is shared. Values are treated as immutable while a tape referencing them
// is alive; gradients accumulate additively during backward.
template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), T(0), requires_grad);
  }

  static Tensor ones(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), T(1), requires_grad);
  }

  static Tensor filled(Shape shape, T v, bool requires_grad = false) {
    Tensor t;
    t.s_ = std::make_shared<TensorStorage<T>>();
    t.s_->shape = std::move(shape);
    t.s_->value.assign(static_cast<std::size_t>(numel(t.s_->shape)), v);
    t.s_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (numel(shape) != static_cast<std::int64_t>(data.size())) {
      throw ShapeError("tensor: shape " + shape_str(shape) + " does not match buffer of length " +
                       std::to_string(data.size()));
    }
    Tensor t;
    t.s_ = std::make_shared<TensorStorage<T>>();
    t.s_->shape = std::move(shape);
    t.s_->value = std::move(data);
    t.s_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  static Tensor randn(Shape shape, Rng& rng, T stddev = T(1), bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (T& v : t.s_->value) v = static_cast<T>(rng.normal() * static_cast<double>(stddev));
    return t;
  }

  static Tensor truncated_normal(Shape shape, Rng& rng, T stddev, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (T& v : t.s_->value) v = static_cast<T>(rng.truncated_normal(static_cast<double>(stddev)));
    return t;
  }

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::int64_t dim(std::size_t i) const { return s_->shape[i]; }
  std::size_t rank() const { return s_->shape.size(); }
  std::int64_t size() const { return static_cast<std::int64_t>(s_->value.size()); }

  std::span<const T> data() const { return s_->value; }
  std::span<T> data() { return s_->value; }

  bool requires_grad() const { return s_ && s_->requires_grad; }
  void set_requires_grad(bool b) { s_->requires_grad = b; }

  bool has_grad() const { return s_ && !s_->grad.empty(); }

  void ensure_grad() {
    if (s_->grad.empty()) s_->grad.assign(s_->value.size(), T(0));
  }

  std::span<const T> grad() const { return s_->grad; }
  std::span<T> grad_mut() {
    ensure_grad();
    return s_->grad;
  }

  void zero_grad() {
    if (s_ && !s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), T(0));
  }

  T item() const {
    if (size() != 1) {
      throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
    }
    return s_->value[0];
  }

  // Value copy with no grad tracking and no tape history.
  Tensor detached() const {
    Tensor t;
    t.s_ = std::make_shared<TensorStorage<T>>();
    t.s_->shape = s_->shape;
    t.s_->value = s_->value;
    t.s_->requires_grad = false;
    return t;
  }

  TensorStorage<T>* storage() const { return s_.get(); }

 private:
  std::shared_ptr<TensorStorage<T>> s_;
};

template <typename T>
void backward(Tensor<T> loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<null>")));
  }
  Tape<T>* tape = Tape<T>::active();
  if (!tape) throw ValueError("backward: no active tape");
  loss.ensure_grad();
  loss.grad_mut()[0] += T(1);
  tape->run_backward();
}

}  // namespace clt
