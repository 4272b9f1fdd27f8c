#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "clt/model.hpp"

namespace clt {

struct ScheduleConfig {
  double base_lr = 0.0;
  std::int64_t warmup_steps = 0;
  std::int64_t total_steps = 0;

  void validate() const {
    if (total_steps < 1) throw ConfigError("schedule: total_steps must be >= 1");
    if (warmup_steps < 0 || warmup_steps > total_steps) {
      throw ConfigError("schedule: warmup_steps must be in [0, total_steps]");
    }
  }
};

// Linear warmup to base_lr at warmup_steps, then linear decay to 0 at
// total_steps.
inline double lr_at_step(const ScheduleConfig& sched, std::int64_t step) {
  sched.validate();
  if (step < 0 || step > sched.total_steps) {
    throw ValueError("schedule: step " + std::to_string(step) + " out of range [0, " +
                     std::to_string(sched.total_steps) + "]");
  }
  if (step < sched.warmup_steps) {
    return sched.base_lr * static_cast<double>(step) / static_cast<double>(sched.warmup_steps);
  }
  if (sched.total_steps == sched.warmup_steps) {
    return step == sched.total_steps ? 0.0 : sched.base_lr;
  }
  return sched.base_lr * static_cast<double>(sched.total_steps - step) /
         static_cast<double>(sched.total_steps - sched.warmup_steps);
}

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double clip_norm = 1.0;  // global gradient norm; 0 disables clipping
};

// Decoupled weight decay Adam. Decay applies to weight matrices and
// embedding tables only; biases and norm parameters are exempt, identified
// by name ("...bias", "...norm...").
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<NamedParam<T>> params, AdamWConfig cfg)
      : cfg_(cfg), params_(std::move(params)) {
    for (auto& p : params_) {
      m_.push_back(Tensor<T>::zeros(p.tensor.shape()));
      v_.push_back(Tensor<T>::zeros(p.tensor.shape()));
      decay_mask_.push_back(!is_decay_exempt(p.name));
      p.tensor.ensure_grad();
    }
  }

  static bool is_decay_exempt(const std::string& name) {
    if (name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0) return true;
    return name.find("norm") != std::string::npos;
  }

  void step(double lr) {
    if (cfg_.clip_norm > 0.0) clip_gradients();
    ++step_count_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto p = params_[i].tensor.data();
      auto g = params_[i].tensor.grad_mut();
      auto m = m_[i].data();
      auto v = v_[i].data();
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double gj = static_cast<double>(g[j]);
        const double mj = cfg_.beta1 * static_cast<double>(m[j]) + (1.0 - cfg_.beta1) * gj;
        const double vj = cfg_.beta2 * static_cast<double>(v[j]) + (1.0 - cfg_.beta2) * gj * gj;
        m[j] = static_cast<T>(mj);
        v[j] = static_cast<T>(vj);
        const double mhat = mj / bc1;
        const double vhat = vj / bc2;
        double update = lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        if (decay_mask_[i]) update += lr * cfg_.weight_decay * static_cast<double>(p[j]);
        p[j] = static_cast<T>(static_cast<double>(p[j]) - update);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  std::int64_t step_count() const { return step_count_; }
  void set_step_count(std::int64_t s) { step_count_ = s; }

  const std::vector<NamedParam<T>>& params() const { return params_; }
  Tensor<T>& first_moment(std::size_t i) { return m_[i]; }
  Tensor<T>& second_moment(std::size_t i) { return v_[i]; }
  std::size_t size() const { return params_.size(); }

 private:
  void clip_gradients() {
    double total = 0.0;
    for (auto& p : params_) {
      for (T g : p.tensor.grad_mut()) total += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(total);
    if (norm <= cfg_.clip_norm) return;
    const T scale_by = static_cast<T>(cfg_.clip_norm / norm);
    for (auto& p : params_) {
      for (T& g : p.tensor.grad_mut()) g *= scale_by;
    }
  }

  AdamWConfig cfg_;
  std::vector<NamedParam<T>> params_;
  std::vector<Tensor<T>> m_, v_;
  std::vector<bool> decay_mask_;
  std::int64_t step_count_ = 0;
};

}  // namespace clt
