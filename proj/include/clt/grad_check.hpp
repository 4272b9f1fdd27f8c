#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "clt/tensor.hpp"

namespace clt {

// Compares the analytic gradient of a scalar-valued function against central
// finite differences, coordinate by coordinate, and returns the maximum
// relative error with denominator max(|analytic|, |numeric|, denom_floor).
//
// `fn` must recompute the full forward pass from the current values of the
// leaves on every call. One taped evaluation produces the analytic gradient;
// the finite-difference sweep perturbs leaf values in place with no tape.
//
// The default floor suits shallow functions whose gradients are all of
// meaningful size. Deep composites have near-flat coordinates where the
// finite difference itself carries ~1e-11 of float64 cancellation noise
// (|loss| ~ 1, two evaluations agreeing to ~15 digits); checks on such
// functions should raise the floor to about 1e-6, which still pins those
// coordinates to ~1e-11 absolute agreement at the 1e-5 relative threshold.
inline double grad_check(const std::function<Tensor<double>()>& fn,
                         std::vector<Tensor<double>> leaves, double step = 1e-5,
                         double denom_floor = 1e-8) {
  for (auto& leaf : leaves) {
    leaf.zero_grad();
    if (!leaf.requires_grad()) {
      throw ValueError("grad_check: every checked leaf must require a gradient");
    }
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    Tensor<double> loss = fn();
    backward(loss);
    for (auto& leaf : leaves) {
      leaf.ensure_grad();
      analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
    }
  }
  double max_rel = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto values = leaves[li].data();
    for (std::size_t c = 0; c < values.size(); ++c) {
      const double saved = values[c];
      values[c] = saved + step;
      const double up = fn().item();
      values[c] = saved - step;
      const double down = fn().item();
      values[c] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[li][c];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), denom_floor});
      max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
    }
  }
  return max_rel;
}

// Same comparison with a per-coordinate choice of step: each step in `steps`
// yields a central-difference estimate, and the coordinate is scored by its
// best-agreeing estimate. Near-flat coordinates need a large step (roundoff
// noise scales with 1/h) while strongly curved ones need a small step
// (truncation scales with h^2); a deep network contains both at once, so no
// single step can certify every coordinate.
inline double grad_check_adaptive(const std::function<Tensor<double>()>& fn,
                                  std::vector<Tensor<double>> leaves,
                                  std::vector<double> steps = {3e-4, 1e-4, 1e-5, 1e-6, 1e-7},
                                  double denom_floor = 3e-6) {
  for (auto& leaf : leaves) {
    leaf.zero_grad();
    if (!leaf.requires_grad()) {
      throw ValueError("grad_check: every checked leaf must require a gradient");
    }
  }
  std::vector<std::vector<double>> analytic;
  double loss_scale = 1.0;
  {
    Tape<double> tape;
    Tensor<double> loss = fn();
    loss_scale = std::max(1.0, std::fabs(loss.item()));
    backward(loss);
    for (auto& leaf : leaves) {
      leaf.ensure_grad();
      analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
    }
  }
  // difference noise is proportional to the loss magnitude, so the floor is
  // scaled by it
  const double floor = denom_floor * loss_scale;
  double max_rel = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto values = leaves[li].data();
    for (std::size_t c = 0; c < values.size(); ++c) {
      const double saved = values[c];
      const double a = analytic[li][c];
      double best = std::numeric_limits<double>::infinity();
      for (double h : steps) {
        values[c] = saved + h;
        const double up = fn().item();
        values[c] = saved - h;
        const double down = fn().item();
        values[c] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::fabs(a), std::fabs(numeric), floor});
        best = std::min(best, std::fabs(a - numeric) / denom);
        if (best < 1e-9) break;
      }
      max_rel = std::max(max_rel, best);
    }
  }
  return max_rel;
}

}  // namespace clt
