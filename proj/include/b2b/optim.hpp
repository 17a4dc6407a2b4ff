#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "b2b/tensor.hpp"

namespace b2b {

struct AdamState {
  long step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

inline AdamState make_adam(const std::vector<Tensor>& params, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.size(), 0.0);
    s.second_moment.emplace_back(p.size(), 0.0);
  }
  return s;
}

/// One bias-corrected Adam update using each parameter's accumulated
/// gradient. Parameters without a gradient are treated as having zero grad.
inline void adam_step(std::vector<Tensor>& params, AdamState& state) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size())
    throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i)
    if (state.first_moment[i].size() != params[i].size() ||
        state.second_moment[i].size() != params[i].size())
      throw ShapeError("adam_step: moment buffer " + std::to_string(i) +
                       " does not match parameter shape " + shape_str(params[i].shape()));

  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.has_grad()) continue;
    auto w = p.mutable_data();
    auto g = p.mutable_grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

inline void zero_grad(std::vector<Tensor>& params) {
  for (auto& p : params) p.zero_grad();
}

/// Rescales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
inline double clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params)
    if (p.has_grad())
      for (double g : p.mutable_grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-12);
    for (auto& p : params)
      if (p.has_grad())
        for (double& g : p.mutable_grad()) g *= s;
  }
  return norm;
}

/// Linear warmup over the first `warmup_fraction` of steps, constant after.
inline double warmup_lr(double base, std::size_t step, std::size_t total_steps,
                        double warmup_fraction) {
  const auto warm = static_cast<std::size_t>(warmup_fraction * static_cast<double>(total_steps));
  if (warm == 0 || step >= warm) return base;
  return base * static_cast<double>(step + 1) / static_cast<double>(warm);
}

}  // namespace b2b
