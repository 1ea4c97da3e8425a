#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "icr/errors.hpp"
#include "icr/linalg.hpp"
#include "icr/nn.hpp"

namespace icr {

// =====================================================================
//  Lagrangian constrained objective
//
//    max_lambda min_params  L_con + lambda * (L_rec / eta - 1)
//
//  Parameters descend on the value with lambda held constant; lambda
//  ascends on the constraint violation with momentum and dampening.
// =====================================================================

struct LagrangeState {
  double lambda = 1.0;
  double velocity = 0.0;
  double eta = 0.2;
  double ascent_lr = 5e-3;
  double momentum = 0.9;
  double dampening = 0.9;
  double lambda_min = 0.0;
  double lambda_max = 100.0;
};

inline double lagrangian_value(double l_con, double l_rec, const LagrangeState& s) {
  return l_con + s.lambda * (l_rec / s.eta - 1.0);
}

// Weight multiplying the reconstruction gradient during descent (the
// contrastive path always carries weight 1).
inline double reconstruction_weight(const LagrangeState& s) { return s.lambda / s.eta; }

// One ascent step on lambda:
//   g        = l_rec / eta - 1
//   velocity = momentum * velocity + (1 - dampening) * g
//   lambda   = clamp(lambda + lr * velocity, lambda_min, lambda_max)
inline void update_lambda(LagrangeState& s, double l_rec) {
  const double g = l_rec / s.eta - 1.0;
  s.velocity = s.momentum * s.velocity + (1.0 - s.dampening) * g;
  s.lambda = std::clamp(s.lambda + s.ascent_lr * s.velocity, s.lambda_min, s.lambda_max);
}

// =====================================================================
//  Parameter descent
// =====================================================================

// p <- p - lr * grad for every entry, then grads are zeroed.
inline void sgd_step(ParameterStore& ps, double lr) {
  for (const auto& [name, e] : ps.params()) {
    for (std::size_t i = 0; i < e.param->size(); ++i)
      e.param->data[i] -= lr * e.grad->data[i];
    e.grad->fill(0.0);
  }
}

inline double cosine_lr(long step, long total, double base_lr) {
  if (step < 0 || step > total || total <= 0)
    throw ConfigInvalid("cosine_lr: need 0 <= step <= total");
  return base_lr * (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(step) /
                                   static_cast<double>(total))) / 2.0;
}

// =====================================================================
//  Stochastic weight averaging: elementwise mean of absorbed parameter
//  snapshots. Five checkpoints per epoch, evenly spaced over the last
//  10% of that epoch's iterations; absorption is cumulative across
//  epochs.
// =====================================================================

class SwaAccumulator {
 public:
  // Incremental mean: m += (x - m)/n. Absorbing the same parameters
  // repeatedly reproduces them bit-exactly.
  void absorb(const ParameterStore& ps) {
    ++count_;
    if (count_ == 1) {
      for (const auto& [name, e] : ps.params()) mean_[name] = *e.param;
      return;
    }
    const double inv = 1.0 / static_cast<double>(count_);
    for (const auto& [name, e] : ps.params()) {
      auto it = mean_.find(name);
      if (it == mean_.end()) throw ConfigInvalid("SwaAccumulator: parameter set changed");
      Matrix& m = it->second;
      for (std::size_t i = 0; i < m.size(); ++i)
        m.data[i] += (e.param->data[i] - m.data[i]) * inv;
    }
  }

  long count() const { return count_; }

  std::map<std::string, Matrix> finalize() const {
    if (count_ < 1) throw EmptyAccumulator("SwaAccumulator::finalize with no checkpoints");
    return mean_;
  }

 private:
  std::map<std::string, Matrix> mean_;
  long count_ = 0;
};

// Step indices (0-based, within one epoch of `steps_per_epoch`) at which
// SWA absorbs a snapshot: 5 evenly spaced points in the final 10% of the
// epoch. Short epochs collapse points onto the same index; the absorb
// count stays 5 per epoch.
inline std::vector<long> swa_absorb_steps(long steps_per_epoch) {
  if (steps_per_epoch < 1) throw ConfigInvalid("swa_absorb_steps: empty epoch");
  const long window = std::max<long>(1, steps_per_epoch / 10);
  const long start = steps_per_epoch - window;
  std::vector<long> steps;
  steps.reserve(5);
  for (long j = 0; j < 5; ++j)
    steps.push_back(start + (window - 1) * j / 4);
  return steps;
}

}  // namespace icr
