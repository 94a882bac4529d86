#pragma once

#include <cstddef>
#include <vector>

#include "babyhgrn/model.hpp"

namespace babyhgrn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam without weight decay. Moments are kept in f64.
class Adam {
 public:
  Adam(ParameterStore& params, AdamConfig config = {});

  // One update with learning rate `lr` from the current gradients.
  void step(double lr);
  std::size_t steps_taken() const { return steps_; }

 private:
  ParameterStore& params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t steps_ = 0;
};

// lr * (1 - step / total_steps), floored at zero.
double linear_decay(double base_lr, std::size_t step, std::size_t total_steps);

// Global L2 norm over every gradient, in f64.
double grad_norm(const ParameterStore& params);

// Rescales all gradients so their global norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(ParameterStore& params, double max_norm);

}  // namespace babyhgrn
