#include "babyhgrn/optim.hpp"

#include <cmath>

namespace babyhgrn {

Adam::Adam(ParameterStore& params, AdamConfig config) : params_(params), config_(config) {
  for (const auto& [name, t] : params_) {
    m_.emplace_back(t.size(), 0.0);
    v_.emplace_back(t.size(), 0.0);
  }
}

void Adam::step(double lr) {
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, double(steps_));
  const double correction2 = 1.0 - std::pow(b2, double(steps_));
  std::size_t i = 0;
  for (auto& [name, t] : params_) {
    auto& m = m_[i];
    auto& v = v_[i];
    ++i;
    if (!t.requires_grad() || !t.has_grad()) continue;
    const auto g = t.grad();
    auto w = t.mutable_data();
    for (std::size_t n = 0; n < w.size(); ++n) {
      const double gn = g[n];
      m[n] = b1 * m[n] + (1.0 - b1) * gn;
      v[n] = b2 * v[n] + (1.0 - b2) * gn * gn;
      const double update = (m[n] / correction1) / (std::sqrt(v[n] / correction2) + config_.eps);
      w[n] = static_cast<real>(double(w[n]) - lr * update);
    }
  }
}

double linear_decay(double base_lr, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0 || step >= total_steps) return 0.0;
  return base_lr * (1.0 - double(step) / double(total_steps));
}

double grad_norm(const ParameterStore& params) {
  double ss = 0;
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) continue;
    for (real g : t.grad()) ss += double(g) * g;
  }
  return std::sqrt(ss);
}

double clip_grad_norm(ParameterStore& params, double max_norm) {
  require(max_norm > 0, ErrorKind::config, "max_grad_norm must be positive");
  const double norm = grad_norm(params);
  if (norm > max_norm) {
    const double factor = max_norm / (norm + 1e-12);
    for (auto& [name, t] : params) {
      if (!t.has_grad()) continue;
      for (auto& g : t.mutable_grad()) g = static_cast<real>(g * factor);
    }
  }
  return norm;
}

}  // namespace babyhgrn
