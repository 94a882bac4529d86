#include "babyhgrn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "babyhgrn/ops.hpp"

namespace babyhgrn {

namespace {

// Row-wise log-softmax of x * inv_temp into out, in f64.
void log_softmax_row(const real* x, std::size_t v, double inv_temp, double* out) {
  double top = -INFINITY;
  for (std::size_t j = 0; j < v; ++j) top = std::max(top, double(x[j]) * inv_temp);
  double total = 0;
  for (std::size_t j = 0; j < v; ++j) total += std::exp(double(x[j]) * inv_temp - top);
  const double lse = top + std::log(total);
  for (std::size_t j = 0; j < v; ++j) out[j] = double(x[j]) * inv_temp - lse;
}

void check_alpha(double alpha) {
  require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::config,
          "distillation alpha must lie in [0, 1], got " + std::to_string(alpha));
}

}  // namespace

Tensor ce_loss(const Tensor& logits, std::span<const TokenId> targets) {
  require(logits.rank() == 2, ErrorKind::dimension, "ce_loss expects [N x V] logits");
  const std::size_t n = logits.dim(0), v = logits.dim(1);
  require(targets.size() == n, ErrorKind::dimension,
          "ce_loss: " + std::to_string(targets.size()) + " targets for " + std::to_string(n) +
              " rows");
  std::size_t counted = 0;
  for (TokenId t : targets) {
    if (t == kIgnoreTarget) continue;
    require(t >= 0 && static_cast<std::size_t>(t) < v, ErrorKind::data,
            "target id " + std::to_string(t) + " outside vocabulary");
    ++counted;
  }
  require(counted > 0, ErrorKind::usage, "ce_loss: every position is masked");

  const auto x = logits.data();
  std::vector<double> logp(v);
  std::vector<double> probs(n * v, 0.0);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] == kIgnoreTarget) continue;
    log_softmax_row(x.data() + i * v, v, 1.0, logp.data());
    total -= logp[targets[i]];
    for (std::size_t j = 0; j < v; ++j) probs[i * v + j] = std::exp(logp[j]);
  }
  const double count = static_cast<double>(counted);
  std::vector<TokenId> saved(targets.begin(), targets.end());
  return detail::make_result(
      {}, {static_cast<real>(total / count)}, "ce_loss", {logits},
      [n, v, count, probs = std::move(probs), saved = std::move(saved)](detail::Node& self) {
        auto& parent = *self.parents[0];
        if (!parent.requires_grad) return;
        auto& g = parent.ensure_grad();
        const double upstream = double(self.grad[0]) / count;
        for (std::size_t i = 0; i < n; ++i) {
          if (saved[i] == kIgnoreTarget) continue;
          for (std::size_t j = 0; j < v; ++j) {
            const double onehot = static_cast<std::size_t>(saved[i]) == j ? 1.0 : 0.0;
            g[i * v + j] += static_cast<real>(upstream * (probs[i * v + j] - onehot));
          }
        }
      });
}

Tensor kd_loss(const Tensor& teacher_logits, const Tensor& student_logits, double temperature) {
  require(temperature > 0.0, ErrorKind::config, "kd temperature must be positive");
  if (teacher_logits.shape() != student_logits.shape()) {
    fail(ErrorKind::dimension, "kd_loss: teacher " + shape_string(teacher_logits.shape()) +
                                   " vs student " + shape_string(student_logits.shape()));
  }
  require(student_logits.rank() == 2, ErrorKind::dimension, "kd_loss expects [N x V] logits");
  const std::size_t n = student_logits.dim(0), v = student_logits.dim(1);
  require(n > 0 && v > 0, ErrorKind::dimension, "kd_loss on empty logits");
  const double inv_temp = 1.0 / temperature;
  const auto zt = teacher_logits.data(), zs = student_logits.data();

  std::vector<double> lp_t(v), lp_s(v);
  std::vector<double> delta(n * v);  // p_s - p_t, the per-logit gradient up to 1/(n*tau)
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    log_softmax_row(zt.data() + i * v, v, inv_temp, lp_t.data());
    log_softmax_row(zs.data() + i * v, v, inv_temp, lp_s.data());
    double row = 0;
    for (std::size_t j = 0; j < v; ++j) {
      const double pt = std::exp(lp_t[j]);
      row += pt * (lp_t[j] - lp_s[j]);
      delta[i * v + j] = std::exp(lp_s[j]) - pt;
    }
    total += row;
  }
  // Clamp the rounding-level negatives Gibbs' inequality rules out.
  const double value = std::max(0.0, total / double(n));
  const double grad_scale = inv_temp / double(n);
  return detail::make_result({}, {static_cast<real>(value)}, "kd_loss", {student_logits},
                             [grad_scale, delta = std::move(delta)](detail::Node& self) {
                               auto& parent = *self.parents[0];
                               if (!parent.requires_grad) return;
                               auto& g = parent.ensure_grad();
                               const double up = double(self.grad[0]) * grad_scale;
                               for (std::size_t i = 0; i < delta.size(); ++i) {
                                 g[i] += static_cast<real>(up * delta[i]);
                               }
                             });
}

Tensor total_loss(const Tensor& ce, const Tensor& kd, double alpha) {
  check_alpha(alpha);
  require(ce.size() == 1 && kd.size() == 1, ErrorKind::usage, "total_loss blends scalar losses");
  if (alpha == 0.0) return ce;
  if (alpha == 1.0) return kd;
  return add(scale(ce, static_cast<real>(1.0 - alpha)), scale(kd, static_cast<real>(alpha)));
}

double total_loss(double ce, double kd, double alpha) {
  check_alpha(alpha);
  return (1.0 - alpha) * ce + alpha * kd;
}

}  // namespace babyhgrn
