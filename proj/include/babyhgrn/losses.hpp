#pragma once

#include <cstdint>
#include <span>

#include "babyhgrn/model.hpp"
#include "babyhgrn/tensor.hpp"

namespace babyhgrn {

inline constexpr TokenId kIgnoreTarget = -1;

// Mean next-token negative log-likelihood in nats over positions whose target
// is not kIgnoreTarget. logits [N x V], targets [N].
Tensor ce_loss(const Tensor& logits, std::span<const TokenId> targets);

// Token-mean KL(softmax(teacher/tau) || softmax(student/tau)). The teacher
// logits are read as constants; gradient reaches the student only.
Tensor kd_loss(const Tensor& teacher_logits, const Tensor& student_logits, double temperature = 1.0);

// (1 - alpha) * ce + alpha * kd, alpha in [0, 1].
Tensor total_loss(const Tensor& ce, const Tensor& kd, double alpha);
double total_loss(double ce, double kd, double alpha);

}  // namespace babyhgrn
