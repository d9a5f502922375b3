#pragma once

#include <cstddef>

#include "nn/tensor.hpp"

namespace discorl::nn {

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // w.r.t. the quantity documented at each function
};

// Mean squared error, 1/N * sum((pred - target)^2). Gradient w.r.t. pred.
LossResult mse(const Tensor& pred, const Tensor& target);

// Negative log likelihood of the target class. pred_probs must be a
// probability vector; the value at the target is clamped below by 1e-12
// before the log. Gradient is w.r.t. the logits that produced pred_probs
// (probs - one_hot), usable directly below a softmax head.
LossResult cross_entropy(const Tensor& pred_probs, size_t target);

}  // namespace discorl::nn
