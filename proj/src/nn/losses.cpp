#include "nn/losses.hpp"

#include <cmath>

namespace discorl::nn {

LossResult mse(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target)) throw UsageError("mse: shape mismatch");
  LossResult r;
  r.grad = Tensor(pred.shape);
  const double n = static_cast<double>(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    r.loss += d * d / n;
    r.grad[i] = 2.0 * d / n;
  }
  return r;
}

LossResult cross_entropy(const Tensor& pred_probs, size_t target) {
  if (target >= pred_probs.size())
    throw UsageError("cross_entropy: target index out of range");
  LossResult r;
  const double p = std::max(pred_probs[target], 1e-12);
  r.loss = -std::log(p);
  r.grad = pred_probs;
  r.grad[target] -= 1.0;
  return r;
}

}  // namespace discorl::nn
