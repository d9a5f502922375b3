#include "nn/adam.hpp"

#include <cmath>

namespace discorl::nn {

void adam_step(AdamState& opt, std::vector<Tensor>& params,
               const std::vector<Tensor>& grads) {
  if (opt.m.size() != params.size()) opt.init(params);
  if (grads.size() != params.size())
    throw UsageError("adam_step: gradient layout mismatch");
  opt.step += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i].same_shape(grads[i]))
      throw UsageError("adam_step: gradient shape mismatch");
    double* p = params[i].data.data();
    const double* g = grads[i].data.data();
    double* m = opt.m[i].data.data();
    double* v = opt.v[i].data.data();
    for (size_t k = 0; k < params[i].size(); ++k) {
      m[k] = opt.beta1 * m[k] + (1.0 - opt.beta1) * g[k];
      v[k] = opt.beta2 * v[k] + (1.0 - opt.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
  }
}

}  // namespace discorl::nn
