#pragma once

#include <cstddef>
#include <vector>

#include "nn/tensor.hpp"

namespace discorl::nn {

// Adaptive-moment optimizer with bias correction.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  size_t step = 0;
  std::vector<Tensor> m, v;

  void init(const std::vector<Tensor>& params) {
    m.clear();
    v.clear();
    for (const Tensor& p : params) {
      m.emplace_back(p.shape);
      v.emplace_back(p.shape);
    }
    step = 0;
  }
};

void adam_step(AdamState& opt, std::vector<Tensor>& params,
               const std::vector<Tensor>& grads);

}  // namespace discorl::nn
