#pragma once

#include <cstdint>
#include <vector>

#include "nn/tensor.hpp"

namespace discorl::nn {

struct LayerSpec {
  enum class Kind { Dense, Conv, Relu, Tanh, Flatten, Softmax };
  Kind kind = Kind::Dense;
  size_t in = 0, out = 0;                                // dense
  size_t in_ch = 0, out_ch = 0, kernel = 0, stride = 1;  // conv

  static LayerSpec dense(size_t in, size_t out) {
    LayerSpec l;
    l.kind = Kind::Dense;
    l.in = in;
    l.out = out;
    return l;
  }
  static LayerSpec conv(size_t in_ch, size_t out_ch, size_t kernel,
                        size_t stride) {
    LayerSpec l;
    l.kind = Kind::Conv;
    l.in_ch = in_ch;
    l.out_ch = out_ch;
    l.kernel = kernel;
    l.stride = stride;
    return l;
  }
  static LayerSpec relu() { return LayerSpec{Kind::Relu}; }
  static LayerSpec tanh() { return LayerSpec{Kind::Tanh}; }
  static LayerSpec flatten() { return LayerSpec{Kind::Flatten}; }
  static LayerSpec softmax() { return LayerSpec{Kind::Softmax}; }

  bool has_params() const { return kind == Kind::Dense || kind == Kind::Conv; }
};

struct NetworkSpec {
  std::vector<LayerSpec> layers;
  uint64_t seed = 0;
};

// Activations recorded during forward, needed by backward.
// acts[i] is the input of layer i; acts.back() is the network output.
struct Cache {
  std::vector<Tensor> acts;
};

// Parameter gradients, same structure as Network::params().
using GradStore = std::vector<Tensor>;

// A feed-forward network over the fixed layer set. Parameters are
// initialized deterministically from spec.seed (uniform Glorot range,
// zero biases).
class Network {
 public:
  Network() = default;
  explicit Network(NetworkSpec spec);

  // Deterministic. If cache is given, records activations for backward.
  Tensor forward(const Tensor& input, Cache* cache = nullptr) const;

  // Accumulates parameter gradients into grads (same layout as params())
  // and returns the gradient w.r.t. the network input.
  Tensor backward(const Cache& cache, const Tensor& out_grad,
                  GradStore& grads) const;

  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  const NetworkSpec& spec() const { return spec_; }

  GradStore zero_grads() const;
  size_t param_count() const;

 private:
  NetworkSpec spec_;
  std::vector<Tensor> params_;
  std::vector<int> param_index_;  // per layer, index of its W in params_ (-1 if none)
};

Tensor softmax(const Tensor& logits);

}  // namespace discorl::nn
