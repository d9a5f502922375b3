#include "nn/network.hpp"

#include <algorithm>
#include <cmath>

#include "nn/rng.hpp"

namespace discorl::nn {

namespace {

size_t fan_in(const LayerSpec& l) {
  return l.kind == LayerSpec::Kind::Dense ? l.in : l.in_ch * l.kernel * l.kernel;
}
size_t fan_out(const LayerSpec& l) {
  return l.kind == LayerSpec::Kind::Dense ? l.out
                                          : l.out_ch * l.kernel * l.kernel;
}

void conv_out_shape(const LayerSpec& l, const std::vector<size_t>& in_shape,
                    size_t& oh, size_t& ow) {
  if (in_shape.size() != 3 || in_shape[0] != l.in_ch)
    throw ConfigError("conv layer input shape mismatch");
  if (in_shape[1] < l.kernel || in_shape[2] < l.kernel)
    throw ConfigError("conv input smaller than kernel");
  oh = (in_shape[1] - l.kernel) / l.stride + 1;
  ow = (in_shape[2] - l.kernel) / l.stride + 1;
}

}  // namespace

Tensor softmax(const Tensor& logits) {
  Tensor out(logits.shape);
  double mx = *std::max_element(logits.data.begin(), logits.data.end());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& v : out.data) v /= sum;
  return out;
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  Rng rng(spec_.seed);
  param_index_.assign(spec_.layers.size(), -1);
  for (size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    if (!l.has_params()) continue;
    param_index_[i] = static_cast<int>(params_.size());
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in(l) + fan_out(l)));
    Tensor w, b;
    if (l.kind == LayerSpec::Kind::Dense) {
      if (l.in == 0 || l.out == 0) throw ConfigError("dense layer with zero size");
      w = Tensor({l.out, l.in});
      b = Tensor({l.out});
    } else {
      if (l.in_ch == 0 || l.out_ch == 0 || l.kernel == 0 || l.stride == 0)
        throw ConfigError("conv layer with zero size");
      w = Tensor({l.out_ch, l.in_ch, l.kernel, l.kernel});
      b = Tensor({l.out_ch});
    }
    for (double& v : w.data) v = rng.uniform(-limit, limit);
    params_.push_back(std::move(w));
    params_.push_back(std::move(b));
  }
}

GradStore Network::zero_grads() const {
  GradStore g;
  g.reserve(params_.size());
  for (const Tensor& p : params_) g.emplace_back(p.shape);
  return g;
}

size_t Network::param_count() const {
  size_t n = 0;
  for (const Tensor& p : params_) n += p.size();
  return n;
}

Tensor Network::forward(const Tensor& input, Cache* cache) const {
  Tensor x = input;
  if (cache) {
    cache->acts.clear();
    cache->acts.push_back(x);
  }
  for (size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    Tensor y;
    switch (l.kind) {
      case LayerSpec::Kind::Dense: {
        if (x.size() != l.in) throw ConfigError("dense layer input size mismatch");
        const Tensor& w = params_[param_index_[i]];
        const Tensor& b = params_[param_index_[i] + 1];
        y = Tensor({l.out});
        for (size_t j = 0; j < l.out; ++j) {
          const double* wr = w.data.data() + j * l.in;
          double acc = b[j];
          for (size_t k = 0; k < l.in; ++k) acc += wr[k] * x[k];
          y[j] = acc;
        }
        break;
      }
      case LayerSpec::Kind::Conv: {
        size_t oh, ow;
        conv_out_shape(l, x.shape, oh, ow);
        const size_t ih = x.shape[1], iw = x.shape[2], kk = l.kernel,
                     s = l.stride;
        const Tensor& w = params_[param_index_[i]];
        const Tensor& b = params_[param_index_[i] + 1];
        y = Tensor({l.out_ch, oh, ow});
        for (size_t oc = 0; oc < l.out_ch; ++oc) {
          double* ybase = y.data.data() + oc * oh * ow;
          for (size_t p = 0; p < oh * ow; ++p) ybase[p] = b[oc];
          for (size_t ic = 0; ic < l.in_ch; ++ic) {
            const double* xch = x.data.data() + ic * ih * iw;
            const double* wch =
                w.data.data() + (oc * l.in_ch + ic) * kk * kk;
            for (size_t kh = 0; kh < kk; ++kh) {
              for (size_t kw = 0; kw < kk; ++kw) {
                double wv = wch[kh * kk + kw];
                for (size_t r = 0; r < oh; ++r) {
                  const double* xrow = xch + (r * s + kh) * iw + kw;
                  double* yrow = ybase + r * ow;
                  for (size_t c = 0; c < ow; ++c) yrow[c] += wv * xrow[c * s];
                }
              }
            }
          }
        }
        break;
      }
      case LayerSpec::Kind::Relu:
        y = x;
        for (double& v : y.data) v = v > 0.0 ? v : 0.0;
        break;
      case LayerSpec::Kind::Tanh:
        y = x;
        for (double& v : y.data) v = std::tanh(v);
        break;
      case LayerSpec::Kind::Flatten:
        y = Tensor({x.size()}, x.data);
        break;
      case LayerSpec::Kind::Softmax:
        y = softmax(x);
        break;
    }
    x = std::move(y);
    if (cache) cache->acts.push_back(x);
  }
  x.check_finite("network forward");
  return x;
}

Tensor Network::backward(const Cache& cache, const Tensor& out_grad,
                         GradStore& grads) const {
  if (cache.acts.size() != spec_.layers.size() + 1)
    throw UsageError("backward called without a matching forward cache");
  if (grads.size() != params_.size())
    throw UsageError("gradient store layout mismatch");
  Tensor g = out_grad;
  for (size_t ii = spec_.layers.size(); ii-- > 0;) {
    const LayerSpec& l = spec_.layers[ii];
    const Tensor& x = cache.acts[ii];
    const Tensor& y = cache.acts[ii + 1];
    Tensor gin;
    switch (l.kind) {
      case LayerSpec::Kind::Dense: {
        const Tensor& w = params_[param_index_[ii]];
        Tensor& gw = grads[param_index_[ii]];
        Tensor& gb = grads[param_index_[ii] + 1];
        gin = Tensor({l.in});
        for (size_t j = 0; j < l.out; ++j) {
          const double gj = g[j];
          gb[j] += gj;
          const double* wr = w.data.data() + j * l.in;
          double* gwr = gw.data.data() + j * l.in;
          for (size_t k = 0; k < l.in; ++k) {
            gwr[k] += gj * x[k];
            gin[k] += gj * wr[k];
          }
        }
        break;
      }
      case LayerSpec::Kind::Conv: {
        size_t oh, ow;
        conv_out_shape(l, x.shape, oh, ow);
        const size_t ih = x.shape[1], iw = x.shape[2], kk = l.kernel,
                     s = l.stride;
        const Tensor& w = params_[param_index_[ii]];
        Tensor& gw = grads[param_index_[ii]];
        Tensor& gb = grads[param_index_[ii] + 1];
        gin = Tensor(x.shape);
        for (size_t oc = 0; oc < l.out_ch; ++oc) {
          const double* gbase = g.data.data() + oc * oh * ow;
          for (size_t p = 0; p < oh * ow; ++p) gb[oc] += gbase[p];
          for (size_t ic = 0; ic < l.in_ch; ++ic) {
            const double* xch = x.data.data() + ic * ih * iw;
            double* ginch = gin.data.data() + ic * ih * iw;
            const double* wch = w.data.data() + (oc * l.in_ch + ic) * kk * kk;
            double* gwch = gw.data.data() + (oc * l.in_ch + ic) * kk * kk;
            for (size_t kh = 0; kh < kk; ++kh) {
              for (size_t kw = 0; kw < kk; ++kw) {
                const double wv = wch[kh * kk + kw];
                double gwv = 0.0;
                for (size_t r = 0; r < oh; ++r) {
                  const double* xrow = xch + (r * s + kh) * iw + kw;
                  double* ginrow = ginch + (r * s + kh) * iw + kw;
                  const double* grow = gbase + r * ow;
                  for (size_t c = 0; c < ow; ++c) {
                    gwv += grow[c] * xrow[c * s];
                    ginrow[c * s] += grow[c] * wv;
                  }
                }
                gwch[kh * kk + kw] += gwv;
              }
            }
          }
        }
        break;
      }
      case LayerSpec::Kind::Relu:
        gin = g;
        for (size_t k = 0; k < gin.size(); ++k)
          if (x[k] <= 0.0) gin[k] = 0.0;
        break;
      case LayerSpec::Kind::Tanh:
        gin = g;
        for (size_t k = 0; k < gin.size(); ++k) gin[k] *= 1.0 - y[k] * y[k];
        break;
      case LayerSpec::Kind::Flatten:
        gin = Tensor(x.shape, g.data);
        break;
      case LayerSpec::Kind::Softmax: {
        gin = Tensor(x.shape);
        double dot = 0.0;
        for (size_t k = 0; k < y.size(); ++k) dot += g[k] * y[k];
        for (size_t k = 0; k < y.size(); ++k) gin[k] = y[k] * (g[k] - dot);
        break;
      }
    }
    g = std::move(gin);
  }
  return g;
}

}  // namespace discorl::nn
