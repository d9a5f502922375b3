#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "nn/adam.hpp"
#include "nn/losses.hpp"
#include "nn/network.hpp"
#include "nn/rng.hpp"

using namespace discorl;
using nn::LayerSpec;
using nn::Network;
using nn::NetworkSpec;
using nn::Tensor;

namespace {

Tensor random_tensor(std::vector<size_t> shape, nn::Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t;
  t.shape = std::move(shape);
  t.data.resize(Tensor::numel(t.shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

bool close_rel(double a, double b, double tol = 1e-4) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

// Checks the analytic gradient of L = sum(c .* net(x)) against central
// finite differences, for every parameter and every input element.
void check_network_gradients(const NetworkSpec& spec,
                             const std::vector<size_t>& in_shape,
                             uint64_t seed) {
  Network net(spec);
  nn::Rng rng(seed);
  Tensor x = random_tensor(in_shape, rng);
  nn::Cache cache;
  Tensor y = net.forward(x, &cache);
  Tensor c = random_tensor(y.shape, rng);

  auto loss_of = [&](const Tensor& input) {
    Tensor out = net.forward(input);
    double l = 0.0;
    for (size_t i = 0; i < out.data.size(); ++i) l += c.data[i] * out.data[i];
    return l;
  };

  nn::GradStore grads = net.zero_grads();
  Tensor in_grad = net.backward(cache, c, grads);

  const double h = 1e-6;
  for (size_t i = 0; i < x.data.size(); ++i) {
    Tensor xp = x, xm = x;
    xp.data[i] += h;
    xm.data[i] -= h;
    const double fd = (loss_of(xp) - loss_of(xm)) / (2 * h);
    CAPTURE(i);
    CHECK(close_rel(in_grad.data[i], fd));
  }
  for (size_t p = 0; p < net.params().size(); ++p) {
    for (size_t i = 0; i < net.params()[p].data.size(); ++i) {
      double& w = net.params()[p].data[i];
      const double orig = w;
      w = orig + h;
      const double lp = loss_of(x);
      w = orig - h;
      const double lm = loss_of(x);
      w = orig;
      const double fd = (lp - lm) / (2 * h);
      CAPTURE(p);
      CAPTURE(i);
      CHECK(close_rel(grads[p].data[i], fd));
    }
  }
}

}  // namespace

TEST_CASE("dense layer gradients match finite differences") {
  for (uint64_t s = 0; s < 5; ++s) {
    NetworkSpec spec;
    spec.layers = {LayerSpec::dense(6, 4)};
    spec.seed = 100 + s;
    check_network_gradients(spec, {6}, 900 + s);
  }
}

TEST_CASE("conv layer gradients match finite differences") {
  for (uint64_t s = 0; s < 5; ++s) {
    NetworkSpec spec;
    spec.layers = {LayerSpec::conv(2, 3, 3, 2)};
    spec.seed = 200 + s;
    check_network_gradients(spec, {2, 7, 7}, 910 + s);
  }
}

TEST_CASE("activation and softmax gradients match finite differences") {
  for (uint64_t s = 0; s < 5; ++s) {
    NetworkSpec spec;
    spec.layers = {LayerSpec::dense(5, 8), LayerSpec::relu(),
                   LayerSpec::dense(8, 6), LayerSpec::tanh(),
                   LayerSpec::dense(6, 4), LayerSpec::softmax()};
    spec.seed = 300 + s;
    check_network_gradients(spec, {5}, 920 + s);
  }
}

TEST_CASE("composite conv net gradients match finite differences") {
  for (uint64_t s = 0; s < 5; ++s) {
    NetworkSpec spec;
    spec.layers = {LayerSpec::conv(3, 2, 3, 2), LayerSpec::relu(),
                   LayerSpec::flatten(), LayerSpec::dense(2 * 3 * 3, 4)};
    spec.seed = 400 + s;
    check_network_gradients(spec, {3, 8, 8}, 930 + s);
  }
}

TEST_CASE("dense forward matches independent matrix arithmetic") {
  NetworkSpec spec;
  spec.layers = {LayerSpec::dense(3, 2)};
  spec.seed = 7;
  Network net(spec);
  const Tensor& W = net.params()[0];
  const Tensor& b = net.params()[1];
  Tensor x;
  x.shape = {3};
  x.data = {0.5, -1.25, 2.0};
  Tensor y = net.forward(x);
  REQUIRE(y.data.size() == 2);
  for (size_t o = 0; o < 2; ++o) {
    double expect = b.data[o];
    for (size_t i = 0; i < 3; ++i) expect += W.data[o * 3 + i] * x.data[i];
    CHECK(y.data[o] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("conv forward matches a hand-rolled valid correlation") {
  NetworkSpec spec;
  spec.layers = {LayerSpec::conv(1, 1, 2, 1)};
  spec.seed = 11;
  Network net(spec);
  const Tensor& W = net.params()[0];  // 1x1x2x2
  const Tensor& b = net.params()[1];
  Tensor x;
  x.shape = {1, 3, 3};
  x.data = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  Tensor y = net.forward(x);
  REQUIRE((y.shape == std::vector<size_t>{1, 2, 2}));
  for (size_t r = 0; r < 2; ++r)
    for (size_t cidx = 0; cidx < 2; ++cidx) {
      double expect = b.data[0];
      for (size_t kr = 0; kr < 2; ++kr)
        for (size_t kc = 0; kc < 2; ++kc)
          expect += W.data[kr * 2 + kc] * x.data[(r + kr) * 3 + (cidx + kc)];
      CHECK(y.data[r * 2 + cidx] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("network initialization is deterministic in the seed") {
  NetworkSpec spec;
  spec.layers = {LayerSpec::conv(3, 4, 3, 2), LayerSpec::relu(),
                 LayerSpec::flatten(), LayerSpec::dense(4 * 15 * 15, 8)};
  spec.seed = 1234;
  Network a(spec), b(spec);
  REQUIRE(a.params().size() == b.params().size());
  for (size_t p = 0; p < a.params().size(); ++p)
    CHECK(a.params()[p].data == b.params()[p].data);
  spec.seed = 1235;
  Network c(spec);
  CHECK(a.params()[0].data != c.params()[0].data);
}

TEST_CASE("softmax outputs a valid distribution and is shift invariant") {
  nn::Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    Tensor logits = random_tensor({4}, rng, -50.0, 50.0);
    Tensor p = nn::softmax(logits);
    double sum = 0.0;
    for (double v : p.data) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    Tensor shifted = logits;
    for (double& v : shifted.data) v += 123.0;
    Tensor q = nn::softmax(shifted);
    for (size_t i = 0; i < 4; ++i)
      CHECK(p.data[i] == doctest::Approx(q.data[i]).epsilon(1e-9));
  }
}

TEST_CASE("mse loss and gradient match finite differences") {
  nn::Rng rng(21);
  for (int t = 0; t < 20; ++t) {
    Tensor pred = random_tensor({6}, rng);
    Tensor target = random_tensor({6}, rng);
    nn::LossResult res = nn::mse(pred, target);
    double manual = 0.0;
    for (size_t i = 0; i < 6; ++i) {
      const double d = pred.data[i] - target.data[i];
      manual += d * d;
    }
    manual /= 6.0;
    CHECK(res.loss == doctest::Approx(manual).epsilon(1e-12));
    const double h = 1e-6;
    for (size_t i = 0; i < 6; ++i) {
      Tensor pp = pred, pm = pred;
      pp.data[i] += h;
      pm.data[i] -= h;
      const double fd =
          (nn::mse(pp, target).loss - nn::mse(pm, target).loss) / (2 * h);
      CHECK(close_rel(res.grad.data[i], fd));
    }
  }
}

TEST_CASE("cross entropy of a uniform distribution is ln 4") {
  Tensor probs;
  probs.shape = {4};
  probs.data = {0.25, 0.25, 0.25, 0.25};
  for (int a = 0; a < 4; ++a)
    CHECK(nn::cross_entropy(probs, a).loss ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy gradient w.r.t. logits is probs minus one-hot") {
  nn::Rng rng(33);
  for (int t = 0; t < 20; ++t) {
    Tensor logits = random_tensor({4}, rng, -3.0, 3.0);
    Tensor probs = nn::softmax(logits);
    const int target = static_cast<int>(rng.uniform_int(4));
    nn::LossResult res = nn::cross_entropy(probs, target);
    const double h = 1e-6;
    for (size_t i = 0; i < 4; ++i) {
      Tensor lp = logits, lm = logits;
      lp.data[i] += h;
      lm.data[i] -= h;
      const double fd = (nn::cross_entropy(nn::softmax(lp), target).loss -
                         nn::cross_entropy(nn::softmax(lm), target).loss) /
                        (2 * h);
      CHECK(close_rel(res.grad.data[i], fd));
    }
  }
}

TEST_CASE("adam first step matches the closed form") {
  // With zero-initialized moments, the bias-corrected first update is
  // exactly lr * sign(g) regardless of the gradient magnitude (eps aside).
  std::vector<Tensor> params(1);
  params[0].shape = {3};
  params[0].data = {1.0, -2.0, 0.5};
  nn::AdamState opt;
  opt.lr = 0.1;
  opt.init(params);
  nn::GradStore grads(1);
  grads[0].shape = {3};
  grads[0].data = {0.4, -3.0, 1e-3};
  std::vector<double> before = params[0].data;
  nn::adam_step(opt, params, grads);
  for (size_t i = 0; i < 3; ++i) {
    const double g = grads[0].data[i];
    const double expect = before[i] - opt.lr * g / (std::abs(g) + opt.eps);
    CHECK(params[0].data[i] == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("adam minimizes a quadratic") {
  std::vector<Tensor> params(1);
  params[0].shape = {2};
  params[0].data = {3.0, -4.0};
  nn::AdamState opt;
  opt.lr = 0.05;
  opt.init(params);
  for (int it = 0; it < 2000; ++it) {
    nn::GradStore grads(1);
    grads[0].shape = {2};
    grads[0].data = {2 * params[0].data[0], 2 * params[0].data[1]};
    nn::adam_step(opt, params, grads);
  }
  CHECK(std::abs(params[0].data[0]) < 1e-3);
  CHECK(std::abs(params[0].data[1]) < 1e-3);
}

TEST_CASE("rng streams are deterministic and well spread") {
  nn::Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const uint64_t va = a.next_u64();
    CHECK(va == b.next_u64());
  }
  CHECK(a.next_u64() != c.next_u64());
  nn::Rng u(7);
  std::vector<int> counts(4, 0);
  for (int i = 0; i < 40000; ++i) ++counts[u.uniform_int(4)];
  for (int k = 0; k < 4; ++k) {
    CHECK(counts[k] > 9500);
    CHECK(counts[k] < 10500);
  }
}
