#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace discorl::nn {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major tensor of doubles.
struct Tensor {
  std::vector<size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<size_t> s) : shape(std::move(s)) {
    data.assign(numel(shape), 0.0);
  }
  Tensor(std::vector<size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel(shape))
      throw ConfigError("tensor data length does not match shape");
  }

  static size_t numel(const std::vector<size_t>& s) {
    return std::accumulate(s.begin(), s.end(), size_t{1},
                           std::multiplies<size_t>());
  }

  size_t size() const { return data.size(); }
  double& operator[](size_t i) { return data[i]; }
  double operator[](size_t i) const { return data[i]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void check_finite(const std::string& where) const {
    if (!all_finite()) throw StageError("non-finite values in " + where);
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

}  // namespace discorl::nn
