#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "autohr/errors.hpp"

namespace autohr {

// Dense row-major rank-5 tensor of doubles. Axis meaning is contextual:
// activations are (n, c, t, h, w), convolution weights are
// (c_out, c_in, kt, kh, kw).
class Tensor {
 public:
  Tensor() : dims_{0, 0, 0, 0, 0} {}

  Tensor(int d0, int d1, int d2, int d3, int d4) : dims_{d0, d1, d2, d3, d4} {
    for (int d : dims_) {
      if (d <= 0) {
        throw ShapeError("tensor dims must be positive, got " + shape_str());
      }
    }
    v_.assign(size_t(d0) * d1 * d2 * d3 * d4, 0.0);
  }

  static Tensor zeros_like(const Tensor& o) {
    return Tensor(o.dims_[0], o.dims_[1], o.dims_[2], o.dims_[3], o.dims_[4]);
  }

  int dim(int i) const { return dims_[size_t(i)]; }
  const std::array<int, 5>& dims() const { return dims_; }
  size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }

  double& at(int a, int b, int c, int d, int e) { return v_[offset(a, b, c, d, e)]; }
  const double& at(int a, int b, int c, int d, int e) const {
    return v_[offset(a, b, c, d, e)];
  }

  double& operator[](size_t i) { return v_[i]; }
  const double& operator[](size_t i) const { return v_[i]; }

  bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

  void zero() { std::fill(v_.begin(), v_.end(), 0.0); }

  // this += s * o
  void add_scaled(const Tensor& o, double s) {
    if (!same_shape(o)) throw ShapeError("add_scaled: shape mismatch");
    for (size_t i = 0; i < v_.size(); ++i) v_[i] += s * o.v_[i];
  }

  double dot(const Tensor& o) const {
    if (!same_shape(o)) throw ShapeError("dot: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < v_.size(); ++i) acc += v_[i] * o.v_[i];
    return acc;
  }

  double max_abs() const {
    double m = 0.0;
    for (double x : v_) m = std::max(m, std::fabs(x));
    return m;
  }

  bool all_finite() const {
    for (double x : v_) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

  std::string shape_str() const {
    std::string s = "(";
    for (int i = 0; i < 5; ++i) {
      s += std::to_string(dims_[size_t(i)]);
      s += (i == 4) ? ")" : ",";
    }
    return s;
  }

 private:
  size_t offset(int a, int b, int c, int d, int e) const {
    return ((((size_t(a) * dims_[1]) + b) * dims_[2] + c) * dims_[3] + d) * dims_[4] + e;
  }

  std::array<int, 5> dims_;
  std::vector<double> v_;
};

}  // namespace autohr
