#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "autohr/errors.hpp"
#include "autohr/rng.hpp"
#include "autohr/tensor.hpp"

namespace autohr {

inline int conv_out_extent(int in, int k, int stride, int pad) {
  const int out = (in + 2 * pad - k) / stride + 1;
  if (in + 2 * pad < k || out < 1) {
    throw ShapeError("conv: input extent " + std::to_string(in) + " too small for kernel " +
                     std::to_string(k) + " pad " + std::to_string(pad));
  }
  return out;
}

inline std::array<int, 3> conv3d_out_dims(const Tensor& x, const Tensor& w,
                                          std::array<int, 3> stride, std::array<int, 3> pad) {
  if (x.dim(1) != w.dim(1)) {
    throw ShapeError("conv: channel mismatch, input " + x.shape_str() + " weights " +
                     w.shape_str());
  }
  for (int i = 0; i < 3; ++i) {
    if (stride[size_t(i)] < 1 || pad[size_t(i)] < 0) throw ValueError("conv: bad stride/pad");
  }
  return {conv_out_extent(x.dim(2), w.dim(2), stride[0], pad[0]),
          conv_out_extent(x.dim(3), w.dim(3), stride[1], pad[1]),
          conv_out_extent(x.dim(4), w.dim(4), stride[2], pad[2])};
}

namespace detail {

// Output index range [lo, hi) for which in = out*stride - pad + k stays inside
// [0, extent).
inline void valid_out_range(int extent, int out_extent, int stride, int pad, int k, int* lo,
                            int* hi) {
  int l = pad - k;
  l = (l <= 0) ? 0 : (l + stride - 1) / stride;
  int h = extent - 1 + pad - k;
  h = (h < 0) ? 0 : h / stride + 1;
  *lo = std::min(l, out_extent);
  *hi = std::min(h, out_extent);
}

}  // namespace detail

// Zero-padded vanilla 3D convolution (cross-correlation). Weights are
// (c_out, c_in, kt, kh, kw); bias may be empty.
inline Tensor conv3d_forward(const Tensor& x, const Tensor& w, const std::vector<double>& bias,
                             std::array<int, 3> stride, std::array<int, 3> pad) {
  const auto od = conv3d_out_dims(x, w, stride, pad);
  const int n = x.dim(0), ci_n = x.dim(1), t_in = x.dim(2), h_in = x.dim(3), w_in = x.dim(4);
  const int co_n = w.dim(0), kt = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  if (!bias.empty() && int(bias.size()) != co_n) throw ShapeError("conv: bias size mismatch");
  Tensor out(n, co_n, od[0], od[1], od[2]);

  for (int b = 0; b < n; ++b) {
    for (int co = 0; co < co_n; ++co) {
      if (!bias.empty()) {
        double* o = out.data() + ((size_t(b) * co_n + co) * od[0]) * od[1] * od[2];
        const double bv = bias[size_t(co)];
        for (size_t i = 0; i < size_t(od[0]) * od[1] * od[2]; ++i) o[i] = bv;
      }
      for (int ci = 0; ci < ci_n; ++ci) {
        for (int dt = 0; dt < kt; ++dt) {
          int lo_t, hi_t;
          detail::valid_out_range(t_in, od[0], stride[0], pad[0], dt, &lo_t, &hi_t);
          for (int dy = 0; dy < kh; ++dy) {
            int lo_y, hi_y;
            detail::valid_out_range(h_in, od[1], stride[1], pad[1], dy, &lo_y, &hi_y);
            for (int dx = 0; dx < kw; ++dx) {
              int lo_x, hi_x;
              detail::valid_out_range(w_in, od[2], stride[2], pad[2], dx, &lo_x, &hi_x);
              const double coef = w.at(co, ci, dt, dy, dx);
              if (coef == 0.0) continue;
              for (int to = lo_t; to < hi_t; ++to) {
                const int ti = to * stride[0] - pad[0] + dt;
                for (int yo = lo_y; yo < hi_y; ++yo) {
                  const int yi = yo * stride[1] - pad[1] + dy;
                  const double* xi_row =
                      x.data() + (((size_t(b) * ci_n + ci) * t_in + ti) * h_in + yi) * w_in;
                  double* o_row =
                      out.data() + (((size_t(b) * co_n + co) * od[0] + to) * od[1] + yo) * od[2];
                  const int off = dx - pad[2];
                  if (stride[2] == 1) {
                    for (int xo = lo_x; xo < hi_x; ++xo) o_row[xo] += coef * xi_row[xo + off];
                  } else {
                    for (int xo = lo_x; xo < hi_x; ++xo) {
                      o_row[xo] += coef * xi_row[xo * stride[2] + off];
                    }
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

// Gradients accumulate into pre-sized gx/gw/gb (any of them may be null).
inline void conv3d_backward(const Tensor& x, const Tensor& w, std::array<int, 3> stride,
                            std::array<int, 3> pad, const Tensor& gy, Tensor* gx, Tensor* gw,
                            std::vector<double>* gb) {
  const auto od = conv3d_out_dims(x, w, stride, pad);
  const int n = x.dim(0), ci_n = x.dim(1), t_in = x.dim(2), h_in = x.dim(3), w_in = x.dim(4);
  const int co_n = w.dim(0), kt = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  if (gy.dim(0) != n || gy.dim(1) != co_n || gy.dim(2) != od[0] || gy.dim(3) != od[1] ||
      gy.dim(4) != od[2]) {
    throw ShapeError("conv backward: gy shape " + gy.shape_str() + " mismatch");
  }
  if (gx && !gx->same_shape(x)) throw ShapeError("conv backward: gx shape mismatch");
  if (gw && !gw->same_shape(w)) throw ShapeError("conv backward: gw shape mismatch");
  if (gb && int(gb->size()) != co_n) throw ShapeError("conv backward: gb size mismatch");

  if (gb) {
    for (int b = 0; b < n; ++b) {
      for (int co = 0; co < co_n; ++co) {
        const double* g = gy.data() + ((size_t(b) * co_n + co) * od[0]) * od[1] * od[2];
        double acc = 0.0;
        for (size_t i = 0; i < size_t(od[0]) * od[1] * od[2]; ++i) acc += g[i];
        (*gb)[size_t(co)] += acc;
      }
    }
  }

  for (int b = 0; b < n; ++b) {
    for (int co = 0; co < co_n; ++co) {
      for (int ci = 0; ci < ci_n; ++ci) {
        for (int dt = 0; dt < kt; ++dt) {
          int lo_t, hi_t;
          detail::valid_out_range(t_in, od[0], stride[0], pad[0], dt, &lo_t, &hi_t);
          for (int dy = 0; dy < kh; ++dy) {
            int lo_y, hi_y;
            detail::valid_out_range(h_in, od[1], stride[1], pad[1], dy, &lo_y, &hi_y);
            for (int dx = 0; dx < kw; ++dx) {
              int lo_x, hi_x;
              detail::valid_out_range(w_in, od[2], stride[2], pad[2], dx, &lo_x, &hi_x);
              const double coef = w.at(co, ci, dt, dy, dx);
              double wacc = 0.0;
              const bool need_w = gw != nullptr;
              const bool need_x = gx != nullptr && coef != 0.0;
              if (!need_w && !need_x) continue;
              for (int to = lo_t; to < hi_t; ++to) {
                const int ti = to * stride[0] - pad[0] + dt;
                for (int yo = lo_y; yo < hi_y; ++yo) {
                  const int yi = yo * stride[1] - pad[1] + dy;
                  const double* xi_row =
                      x.data() + (((size_t(b) * ci_n + ci) * t_in + ti) * h_in + yi) * w_in;
                  const double* g_row =
                      gy.data() + (((size_t(b) * co_n + co) * od[0] + to) * od[1] + yo) * od[2];
                  double* gx_row =
                      gx ? gx->data() + (((size_t(b) * ci_n + ci) * t_in + ti) * h_in + yi) * w_in
                         : nullptr;
                  const int off = dx - pad[2];
                  for (int xo = lo_x; xo < hi_x; ++xo) {
                    const int xi = xo * stride[2] + off;
                    if (need_w) wacc += g_row[xo] * xi_row[xi];
                    if (need_x) gx_row[xi] += coef * g_row[xo];
                  }
                }
              }
              if (need_w) gw->at(co, ci, dt, dy, dx) += wacc;
            }
          }
        }
      }
    }
  }
}

// Stateful layers cache what their backward needs. backward() accumulates
// parameter gradients and returns the input gradient.

class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(int c_in, int c_out, std::array<int, 3> kernel, std::array<int, 3> stride_,
         std::array<int, 3> pad_, bool with_bias, Rng& rng)
      : stride(stride_), pad(pad_), w(c_out, c_in, kernel[0], kernel[1], kernel[2]),
        gw(c_out, c_in, kernel[0], kernel[1], kernel[2]) {
    const double fan_in = double(c_in) * kernel[0] * kernel[1] * kernel[2];
    const double sd = std::sqrt(2.0 / fan_in);
    for (size_t i = 0; i < w.size(); ++i) w[i] = sd * rng.normal();
    if (with_bias) {
      b.assign(size_t(c_out), 0.0);
      gb.assign(size_t(c_out), 0.0);
    }
  }

  Tensor forward(const Tensor& x) {
    x_ = x;
    return conv3d_forward(x, w, b, stride, pad);
  }

  Tensor backward(const Tensor& gy) {
    Tensor gx = Tensor::zeros_like(x_);
    conv3d_backward(x_, w, stride, pad, gy, &gx, &gw, b.empty() ? nullptr : &gb);
    return gx;
  }

  void release_state() { x_ = Tensor(); }

  std::array<int, 3> stride{1, 1, 1}, pad{0, 0, 0};
  Tensor w, gw;
  std::vector<double> b, gb;

 private:
  Tensor x_;
};

// Per-channel batch normalization over (n, t, h, w). Biased variance is used
// both for normalization and for the running estimate.
class BatchNorm3d {
 public:
  BatchNorm3d() = default;
  explicit BatchNorm3d(int channels)
      : gamma(size_t(channels), 1.0), beta(size_t(channels), 0.0),
        ggamma(size_t(channels), 0.0), gbeta(size_t(channels), 0.0),
        run_mean(size_t(channels), 0.0), run_var(size_t(channels), 1.0) {}

  Tensor forward(const Tensor& x, bool train) {
    const int c_n = int(gamma.size());
    if (x.dim(1) != c_n) throw ShapeError("batchnorm: channel mismatch");
    const int n = x.dim(0), t = x.dim(2), h = x.dim(3), w = x.dim(4);
    const size_t plane = size_t(t) * h * w;
    const double m = double(n) * plane;
    train_fwd_ = train;
    xhat_ = Tensor(x.dim(0), x.dim(1), t, h, w);
    invstd_.assign(size_t(c_n), 0.0);
    Tensor y = Tensor::zeros_like(x);
    for (int c = 0; c < c_n; ++c) {
      double mean, var;
      if (train) {
        double s = 0.0;
        for (int b = 0; b < n; ++b) {
          const double* p = x.data() + (size_t(b) * c_n + c) * plane;
          for (size_t i = 0; i < plane; ++i) s += p[i];
        }
        mean = s / m;
        double v = 0.0;
        for (int b = 0; b < n; ++b) {
          const double* p = x.data() + (size_t(b) * c_n + c) * plane;
          for (size_t i = 0; i < plane; ++i) {
            const double d = p[i] - mean;
            v += d * d;
          }
        }
        var = v / m;
        run_mean[size_t(c)] = (1.0 - momentum) * run_mean[size_t(c)] + momentum * mean;
        run_var[size_t(c)] = (1.0 - momentum) * run_var[size_t(c)] + momentum * var;
      } else {
        mean = run_mean[size_t(c)];
        var = run_var[size_t(c)];
      }
      const double inv = 1.0 / std::sqrt(var + eps);
      invstd_[size_t(c)] = inv;
      const double g = gamma[size_t(c)], bta = beta[size_t(c)];
      for (int b = 0; b < n; ++b) {
        const double* p = x.data() + (size_t(b) * c_n + c) * plane;
        double* xh = xhat_.data() + (size_t(b) * c_n + c) * plane;
        double* yo = y.data() + (size_t(b) * c_n + c) * plane;
        for (size_t i = 0; i < plane; ++i) {
          xh[i] = (p[i] - mean) * inv;
          yo[i] = g * xh[i] + bta;
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& gy) {
    const int c_n = int(gamma.size());
    if (!gy.same_shape(xhat_)) throw ShapeError("batchnorm backward: shape mismatch");
    const int n = gy.dim(0), t = gy.dim(2), h = gy.dim(3), w = gy.dim(4);
    const size_t plane = size_t(t) * h * w;
    const double m = double(n) * plane;
    Tensor gx = Tensor::zeros_like(gy);
    for (int c = 0; c < c_n; ++c) {
      double sum_gy = 0.0, sum_gy_xhat = 0.0;
      for (int b = 0; b < n; ++b) {
        const double* g = gy.data() + (size_t(b) * c_n + c) * plane;
        const double* xh = xhat_.data() + (size_t(b) * c_n + c) * plane;
        for (size_t i = 0; i < plane; ++i) {
          sum_gy += g[i];
          sum_gy_xhat += g[i] * xh[i];
        }
      }
      gbeta[size_t(c)] += sum_gy;
      ggamma[size_t(c)] += sum_gy_xhat;
      const double k = gamma[size_t(c)] * invstd_[size_t(c)];
      for (int b = 0; b < n; ++b) {
        const double* g = gy.data() + (size_t(b) * c_n + c) * plane;
        const double* xh = xhat_.data() + (size_t(b) * c_n + c) * plane;
        double* o = gx.data() + (size_t(b) * c_n + c) * plane;
        if (train_fwd_) {
          for (size_t i = 0; i < plane; ++i) {
            o[i] = k * (g[i] - sum_gy / m - xh[i] * (sum_gy_xhat / m));
          }
        } else {
          for (size_t i = 0; i < plane; ++i) o[i] = k * g[i];
        }
      }
    }
    return gx;
  }

  void release_state() {
    xhat_ = Tensor();
    invstd_.clear();
  }

  double eps = 1e-5;
  double momentum = 0.1;
  std::vector<double> gamma, beta, ggamma, gbeta, run_mean, run_var;

 private:
  Tensor xhat_;
  std::vector<double> invstd_;
  bool train_fwd_ = false;
};

class ReLU {
 public:
  Tensor forward(const Tensor& x) {
    mask_.assign(x.size(), 0);
    Tensor y = Tensor::zeros_like(x);
    for (size_t i = 0; i < x.size(); ++i) {
      if (x[i] > 0.0) {
        y[i] = x[i];
        mask_[i] = 1;
      }
    }
    return y;
  }

  Tensor backward(const Tensor& gy) {
    if (gy.size() != mask_.size()) throw ShapeError("relu backward: shape mismatch");
    Tensor gx = Tensor::zeros_like(gy);
    for (size_t i = 0; i < gy.size(); ++i) {
      if (mask_[i]) gx[i] = gy[i];
    }
    return gx;
  }

  void release_state() { mask_.clear(); }

 private:
  std::vector<uint8_t> mask_;
};

// Non-overlapping max pooling; kernel equals stride and must divide the input
// extents exactly. Ties route the gradient to the first maximum.
class MaxPool3d {
 public:
  MaxPool3d() = default;
  explicit MaxPool3d(std::array<int, 3> stride_) : stride(stride_) {}

  Tensor forward(const Tensor& x) {
    const int n = x.dim(0), c_n = x.dim(1), t = x.dim(2), h = x.dim(3), w = x.dim(4);
    for (int i = 0; i < 3; ++i) {
      const int ext = x.dim(2 + i);
      if (ext % stride[size_t(i)] != 0) {
        throw ShapeError("maxpool: extent " + std::to_string(ext) + " not divisible by stride " +
                         std::to_string(stride[size_t(i)]));
      }
    }
    in_dims_ = x.dims();
    const int to_n = t / stride[0], ho_n = h / stride[1], wo_n = w / stride[2];
    Tensor y(n, c_n, to_n, ho_n, wo_n);
    argmax_.assign(y.size(), 0);
    size_t oi = 0;
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < c_n; ++c)
        for (int to = 0; to < to_n; ++to)
          for (int yo = 0; yo < ho_n; ++yo)
            for (int xo = 0; xo < wo_n; ++xo, ++oi) {
              double best = -1e308;
              size_t best_idx = 0;
              for (int dt = 0; dt < stride[0]; ++dt)
                for (int dy = 0; dy < stride[1]; ++dy)
                  for (int dx = 0; dx < stride[2]; ++dx) {
                    const int ti = to * stride[0] + dt, yi = yo * stride[1] + dy,
                              xi = xo * stride[2] + dx;
                    const size_t idx = (((size_t(b) * c_n + c) * t + ti) * h + yi) * w + xi;
                    const double v = x.data()[idx];
                    if (v > best) {
                      best = v;
                      best_idx = idx;
                    }
                  }
              y[oi] = best;
              argmax_[oi] = best_idx;
            }
    return y;
  }

  Tensor backward(const Tensor& gy) {
    if (gy.size() != argmax_.size()) throw ShapeError("maxpool backward: shape mismatch");
    Tensor gx(in_dims_[0], in_dims_[1], in_dims_[2], in_dims_[3], in_dims_[4]);
    for (size_t i = 0; i < gy.size(); ++i) gx.data()[argmax_[i]] += gy[i];
    return gx;
  }

  void release_state() { argmax_.clear(); }

  std::array<int, 3> stride{2, 2, 2};

 private:
  std::array<int, 5> in_dims_{};
  std::vector<size_t> argmax_;
};

class SpatialGlobalAvgPool {
 public:
  Tensor forward(const Tensor& x) {
    in_dims_ = x.dims();
    const int n = x.dim(0), c_n = x.dim(1), t = x.dim(2), h = x.dim(3), w = x.dim(4);
    Tensor y(n, c_n, t, 1, 1);
    const double inv = 1.0 / (double(h) * w);
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < c_n; ++c)
        for (int ti = 0; ti < t; ++ti) {
          const double* p = x.data() + ((size_t(b) * c_n + c) * t + ti) * size_t(h) * w;
          double acc = 0.0;
          for (size_t i = 0; i < size_t(h) * w; ++i) acc += p[i];
          y.at(b, c, ti, 0, 0) = acc * inv;
        }
    return y;
  }

  Tensor backward(const Tensor& gy) {
    const int n = in_dims_[0], c_n = in_dims_[1], t = in_dims_[2], h = in_dims_[3],
              w = in_dims_[4];
    if (gy.dim(0) != n || gy.dim(1) != c_n || gy.dim(2) != t || gy.dim(3) != 1 || gy.dim(4) != 1) {
      throw ShapeError("gap backward: shape mismatch");
    }
    Tensor gx(n, c_n, t, h, w);
    const double inv = 1.0 / (double(h) * w);
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < c_n; ++c)
        for (int ti = 0; ti < t; ++ti) {
          const double g = gy.at(b, c, ti, 0, 0) * inv;
          double* p = gx.data() + ((size_t(b) * c_n + c) * t + ti) * size_t(h) * w;
          for (size_t i = 0; i < size_t(h) * w; ++i) p[i] = g;
        }
    return gx;
  }

 private:
  std::array<int, 5> in_dims_{};
};

// Linear interpolation along time by an integer factor. Sample positions use
// the half-sample convention (align_corners=false), so constants map to
// constants and end samples clamp.
class TemporalLinearUpsample {
 public:
  TemporalLinearUpsample() = default;
  explicit TemporalLinearUpsample(int factor_) : factor(factor_) {
    if (factor_ < 1) throw ValueError("upsample: factor must be >= 1");
  }

  Tensor forward(const Tensor& x) {
    in_dims_ = x.dims();
    const int n = x.dim(0), c_n = x.dim(1), t = x.dim(2), h = x.dim(3), w = x.dim(4);
    const int to_n = t * factor;
    Tensor y(n, c_n, to_n, h, w);
    const size_t plane = size_t(h) * w;
    for (int to = 0; to < to_n; ++to) {
      double pos = (to + 0.5) / factor - 0.5;
      if (pos < 0.0) pos = 0.0;
      if (pos > t - 1) pos = t - 1;
      const int i0 = int(pos);
      const int i1 = std::min(i0 + 1, t - 1);
      const double f1 = pos - i0;
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < c_n; ++c) {
          const double* p0 = x.data() + ((size_t(b) * c_n + c) * t + i0) * plane;
          const double* p1 = x.data() + ((size_t(b) * c_n + c) * t + i1) * plane;
          double* o = y.data() + ((size_t(b) * c_n + c) * to_n + to) * plane;
          for (size_t i = 0; i < plane; ++i) o[i] = (1.0 - f1) * p0[i] + f1 * p1[i];
        }
    }
    return y;
  }

  Tensor backward(const Tensor& gy) {
    const int n = in_dims_[0], c_n = in_dims_[1], t = in_dims_[2], h = in_dims_[3],
              w = in_dims_[4];
    const int to_n = t * factor;
    if (gy.dim(0) != n || gy.dim(1) != c_n || gy.dim(2) != to_n || gy.dim(3) != h ||
        gy.dim(4) != w) {
      throw ShapeError("upsample backward: shape mismatch");
    }
    Tensor gx(n, c_n, t, h, w);
    const size_t plane = size_t(h) * w;
    for (int to = 0; to < to_n; ++to) {
      double pos = (to + 0.5) / factor - 0.5;
      if (pos < 0.0) pos = 0.0;
      if (pos > t - 1) pos = t - 1;
      const int i0 = int(pos);
      const int i1 = std::min(i0 + 1, t - 1);
      const double f1 = pos - i0;
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < c_n; ++c) {
          const double* g = gy.data() + ((size_t(b) * c_n + c) * to_n + to) * plane;
          double* o0 = gx.data() + ((size_t(b) * c_n + c) * t + i0) * plane;
          double* o1 = gx.data() + ((size_t(b) * c_n + c) * t + i1) * plane;
          for (size_t i = 0; i < plane; ++i) {
            o0[i] += (1.0 - f1) * g[i];
            o1[i] += f1 * g[i];
          }
        }
    }
    return gx;
  }

  int factor = 4;

 private:
  std::array<int, 5> in_dims_{};
};

}  // namespace autohr
