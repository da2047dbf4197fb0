#pragma once

#include <array>
#include <cmath>

#include "autohr/layers.hpp"
#include "autohr/tensor.hpp"

namespace autohr {

// Temporal difference convolution. The kernel is fixed at 3x3x3; theta is a
// constant per instance, never learned. theta = 0 degrades to a vanilla 3D
// convolution.
struct TDCParams {
  double theta = 0.0;
  std::array<int, 3> stride{1, 1, 1};
  std::array<int, 3> pad{1, 1, 1};
};

inline void validate_tdc(const Tensor& x, const Tensor& w, const TDCParams& p) {
  if (w.dim(2) != 3 || w.dim(3) != 3 || w.dim(4) != 3) {
    throw ShapeError("tdc: kernel must be 3x3x3, got " + w.shape_str());
  }
  if (x.dim(1) != w.dim(1)) throw ShapeError("tdc: channel mismatch");
  if (!(p.theta >= 0.0 && p.theta <= 1.0)) {
    throw ValueError("tdc: theta must lie in [0, 1]");
  }
  for (int i = 0; i < 3; ++i) {
    if (p.stride[size_t(i)] < 1 || p.pad[size_t(i)] < 0) throw ValueError("tdc: bad stride/pad");
  }
}

// Direct evaluation of the defining sum. The t-1 and t+1 kernel slices each
// contribute w * (neighborhood - theta * center); the current slice
// contributes w * neighborhood. The theta term references the center voxel of
// the current frame and applies in full at padded borders, where the
// neighborhood samples read zeros.
inline Tensor tdc_forward(const Tensor& x, const Tensor& w, const TDCParams& p) {
  validate_tdc(x, w, p);
  const auto od = conv3d_out_dims(x, w, p.stride, p.pad);
  const int n = x.dim(0), ci_n = x.dim(1), t_in = x.dim(2), h_in = x.dim(3), w_in = x.dim(4);
  const int co_n = w.dim(0);
  auto sample = [&](int b, int ci, int ti, int yi, int xi) -> double {
    if (ti < 0 || ti >= t_in || yi < 0 || yi >= h_in || xi < 0 || xi >= w_in) return 0.0;
    return x.at(b, ci, ti, yi, xi);
  };
  Tensor out(n, co_n, od[0], od[1], od[2]);
  for (int b = 0; b < n; ++b)
    for (int co = 0; co < co_n; ++co)
      for (int to = 0; to < od[0]; ++to)
        for (int yo = 0; yo < od[1]; ++yo)
          for (int xo = 0; xo < od[2]; ++xo) {
            const int t0 = to * p.stride[0] - p.pad[0];
            const int y0 = yo * p.stride[1] - p.pad[1];
            const int x0 = xo * p.stride[2] - p.pad[2];
            double acc = 0.0;
            for (int ci = 0; ci < ci_n; ++ci) {
              const double center = sample(b, ci, t0 + 1, y0 + 1, x0 + 1);
              for (int dt = 0; dt < 3; ++dt) {
                const double adj = (dt == 1) ? 0.0 : p.theta * center;
                for (int dy = 0; dy < 3; ++dy)
                  for (int dx = 0; dx < 3; ++dx) {
                    acc += w.at(co, ci, dt, dy, dx) *
                           (sample(b, ci, t0 + dt, y0 + dy, x0 + dx) - adj);
                  }
              }
            }
            out.at(b, co, to, yo, xo) = acc;
          }
  return out;
}

namespace detail {

// Per (c_out, c_in) sum of the temporal-adjacent kernel slices, the factor in
// front of the center voxel in the re-parameterized form.
inline std::vector<double> adjacent_slice_sums(const Tensor& w) {
  const int co_n = w.dim(0), ci_n = w.dim(1);
  std::vector<double> s(size_t(co_n) * ci_n, 0.0);
  for (int co = 0; co < co_n; ++co)
    for (int ci = 0; ci < ci_n; ++ci) {
      double acc = 0.0;
      for (int dy = 0; dy < 3; ++dy)
        for (int dx = 0; dx < 3; ++dx) {
          acc += w.at(co, ci, 0, dy, dx) + w.at(co, ci, 2, dy, dx);
        }
      s[size_t(co) * ci_n + ci] = acc;
    }
  return s;
}

}  // namespace detail

// Re-parameterized evaluation: one vanilla convolution plus a rank-1 center
// correction, out -= theta * sum_slices(w) * center. Algebraically equal to
// tdc_forward; cheaper because the correction touches one voxel per tap.
inline Tensor tdc_forward_reparam(const Tensor& x, const Tensor& w, const TDCParams& p) {
  validate_tdc(x, w, p);
  Tensor out = conv3d_forward(x, w, {}, p.stride, p.pad);
  if (p.theta == 0.0) return out;
  const auto s = detail::adjacent_slice_sums(w);
  const int n = x.dim(0), ci_n = x.dim(1), t_in = x.dim(2), h_in = x.dim(3), w_in = x.dim(4);
  const int co_n = w.dim(0);
  for (int b = 0; b < n; ++b)
    for (int co = 0; co < co_n; ++co)
      for (int to = 0; to < out.dim(2); ++to) {
        const int tc = to * p.stride[0] - p.pad[0] + 1;
        if (tc < 0 || tc >= t_in) continue;
        for (int yo = 0; yo < out.dim(3); ++yo) {
          const int yc = yo * p.stride[1] - p.pad[1] + 1;
          if (yc < 0 || yc >= h_in) continue;
          for (int xo = 0; xo < out.dim(4); ++xo) {
            const int xc = xo * p.stride[2] - p.pad[2] + 1;
            if (xc < 0 || xc >= w_in) continue;
            double corr = 0.0;
            for (int ci = 0; ci < ci_n; ++ci) {
              corr += s[size_t(co) * ci_n + ci] * x.at(b, ci, tc, yc, xc);
            }
            out.at(b, co, to, yo, xo) -= p.theta * corr;
          }
        }
      }
  return out;
}

// Gradients accumulate into pre-sized gx/gw (either may be null). Derived by
// differentiating the re-parameterized form: the vanilla part is ordinary
// convolution backprop; the center correction contributes
//   gx[center] -= theta * sum_co s[co,ci] * gy[out],
//   gw[adjacent slices] -= theta * (gy . center) per (co, ci).
inline void tdc_backward(const Tensor& x, const Tensor& w, const TDCParams& p, const Tensor& gy,
                         Tensor* gx, Tensor* gw) {
  validate_tdc(x, w, p);
  conv3d_backward(x, w, p.stride, p.pad, gy, gx, gw, nullptr);
  if (p.theta == 0.0) return;
  const int n = x.dim(0), ci_n = x.dim(1), t_in = x.dim(2), h_in = x.dim(3), w_in = x.dim(4);
  const int co_n = w.dim(0);
  const auto s = detail::adjacent_slice_sums(w);
  std::vector<double> g_center(size_t(co_n) * ci_n, 0.0);
  for (int b = 0; b < n; ++b)
    for (int co = 0; co < co_n; ++co)
      for (int to = 0; to < gy.dim(2); ++to) {
        const int tc = to * p.stride[0] - p.pad[0] + 1;
        if (tc < 0 || tc >= t_in) continue;
        for (int yo = 0; yo < gy.dim(3); ++yo) {
          const int yc = yo * p.stride[1] - p.pad[1] + 1;
          if (yc < 0 || yc >= h_in) continue;
          for (int xo = 0; xo < gy.dim(4); ++xo) {
            const int xc = xo * p.stride[2] - p.pad[2] + 1;
            if (xc < 0 || xc >= w_in) continue;
            const double g = gy.at(b, co, to, yo, xo);
            for (int ci = 0; ci < ci_n; ++ci) {
              if (gx) {
                gx->at(b, ci, tc, yc, xc) -= p.theta * s[size_t(co) * ci_n + ci] * g;
              }
              if (gw) {
                g_center[size_t(co) * ci_n + ci] += g * x.at(b, ci, tc, yc, xc);
              }
            }
          }
        }
      }
  if (gw) {
    for (int co = 0; co < co_n; ++co)
      for (int ci = 0; ci < ci_n; ++ci) {
        const double corr = p.theta * g_center[size_t(co) * ci_n + ci];
        for (int dy = 0; dy < 3; ++dy)
          for (int dx = 0; dx < 3; ++dx) {
            gw->at(co, ci, 0, dy, dx) -= corr;
            gw->at(co, ci, 2, dy, dx) -= corr;
          }
      }
  }
}

// Layer wrapper used inside networks; forward runs the re-parameterized path.
class TdcConv3d {
 public:
  TdcConv3d() = default;
  TdcConv3d(int c_in, int c_out, double theta, Rng& rng) {
    params.theta = theta;
    w = Tensor(c_out, c_in, 3, 3, 3);
    gw = Tensor(c_out, c_in, 3, 3, 3);
    const double sd = std::sqrt(2.0 / (double(c_in) * 27.0));
    for (size_t i = 0; i < w.size(); ++i) w[i] = sd * rng.normal();
  }

  Tensor forward(const Tensor& x) {
    x_ = x;
    return tdc_forward_reparam(x, w, params);
  }

  Tensor backward(const Tensor& gy) {
    Tensor gx = Tensor::zeros_like(x_);
    tdc_backward(x_, w, params, gy, &gx, &gw);
    return gx;
  }

  void release_state() { x_ = Tensor(); }

  TDCParams params;
  Tensor w, gw;

 private:
  Tensor x_;
};

}  // namespace autohr
