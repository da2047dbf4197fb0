#pragma once

#include <cmath>
#include <vector>

#include "autohr/errors.hpp"
#include "autohr/rng.hpp"
#include "autohr/tensor.hpp"

namespace autohr {

// Spatio-temporal erasing: one axis-aligned tube per application, at most 20%
// of the spatial area and 20% of the frames, filled with zeros or uniform
// noise (even odds). Applied to one sample of a batch in place.
struct EraseBox {
  int t0 = 0, len = 0;
  int y0 = 0, h = 0;
  int x0 = 0, w = 0;
  bool noise_fill = false;
};

inline EraseBox erase_random_tube(Tensor* x, int sample, Rng& rng,
                                  double max_area_frac = 0.2, double max_len_frac = 0.2) {
  if (sample < 0 || sample >= x->dim(0)) throw ValueError("erase: sample out of range");
  const int t = x->dim(2), h = x->dim(3), w = x->dim(4);
  const double area_budget = max_area_frac * h * w;
  const int max_len = std::max(1, int(std::floor(max_len_frac * t)));
  EraseBox box;
  box.len = 1 + int(rng.below(max_len));
  const int max_h = std::max(1, std::min(h, int(std::floor(std::sqrt(area_budget)))));
  box.h = 1 + int(rng.below(max_h));
  const int max_w = std::max(1, std::min(w, int(std::floor(area_budget / box.h))));
  box.w = 1 + int(rng.below(max_w));
  box.t0 = int(rng.below(t - box.len + 1));
  box.y0 = int(rng.below(h - box.h + 1));
  box.x0 = int(rng.below(w - box.w + 1));
  box.noise_fill = rng.uniform() < 0.5;
  for (int c = 0; c < x->dim(1); ++c)
    for (int ti = box.t0; ti < box.t0 + box.len; ++ti)
      for (int yi = box.y0; yi < box.y0 + box.h; ++yi)
        for (int xi = box.x0; xi < box.x0 + box.w; ++xi) {
          x->at(sample, c, ti, yi, xi) = box.noise_fill ? rng.uniform() : 0.0;
        }
  return box;
}

// Rate-shifting: videos with fast pulses are stretched to twice the length
// (halving the label), slow ones keep every second frame (doubling it), and
// mid-range pulses pass through. The frame rate never changes; these produce
// extra training samples next to the originals.
enum class RateShift { none, stretch, squeeze };

inline RateShift rate_shift_for(double hr) {
  if (hr > 90.0) return RateShift::stretch;
  if (hr < 70.0) return RateShift::squeeze;
  return RateShift::none;
}

inline double shifted_hr(double hr, RateShift a) {
  switch (a) {
    case RateShift::none: return hr;
    case RateShift::stretch: return hr / 2.0;
    case RateShift::squeeze: return hr * 2.0;
  }
  throw ValueError("unreachable");
}

// Doubled length: even outputs copy the source, odd ones average neighbors
// (the last repeats the final frame).
inline std::vector<double> stretch_signal(const std::vector<double>& s) {
  if (s.empty()) throw ValueError("stretch: empty signal");
  std::vector<double> out(s.size() * 2);
  for (size_t i = 0; i < s.size(); ++i) {
    out[2 * i] = s[i];
    out[2 * i + 1] = i + 1 < s.size() ? 0.5 * (s[i] + s[i + 1]) : s[i];
  }
  return out;
}

inline std::vector<double> squeeze_signal(const std::vector<double>& s) {
  if (s.empty()) throw ValueError("squeeze: empty signal");
  std::vector<double> out((s.size() + 1) / 2);
  for (size_t i = 0; i < out.size(); ++i) out[i] = s[2 * i];
  return out;
}

inline std::vector<double> shift_signal(const std::vector<double>& s, RateShift a) {
  switch (a) {
    case RateShift::none: return s;
    case RateShift::stretch: return stretch_signal(s);
    case RateShift::squeeze: return squeeze_signal(s);
  }
  throw ValueError("unreachable");
}

// Same resampling over the time axis of a (n, c, t, h, w) tensor.
inline Tensor shift_frames(const Tensor& x, RateShift a) {
  if (a == RateShift::none) return x;
  const int n = x.dim(0), c_n = x.dim(1), t = x.dim(2), h = x.dim(3), w = x.dim(4);
  const size_t plane = size_t(h) * w;
  const int to_n = a == RateShift::stretch ? 2 * t : (t + 1) / 2;
  Tensor y(n, c_n, to_n, h, w);
  for (int b = 0; b < n; ++b)
    for (int c = 0; c < c_n; ++c)
      for (int to = 0; to < to_n; ++to) {
        double* dst = y.data() + ((size_t(b) * c_n + c) * to_n + to) * plane;
        auto src = [&](int ti) {
          return x.data() + ((size_t(b) * c_n + c) * t + ti) * plane;
        };
        if (a == RateShift::squeeze) {
          const double* p = src(2 * to);
          std::copy(p, p + plane, dst);
        } else if (to % 2 == 0) {
          const double* p = src(to / 2);
          std::copy(p, p + plane, dst);
        } else {
          const int i = to / 2;
          const double* p = src(i);
          const double* q = src(std::min(i + 1, t - 1));
          for (size_t k = 0; k < plane; ++k) dst[k] = 0.5 * (p[k] + q[k]);
        }
      }
  return y;
}

inline int shifted_length(int t, RateShift a) {
  switch (a) {
    case RateShift::none: return t;
    case RateShift::stretch: return 2 * t;
    case RateShift::squeeze: return (t + 1) / 2;
  }
  throw ValueError("unreachable");
}

}  // namespace autohr
