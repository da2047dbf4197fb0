#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "autohr/errors.hpp"

namespace autohr {

// Sampled scalar pulse trace. fps is the sampling rate of `samples`.
struct PulseSignal {
  std::vector<double> samples;
  double fps = 0.0;
};

inline void validate_signal(const PulseSignal& s, const char* who) {
  if (s.samples.size() < 2) {
    throw ShapeError(std::string(who) + ": signal needs at least 2 samples");
  }
  if (!(s.fps > 0.0)) {
    throw ValueError(std::string(who) + ": fps must be positive");
  }
  for (double v : s.samples) {
    if (!std::isfinite(v)) throw ValueError(std::string(who) + ": non-finite sample");
  }
}

// Planar video volume, values in [0, 1]. Layout (c, t, y, x), c is RGB order
// when c == 3.
struct VideoClip {
  int c = 0, t = 0, h = 0, w = 0;
  std::vector<double> v;
  double fps = 0.0;

  VideoClip() = default;
  VideoClip(int c_, int t_, int h_, int w_, double fps_)
      : c(c_), t(t_), h(h_), w(w_), fps(fps_) {
    if (c < 1 || t < 2 || h < 1 || w < 1) {
      throw ShapeError("VideoClip: need c>=1, t>=2, h>=1, w>=1");
    }
    if (!(fps > 0.0)) throw ValueError("VideoClip: fps must be positive");
    v.assign(size_t(c) * t * h * w, 0.0);
  }

  double& at(int ci, int ti, int yi, int xi) {
    return v[((size_t(ci) * t + ti) * h + yi) * w + xi];
  }
  const double& at(int ci, int ti, int yi, int xi) const {
    return v[((size_t(ci) * t + ti) * h + yi) * w + xi];
  }
};

// Frequency band for spectral HR analysis, in beats per minute.
struct Band {
  double lo_bpm = 40.0;
  double hi_bpm = 180.0;
  double step_bpm = 1.0;
};

inline void validate_band(const Band& b) {
  if (!(b.lo_bpm > 0.0) || !(b.hi_bpm > b.lo_bpm) || !(b.step_bpm > 0.0)) {
    throw InvalidBandError("band needs 0 < lo < hi and step > 0");
  }
}

inline int band_size(const Band& b) {
  validate_band(b);
  return int(std::floor((b.hi_bpm - b.lo_bpm) / b.step_bpm + 0.5)) + 1;
}

inline std::vector<double> band_freqs_bpm(const Band& b) {
  int k = band_size(b);
  std::vector<double> f(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) f[size_t(i)] = b.lo_bpm + i * b.step_bpm;
  return f;
}

inline void check_nyquist(const Band& b, double fps) {
  if (b.hi_bpm / 60.0 > fps / 2.0) {
    throw InvalidBandError("band top exceeds Nyquist: hi=" + std::to_string(b.hi_bpm) +
                           " bpm at fps=" + std::to_string(fps));
  }
}

// Periodogram over the explicit band grid: samples are zero-meaned, window is
// rectangular, power[k] = |sum_t c_t * exp(-i w_k t)|^2 / T with
// w_k = 2*pi*(f_k/60)/fps. No FFT; the band grid is not FFT-aligned.
inline std::vector<double> compute_psd(const PulseSignal& s, const Band& band) {
  validate_signal(s, "compute_psd");
  validate_band(band);
  check_nyquist(band, s.fps);
  const int t_len = int(s.samples.size());
  double mean = 0.0;
  for (double v : s.samples) mean += v;
  mean /= t_len;

  const int k_len = band_size(band);
  std::vector<double> power(size_t(k_len), 0.0);
  // A constant signal is identically zero once centered; short-circuit so the
  // result is exact instead of rounding noise from the computed mean.
  const auto [mn, mx] = std::minmax_element(s.samples.begin(), s.samples.end());
  if (*mn == *mx) return power;
  for (int k = 0; k < k_len; ++k) {
    const double f_hz = (band.lo_bpm + k * band.step_bpm) / 60.0;
    const double w = 2.0 * 3.141592653589793238462643383279502884 * f_hz / s.fps;
    double re = 0.0, im = 0.0;
    for (int t = 0; t < t_len; ++t) {
      const double c = s.samples[size_t(t)] - mean;
      re += c * std::cos(w * t);
      im += c * std::sin(w * t);
    }
    power[size_t(k)] = (re * re + im * im) / t_len;
  }
  return power;
}

// d(power)/d(samples) chained with an upstream gradient over the band bins.
// For centered c_t, A_k = sum c_t cos, B_k = sum c_t sin:
//   d p_k / d s_t = (2/T) * (A_k*(cos(w_k t) - mean_cos_k) + B_k*(sin(w_k t) - mean_sin_k))
inline std::vector<double> psd_backward(const PulseSignal& s, const Band& band,
                                        const std::vector<double>& grad_power) {
  validate_signal(s, "psd_backward");
  validate_band(band);
  check_nyquist(band, s.fps);
  const int t_len = int(s.samples.size());
  const int k_len = band_size(band);
  if (int(grad_power.size()) != k_len) {
    throw ShapeError("psd_backward: grad_power size mismatch");
  }
  double mean = 0.0;
  for (double v : s.samples) mean += v;
  mean /= t_len;

  std::vector<double> grad(size_t(t_len), 0.0);
  for (int k = 0; k < k_len; ++k) {
    const double g = grad_power[size_t(k)];
    if (g == 0.0) continue;
    const double f_hz = (band.lo_bpm + k * band.step_bpm) / 60.0;
    const double w = 2.0 * 3.141592653589793238462643383279502884 * f_hz / s.fps;
    double a = 0.0, b = 0.0, mean_cos = 0.0, mean_sin = 0.0;
    for (int t = 0; t < t_len; ++t) {
      const double ct = std::cos(w * t), st = std::sin(w * t);
      a += (s.samples[size_t(t)] - mean) * ct;
      b += (s.samples[size_t(t)] - mean) * st;
      mean_cos += ct;
      mean_sin += st;
    }
    mean_cos /= t_len;
    mean_sin /= t_len;
    const double scale = 2.0 * g / t_len;
    for (int t = 0; t < t_len; ++t) {
      grad[size_t(t)] += scale * (a * (std::cos(w * t) - mean_cos) +
                                  b * (std::sin(w * t) - mean_sin));
    }
  }
  return grad;
}

// Index of the largest power; exact ties resolve to the lower frequency.
inline int peak_index(const std::vector<double>& power) {
  if (power.empty()) throw ShapeError("peak_index: empty spectrum");
  int best = -1;
  double best_val = 0.0;
  for (int k = 0; k < int(power.size()); ++k) {
    if (power[size_t(k)] > best_val) {
      best_val = power[size_t(k)];
      best = k;
    }
  }
  if (best < 0) throw NoPeakError("spectrum has no mass in band");
  return best;
}

inline double estimate_hr(const PulseSignal& s, const Band& band = Band{}) {
  std::vector<double> power = compute_psd(s, band);
  int k = peak_index(power);
  return band.lo_bpm + k * band.step_bpm;
}

inline double clip_average_hr(const std::vector<double>& clip_hrs) {
  if (clip_hrs.empty()) throw ShapeError("clip_average_hr: no clips");
  double acc = 0.0;
  for (double h : clip_hrs) acc += h;
  return acc / double(clip_hrs.size());
}

// sd is the population standard deviation of the signed errors, pearson_r is
// the sample correlation of predictions against ground truth. pearson_r is
// absent (never silently zero) when either side has zero variance.
struct MetricsReport {
  double sd = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  std::optional<double> pearson_r;
};

inline MetricsReport compute_metrics(const std::vector<double>& preds,
                                     const std::vector<double>& gts) {
  if (preds.size() != gts.size()) throw ShapeError("compute_metrics: length mismatch");
  if (preds.empty()) throw ShapeError("compute_metrics: empty input");
  const int n = int(preds.size());
  double sum_e = 0.0, sum_abs = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double e = preds[size_t(i)] - gts[size_t(i)];
    sum_e += e;
    sum_abs += std::fabs(e);
    sum_sq += e * e;
  }
  MetricsReport m;
  m.mae = sum_abs / n;
  m.rmse = std::sqrt(sum_sq / n);
  const double mean_e = sum_e / n;
  double var_e = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = (preds[size_t(i)] - gts[size_t(i)]) - mean_e;
    var_e += d * d;
  }
  m.sd = std::sqrt(var_e / n);

  double mp = 0.0, mg = 0.0;
  for (int i = 0; i < n; ++i) {
    mp += preds[size_t(i)];
    mg += gts[size_t(i)];
  }
  mp /= n;
  mg /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (int i = 0; i < n; ++i) {
    const double dx = preds[size_t(i)] - mp, dy = gts[size_t(i)] - mg;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx > 0.0 && syy > 0.0) {
    m.pearson_r = sxy / std::sqrt(sxx * syy);
  }
  return m;
}

// Round-trip-exact double formatting (17 significant digits).
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s, const char* who) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ValueError(std::string(who) + ": bad number '" + s + "'");
  }
}

// Text format: first line "fps=<value>", then one sample per line.
inline void save_signal(const std::string& path, const PulseSignal& s) {
  validate_signal(s, "save_signal");
  std::ofstream f(path);
  if (!f) throw IoError("save_signal: cannot open " + path);
  f << "fps=" << format_double(s.fps) << "\n";
  for (double v : s.samples) f << format_double(v) << "\n";
  if (!f) throw IoError("save_signal: write failed for " + path);
}

inline PulseSignal load_signal(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("load_signal: cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line.rfind("fps=", 0) != 0) {
    throw IoError("load_signal: missing fps header in " + path);
  }
  PulseSignal s;
  s.fps = parse_double(line.substr(4), "load_signal");
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    s.samples.push_back(parse_double(line, "load_signal"));
  }
  validate_signal(s, "load_signal");
  return s;
}

}  // namespace autohr
