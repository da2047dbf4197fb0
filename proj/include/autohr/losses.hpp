#pragma once

#include <cmath>
#include <vector>

#include "autohr/errors.hpp"
#include "autohr/signal.hpp"

namespace autohr {

// 1 - Pearson(x, y), range [0, 2]. Raises on zero variance rather than
// clamping, so a collapsed prediction fails loudly.
inline double neg_pearson_loss(const std::vector<double>& x, const std::vector<double>& y,
                               std::vector<double>* gx = nullptr) {
  if (x.size() != y.size()) throw ShapeError("neg_pearson: length mismatch");
  if (x.size() < 2) throw ShapeError("neg_pearson: need at least 2 samples");
  const int n = int(x.size());
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(x[size_t(i)]) || !std::isfinite(y[size_t(i)])) {
      throw ValueError("neg_pearson: non-finite input");
    }
    mx += x[size_t(i)];
    my += y[size_t(i)];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (int i = 0; i < n; ++i) {
    const double dx = x[size_t(i)] - mx, dy = y[size_t(i)] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0) throw DegenerateVarianceError("neg_pearson: prediction variance is zero");
  if (syy <= 0.0) throw DegenerateVarianceError("neg_pearson: reference variance is zero");
  const double denom = std::sqrt(sxx * syy);
  const double r = sxy / denom;
  if (gx) {
    // dr/dx_i = (y_i - my)/denom - (x_i - mx) * sxy / (sxx * denom); the
    // centering terms vanish because both centered sums are zero.
    gx->assign(size_t(n), 0.0);
    for (int i = 0; i < n; ++i) {
      const double dx = x[size_t(i)] - mx, dy = y[size_t(i)] - my;
      (*gx)[size_t(i)] = -(dy / denom - dx * sxy / (sxx * denom));
    }
  }
  return 1.0 - r;
}

inline int hr_label_index(double hr_bpm, const Band& band) {
  validate_band(band);
  const int k_len = band_size(band);
  const int idx = int(std::lround((hr_bpm - band.lo_bpm) / band.step_bpm));
  if (idx < 0 || idx >= k_len) {
    throw InvalidLabelError("hr " + std::to_string(hr_bpm) + " bpm outside band [" +
                            std::to_string(band.lo_bpm) + ", " + std::to_string(band.hi_bpm) +
                            "]");
  }
  return idx;
}

// Cross-entropy over the band grid with the raw periodogram powers as logits
// (no log or normalization applied first). A constant signal has all-zero
// powers, a uniform softmax, and a loss of exactly ln(band size).
inline double freq_ce_loss(const PulseSignal& pred, double hr_bpm, const Band& band = Band{},
                           std::vector<double>* gx = nullptr) {
  const int label = hr_label_index(hr_bpm, band);
  std::vector<double> power = compute_psd(pred, band);
  const int k_len = int(power.size());
  double mx = power[0];
  for (double p : power) mx = std::max(mx, p);
  double z = 0.0;
  for (double p : power) z += std::exp(p - mx);
  const double log_z = std::log(z) + mx;
  const double loss = log_z - power[size_t(label)];
  if (gx) {
    std::vector<double> gpow(static_cast<size_t>(k_len));
    for (int k = 0; k < k_len; ++k) {
      gpow[size_t(k)] = std::exp(power[size_t(k)] - log_z);
    }
    gpow[size_t(label)] -= 1.0;
    *gx = psd_backward(pred, band, gpow);
  }
  return loss;
}

struct LossReport {
  double time = 0.0;     // NaN when lambda = 0 and the time term is degenerate
  double fre = 0.0;
  double overall = 0.0;
};

// overall = lambda * time + fre. With lambda = 0 the time term is excluded
// from the objective and its gradient; it is still evaluated for reporting
// when possible.
inline LossReport overall_loss(const PulseSignal& pred, const std::vector<double>& gt_ppg,
                               double hr_bpm, double lambda, const Band& band = Band{},
                               std::vector<double>* gx = nullptr) {
  if (!(lambda >= 0.0)) throw ValueError("overall_loss: lambda must be >= 0");
  if (gt_ppg.size() != pred.samples.size()) {
    throw ShapeError("overall_loss: ppg reference length mismatch");
  }
  LossReport rep;
  std::vector<double> g_time, g_fre;
  if (lambda > 0.0) {
    rep.time = neg_pearson_loss(pred.samples, gt_ppg, gx ? &g_time : nullptr);
  } else {
    try {
      rep.time = neg_pearson_loss(pred.samples, gt_ppg, nullptr);
    } catch (const DegenerateVarianceError&) {
      rep.time = std::nan("");
    }
  }
  rep.fre = freq_ce_loss(pred, hr_bpm, band, gx ? &g_fre : nullptr);
  rep.overall = (lambda > 0.0 ? lambda * rep.time : 0.0) + rep.fre;
  if (gx) {
    gx->assign(pred.samples.size(), 0.0);
    for (size_t i = 0; i < gx->size(); ++i) {
      (*gx)[i] = (lambda > 0.0 ? lambda * g_time[i] : 0.0) + g_fre[i];
    }
  }
  return rep;
}

}  // namespace autohr
