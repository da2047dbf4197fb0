#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "autohr/dataset.hpp"
#include "autohr/errors.hpp"
#include "autohr/rng.hpp"
#include "autohr/signal.hpp"

namespace autohr {

// Reference pulse: unit fundamental plus a weaker second harmonic.
inline std::vector<double> gen_ppg(double hr_bpm, double fps, int frames,
                                   double harmonic_ratio = 0.5) {
  if (frames < 2) throw ValueError("gen_ppg: need at least 2 frames");
  if (!(fps > 0.0) || !(hr_bpm > 0.0)) throw ValueError("gen_ppg: fps and rate must be positive");
  std::vector<double> s(static_cast<size_t>(frames));
  const double f = hr_bpm / 60.0;
  for (int t = 0; t < frames; ++t) {
    const double ph = 2.0 * M_PI * f * double(t) / fps;
    s[size_t(t)] = std::sin(ph) + harmonic_ratio * std::sin(2.0 * ph);
  }
  return s;
}

struct Rect {
  int y0 = 0, x0 = 0, h = 0, w = 0;
};

inline Rect centered_region(int height, int width, double frac) {
  if (!(frac > 0.0 && frac <= 1.0)) throw ValueError("centered_region: frac must be in (0, 1]");
  Rect r;
  r.h = std::max(1, int(std::lround(frac * height)));
  r.w = std::max(1, int(std::lround(frac * width)));
  r.y0 = (height - r.h) / 2;
  r.x0 = (width - r.w) / 2;
  return r;
}

// Synthetic face video: a centered skin rectangle carries the pulse with a
// green-dominant amplitude (green twice red and blue), the rest is static
// background. Optional global illumination drift, rigid sinusoidal motion of
// the skin patch, and per-voxel Gaussian noise. Values clamp to [0,1].
struct SynthParams {
  double fps = 30.0;
  int frames = 900;
  int height = 64, width = 64;
  double hr_bpm = 72.0;
  double harmonic_ratio = 0.5;
  double region_frac = 0.6;
  std::array<double, 3> skin_base = {0.55, 0.45, 0.40};
  std::array<double, 3> bg_base = {0.15, 0.18, 0.20};
  double pulse_amp_green = 0.05;
  double noise_sd = 0.005;
  double drift_amp = 0.0;
  double drift_freq_hz = 0.1;
  double motion_amp = 0.0;  // pixels of rigid translation
  double motion_freq_hz = 0.3;
  uint64_t seed = 1;
};

struct SynthClip {
  VideoClip clip;
  std::vector<double> ppg;
  Rect skin;          // rest-position skin rectangle
  double clamp_frac;  // fraction of voxel values clipped into [0,1]
};

inline SynthClip gen_clip(const SynthParams& p) {
  if (p.frames < 2) throw ValueError("gen_clip: need at least 2 frames");
  if (p.height < 2 || p.width < 2) throw ValueError("gen_clip: frame too small");
  if (!(p.region_frac > 0.0 && p.region_frac <= 1.0)) {
    throw ValueError("gen_clip: region_frac must be in (0, 1]");
  }
  if (p.noise_sd < 0.0 || p.motion_amp < 0.0 || p.drift_amp < 0.0) {
    throw ValueError("gen_clip: negative amplitude");
  }
  SynthClip out;
  out.ppg = gen_ppg(p.hr_bpm, p.fps, p.frames, p.harmonic_ratio);
  out.clip = VideoClip(3, p.frames, p.height, p.width, p.fps);

  const Rect r = centered_region(p.height, p.width, p.region_frac);
  out.skin = r;
  const int margin = int(std::ceil(p.motion_amp));
  if (r.y0 - margin < 0 || r.y0 + r.h + margin > p.height || r.x0 - margin < 0 ||
      r.x0 + r.w + margin > p.width) {
    throw ValueError("gen_clip: motion would push the skin region out of frame");
  }

  const std::array<double, 3> amp = {0.5 * p.pulse_amp_green, p.pulse_amp_green,
                                     0.5 * p.pulse_amp_green};
  Rng rng = Rng::stream(p.seed, 0x736b696e /* skin */);
  size_t clamped = 0;
  for (int t = 0; t < p.frames; ++t) {
    const double drift = p.drift_amp * std::sin(2.0 * M_PI * p.drift_freq_hz * t / p.fps);
    const double mph = 2.0 * M_PI * p.motion_freq_hz * t / p.fps;
    const int dy = int(std::lround(p.motion_amp * std::sin(mph)));
    const int dx = int(std::lround(p.motion_amp * std::cos(mph)));
    const int sy0 = r.y0 + dy, sx0 = r.x0 + dx;
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x) {
        const bool skin = y >= sy0 && y < sy0 + r.h && x >= sx0 && x < sx0 + r.w;
        for (int c = 0; c < 3; ++c) {
          double v = (skin ? p.skin_base[size_t(c)] + amp[size_t(c)] * out.ppg[size_t(t)]
                           : p.bg_base[size_t(c)]) +
                     drift + p.noise_sd * rng.normal();
          if (v < 0.0 || v > 1.0) {
            v = std::clamp(v, 0.0, 1.0);
            ++clamped;
          }
          out.clip.at(c, t, y, x) = v;
        }
      }
  }
  out.clamp_frac = double(clamped) / double(out.clip.v.size());
  return out;
}

// Per-frame spatial channel means over a region.
inline std::array<std::vector<double>, 3> region_channel_means(const VideoClip& clip,
                                                               const Rect& region) {
  if (clip.c != 3) throw ShapeError("channel means: need an RGB clip");
  if (region.h < 1 || region.w < 1 || region.y0 < 0 || region.x0 < 0 ||
      region.y0 + region.h > clip.h || region.x0 + region.w > clip.w) {
    throw ValueError("channel means: region outside the frame");
  }
  std::array<std::vector<double>, 3> means;
  for (auto& m : means) m.assign(size_t(clip.t), 0.0);
  const double inv = 1.0 / (double(region.h) * region.w);
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < clip.t; ++t) {
      double acc = 0.0;
      for (int y = region.y0; y < region.y0 + region.h; ++y)
        for (int x = region.x0; x < region.x0 + region.w; ++x) acc += clip.at(c, t, y, x);
      means[size_t(c)][size_t(t)] = acc * inv;
    }
  return means;
}

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

inline double sd_of(const std::vector<double>& v) {
  // constant input is exactly flat; the accumulated mean would leave
  // rounding residue and hide degeneracy
  const auto mm = std::minmax_element(v.begin(), v.end());
  if (*mm.first == *mm.second) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / double(v.size()));
}

}  // namespace detail

// Zero-meaned spatial average of the green channel.
inline PulseSignal green_trace(const VideoClip& clip, const Rect& region) {
  auto means = region_channel_means(clip, region);
  std::vector<double>& g = means[1];
  const double m = detail::mean_of(g);
  for (double& v : g) v -= m;
  return PulseSignal{g, clip.fps};
}

// Chrominance projection: X = 3Rn - 2Gn, Y = 1.5Rn + Gn - 1.5Bn on
// whole-signal normalized channel means, output X - (sd X / sd Y) Y with the
// mean removed.
inline PulseSignal chrom_trace(const VideoClip& clip, const Rect& region) {
  auto means = region_channel_means(clip, region);
  std::array<std::vector<double>, 3> norm;
  for (int c = 0; c < 3; ++c) {
    const double m = detail::mean_of(means[size_t(c)]);
    if (m == 0.0) throw DegenerateVarianceError("chrom: zero channel mean");
    norm[size_t(c)] = means[size_t(c)];
    for (double& v : norm[size_t(c)]) v /= m;
  }
  const size_t n = norm[0].size();
  std::vector<double> xs(n), ys(n);
  for (size_t t = 0; t < n; ++t) {
    xs[t] = 3.0 * norm[0][t] - 2.0 * norm[1][t];
    ys[t] = 1.5 * norm[0][t] + norm[1][t] - 1.5 * norm[2][t];
  }
  const double sy = detail::sd_of(ys);
  if (sy == 0.0) throw DegenerateVarianceError("chrom: flat chrominance");
  const double alpha = detail::sd_of(xs) / sy;
  std::vector<double> out(n);
  for (size_t t = 0; t < n; ++t) out[t] = xs[t] - alpha * ys[t];
  const double m = detail::mean_of(out);
  for (double& v : out) v -= m;
  return PulseSignal{out, clip.fps};
}

// Plane-orthogonal projection: within each 1.6 s window the channel means are
// normalized by their window mean, projected through rows (0,1,-1) and
// (-2,1,1), combined as S1 + (sd1/sd2) S2, mean-removed, and overlap-added.
inline PulseSignal pos_trace(const VideoClip& clip, const Rect& region) {
  auto means = region_channel_means(clip, region);
  const int n = clip.t;
  const int l = int(std::lround(1.6 * clip.fps));
  if (l < 2 || n < l) {
    throw TooShortError("pos: clip shorter than the 1.6 s window");
  }
  std::vector<double> out(size_t(n), 0.0);
  std::vector<double> cn(3), s1(static_cast<size_t>(l)), s2(static_cast<size_t>(l));
  for (int w0 = 0; w0 + l <= n; ++w0) {
    for (int c = 0; c < 3; ++c) {
      double m = 0.0;
      for (int t = w0; t < w0 + l; ++t) m += means[size_t(c)][size_t(t)];
      m /= double(l);
      if (m == 0.0) throw DegenerateVarianceError("pos: zero channel mean in window");
      cn[size_t(c)] = m;
    }
    for (int t = 0; t < l; ++t) {
      const double r = means[0][size_t(w0 + t)] / cn[0];
      const double g = means[1][size_t(w0 + t)] / cn[1];
      const double b = means[2][size_t(w0 + t)] / cn[2];
      s1[size_t(t)] = g - b;
      s2[size_t(t)] = -2.0 * r + g + b;
    }
    const double sd2 = detail::sd_of(s2);
    const double alpha = sd2 > 0.0 ? detail::sd_of(s1) / sd2 : 0.0;
    double hm = 0.0;
    for (int t = 0; t < l; ++t) hm += s1[size_t(t)] + alpha * s2[size_t(t)];
    hm /= double(l);
    for (int t = 0; t < l; ++t) {
      out[size_t(w0 + t)] += s1[size_t(t)] + alpha * s2[size_t(t)] - hm;
    }
  }
  return PulseSignal{out, clip.fps};
}

enum class BaselineMethod { green, chrom, pos };

inline BaselineMethod baseline_from_name(const std::string& name) {
  if (name == "green") return BaselineMethod::green;
  if (name == "chrom") return BaselineMethod::chrom;
  if (name == "pos") return BaselineMethod::pos;
  throw ConfigError("unknown baseline method '" + name + "' (green, chrom, pos)");
}

inline PulseSignal baseline_trace(BaselineMethod m, const VideoClip& clip, const Rect& region) {
  switch (m) {
    case BaselineMethod::green: return green_trace(clip, region);
    case BaselineMethod::chrom: return chrom_trace(clip, region);
    case BaselineMethod::pos: return pos_trace(clip, region);
  }
  throw ValueError("unreachable");
}

// Quantizes a generated clip to 8 bits, the exact representation written to
// and read back from disk.
inline LoadedClip quantize_clip(const SynthClip& sc, const std::string& subject, double hr) {
  LoadedClip out;
  out.meta.fps = sc.clip.fps;
  out.meta.hr = hr;
  out.meta.subject = subject;
  out.meta.frames = sc.clip.t;
  out.meta.height = sc.clip.h;
  out.meta.width = sc.clip.w;
  out.frames.resize(size_t(sc.clip.t) * sc.clip.h * sc.clip.w * 3);
  for (int t = 0; t < sc.clip.t; ++t)
    for (int y = 0; y < sc.clip.h; ++y)
      for (int x = 0; x < sc.clip.w; ++x)
        for (int c = 0; c < 3; ++c) {
          const double v = std::clamp(sc.clip.at(c, t, y, x), 0.0, 1.0);
          out.frames[((size_t(t) * sc.clip.h + y) * size_t(sc.clip.w) + x) * 3 + size_t(c)] =
              uint8_t(std::lround(v * 255.0));
        }
  out.ppg = sc.ppg;
  return out;
}

inline VideoClip loaded_to_video(const LoadedClip& lc) {
  VideoClip clip(3, lc.meta.frames, lc.meta.height, lc.meta.width, lc.meta.fps);
  for (int t = 0; t < clip.t; ++t)
    for (int y = 0; y < clip.h; ++y)
      for (int x = 0; x < clip.w; ++x)
        for (int c = 0; c < 3; ++c) {
          clip.at(c, t, y, x) =
              double(lc.frames[((size_t(t) * clip.h + y) * size_t(clip.w) + x) * 3 +
                               size_t(c)]) /
              255.0;
        }
  return clip;
}

// Full synthetic dataset: `count` videos dealt round-robin over `subjects`
// synthetic identities, rates uniform in [hr_lo, hr_hi], one directory per
// video plus a manifest.csv. Per-video seeds derive from the dataset seed, so
// regeneration is byte-identical.
struct SynthDatasetParams {
  SynthParams base;
  int count = 8;
  int subjects = 4;
  double hr_lo = 50.0, hr_hi = 150.0;
  uint64_t seed = 1;
};

inline std::vector<ManifestRow> gen_dataset(const SynthDatasetParams& dp,
                                            const std::string& out_dir) {
  if (dp.count < 1 || dp.subjects < 1) throw ValueError("gen_dataset: bad counts");
  if (!(dp.hr_lo > 0.0) || dp.hr_hi < dp.hr_lo) throw ValueError("gen_dataset: bad rate range");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + out_dir);
  std::vector<ManifestRow> rows;
  for (int i = 0; i < dp.count; ++i) {
    Rng vid_rng = Rng::stream(dp.seed, 0x76696465 /* vide */, uint64_t(i));
    SynthParams p = dp.base;
    p.hr_bpm = vid_rng.uniform(dp.hr_lo, dp.hr_hi);
    p.seed = vid_rng.next_u64();
    const SynthClip sc = gen_clip(p);
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "clip%04d", i);
    char subjbuf[32];
    std::snprintf(subjbuf, sizeof(subjbuf), "s%03d", i % dp.subjects);
    const LoadedClip lc = quantize_clip(sc, subjbuf, p.hr_bpm);
    const std::string dir = out_dir + "/" + idbuf;
    save_clip_dir(dir, lc);
    ManifestRow r;
    r.id = idbuf;
    r.subject = subjbuf;
    r.hr = p.hr_bpm;
    r.fps = p.fps;
    r.frames = p.frames;
    r.path = idbuf;  // relative to the manifest directory
    rows.push_back(std::move(r));
  }
  write_manifest(out_dir + "/manifest.csv", rows);
  return rows;
}

}  // namespace autohr
