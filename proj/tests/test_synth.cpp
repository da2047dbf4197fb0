#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "autohr/losses.hpp"
#include "autohr/synth.hpp"

using namespace autohr;

namespace {

SynthParams small_params() {
  SynthParams p;
  p.height = 32;
  p.width = 32;
  p.frames = 300;
  p.fps = 30.0;
  return p;
}

}  // namespace

TEST(GenPpg, FundamentalAndHarmonicShowUpInTheSpectrum) {
  const auto s = gen_ppg(72.0, 30.0, 600, 0.5);
  PulseSignal ps{s, 30.0};
  EXPECT_NEAR(estimate_hr(ps), 72.0, 1.0);
  const auto power = compute_psd(ps, Band{});
  const auto freqs = band_freqs_bpm(Band{});
  // second harmonic at 144 carries real power, but less than the fundamental
  size_t i72 = 0, i144 = 0;
  for (size_t i = 0; i < freqs.size(); ++i) {
    if (freqs[i] == 72.0) i72 = i;
    if (freqs[i] == 144.0) i144 = i;
  }
  EXPECT_GT(power[i144], 0.05 * power[i72]);
  EXPECT_LT(power[i144], power[i72]);
  // ratio zero kills it
  const auto pure = gen_ppg(72.0, 30.0, 600, 0.0);
  const auto ppow = compute_psd(PulseSignal{pure, 30.0}, Band{});
  EXPECT_LT(ppow[i144], 1e-3 * ppow[i72]);
  EXPECT_THROW(gen_ppg(72.0, 30.0, 1), ValueError);
  EXPECT_THROW(gen_ppg(0.0, 30.0, 100), ValueError);
}

TEST(GenClip, ValuesStayInRangeWithTinyClampFraction) {
  SynthParams p = small_params();
  const SynthClip sc = gen_clip(p);
  EXPECT_LE(sc.clamp_frac, 0.01);
  for (double v : sc.clip.v) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
  EXPECT_EQ(sc.clip.t, 300);
  EXPECT_EQ(int(sc.ppg.size()), 300);
  // centered region at 60%
  EXPECT_EQ(sc.skin.h, 19);
  EXPECT_EQ(sc.skin.w, 19);
  EXPECT_EQ(sc.skin.y0, 6);
  EXPECT_EQ(sc.skin.x0, 6);
}

TEST(GenClip, NoiseFreeBackgroundIsStaticAndSkinPulses) {
  SynthParams p = small_params();
  p.noise_sd = 0.0;
  const SynthClip sc = gen_clip(p);
  // background corner never changes
  for (int t = 1; t < sc.clip.t; ++t)
    for (int c = 0; c < 3; ++c) ASSERT_EQ(sc.clip.at(c, t, 0, 0), sc.clip.at(c, 0, 0, 0));
  // skin center follows the pulse, green with twice the swing of red
  const int cy = sc.skin.y0 + sc.skin.h / 2, cx = sc.skin.x0 + sc.skin.w / 2;
  double gmin = 1e9, gmax = -1e9, rmin = 1e9, rmax = -1e9;
  for (int t = 0; t < sc.clip.t; ++t) {
    gmin = std::min(gmin, sc.clip.at(1, t, cy, cx));
    gmax = std::max(gmax, sc.clip.at(1, t, cy, cx));
    rmin = std::min(rmin, sc.clip.at(0, t, cy, cx));
    rmax = std::max(rmax, sc.clip.at(0, t, cy, cx));
  }
  EXPECT_GT(gmax - gmin, 0.5 * (rmax - rmin) * 1.5);
  EXPECT_NEAR((gmax - gmin) / (rmax - rmin), 2.0, 0.05);
}

TEST(GenClip, MotionEscapingTheFrameIsAnError) {
  SynthParams p = small_params();
  p.region_frac = 1.0;
  p.motion_amp = 2.0;
  EXPECT_THROW(gen_clip(p), ValueError);
  p.region_frac = 0.6;
  EXPECT_NO_THROW(gen_clip(p));
}

TEST(GenClip, DeterministicForSameSeed) {
  SynthParams p = small_params();
  p.frames = 60;
  const SynthClip a = gen_clip(p);
  const SynthClip b = gen_clip(p);
  ASSERT_EQ(a.clip.v.size(), b.clip.v.size());
  for (size_t i = 0; i < a.clip.v.size(); ++i) ASSERT_EQ(a.clip.v[i], b.clip.v[i]);
  SynthParams q = p;
  q.seed = 2;
  const SynthClip c = gen_clip(q);
  bool any_diff = false;
  for (size_t i = 0; i < a.clip.v.size(); ++i) any_diff = any_diff || a.clip.v[i] != c.clip.v[i];
  EXPECT_TRUE(any_diff);
}

TEST(GreenTrace, TracksTheReferencePulse) {
  SynthParams p = small_params();
  const SynthClip sc = gen_clip(p);
  PulseSignal g = green_trace(sc.clip, sc.skin);
  EXPECT_LE(neg_pearson_loss(g.samples, sc.ppg), 0.05);
  double mean = 0.0;
  for (double v : g.samples) mean += v;
  EXPECT_NEAR(mean / double(g.samples.size()), 0.0, 1e-12);
}

TEST(Extractors, RecoverTheRateWithinOneBpmOnCleanClips) {
  for (double hr : {60.0, 100.0, 140.0}) {
    SynthParams p = small_params();
    p.hr_bpm = hr;
    p.noise_sd = 0.0;
    const SynthClip sc = gen_clip(p);
    // run on the quantized representation, the same thing training reads
    const VideoClip clip = loaded_to_video(quantize_clip(sc, "s0", hr));
    EXPECT_NEAR(estimate_hr(green_trace(clip, sc.skin)), hr, 1.0) << "green hr " << hr;
    EXPECT_NEAR(estimate_hr(chrom_trace(clip, sc.skin)), hr, 1.0) << "chrom hr " << hr;
    EXPECT_NEAR(estimate_hr(pos_trace(clip, sc.skin)), hr, 1.0) << "pos hr " << hr;
  }
  EXPECT_EQ(baseline_from_name("green"), BaselineMethod::green);
  EXPECT_EQ(baseline_from_name("chrom"), BaselineMethod::chrom);
  EXPECT_EQ(baseline_from_name("pos"), BaselineMethod::pos);
  EXPECT_THROW(baseline_from_name("ica"), ConfigError);
}

TEST(Extractors, DegenerateInputsRaiseInsteadOfLying) {
  SynthParams p = small_params();
  p.frames = 30;  // exactly 1 s, shorter than the 1.6 s window
  const SynthClip sc = gen_clip(p);
  EXPECT_THROW(pos_trace(sc.clip, sc.skin), TooShortError);

  // flat clip: no pulse, no noise
  SynthParams q = small_params();
  q.pulse_amp_green = 0.0;
  q.noise_sd = 0.0;
  const SynthClip flat = gen_clip(q);
  EXPECT_THROW(chrom_trace(flat.clip, flat.skin), DegenerateVarianceError);
  EXPECT_THROW(estimate_hr(green_trace(flat.clip, flat.skin)), NoPeakError);

  Rect outside{30, 30, 5, 5};
  EXPECT_THROW(green_trace(sc.clip, outside), ValueError);
}

TEST(ClipDir, SurvivesDiskRoundTripExactly) {
  const std::string dir = "/tmp/autohr_clip_rt";
  std::filesystem::remove_all(dir);
  SynthParams p = small_params();
  p.frames = 12;
  const SynthClip sc = gen_clip(p);
  const LoadedClip lc = quantize_clip(sc, "subjA", 72.5);
  save_clip_dir(dir, lc);
  const LoadedClip back = load_clip_dir(dir);
  EXPECT_EQ(back.meta.fps, lc.meta.fps);
  EXPECT_EQ(back.meta.hr, lc.meta.hr);
  EXPECT_EQ(back.meta.subject, "subjA");
  EXPECT_EQ(back.meta.frames, 12);
  ASSERT_EQ(back.frames.size(), lc.frames.size());
  for (size_t i = 0; i < lc.frames.size(); ++i) ASSERT_EQ(back.frames[i], lc.frames[i]);
  ASSERT_TRUE(back.has_ppg());
  ASSERT_EQ(back.ppg.size(), lc.ppg.size());
  for (size_t i = 0; i < lc.ppg.size(); ++i) ASSERT_EQ(back.ppg[i], lc.ppg[i]);
  std::filesystem::remove_all(dir);
}

TEST(ClipDir, TensorConversionsAgree) {
  SynthParams p = small_params();
  p.frames = 8;
  const SynthClip sc = gen_clip(p);
  const LoadedClip lc = quantize_clip(sc, "s", 70.0);
  const Tensor x = clip_to_tensor(lc);
  EXPECT_EQ(x.dim(2), 8);
  const VideoClip v = loaded_to_video(lc);
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < 8; ++t)
      for (int y = 0; y < p.height; ++y)
        for (int xi = 0; xi < p.width; ++xi) {
          ASSERT_EQ(x.at(0, c, t, y, xi), v.at(c, t, y, xi));
        }
  // window copy
  Tensor batch(2, 3, 4, p.height, p.width);
  window_into_batch(x, 3, &batch, 1);
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < 4; ++t) ASSERT_EQ(batch.at(1, c, t, 5, 5), x.at(0, c, t + 3, 5, 5));
  EXPECT_THROW(window_into_batch(x, 6, &batch, 0), ValueError);
}

TEST(Dataset, GenerationIsRoundRobinReadableAndReproducible) {
  const std::string d1 = "/tmp/autohr_ds1", d2 = "/tmp/autohr_ds2";
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
  SynthDatasetParams dp;
  dp.base = small_params();
  dp.base.frames = 40;
  dp.count = 8;
  dp.subjects = 4;
  dp.seed = 11;
  const auto rows = gen_dataset(dp, d1);
  ASSERT_EQ(rows.size(), 8u);
  for (size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].subject, "s00" + std::to_string(i % 4));
    EXPECT_GE(rows[i].hr, 50.0);
    EXPECT_LE(rows[i].hr, 150.0);
    EXPECT_EQ(rows[i].frames, 40);
  }
  const auto back = read_manifest_csv(d1 + "/manifest.csv");
  ASSERT_EQ(back.size(), rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].id, rows[i].id);
    EXPECT_EQ(back[i].subject, rows[i].subject);
    EXPECT_EQ(back[i].hr, rows[i].hr);  // %.17g survives the trip
    EXPECT_EQ(back[i].fps, rows[i].fps);
    EXPECT_EQ(back[i].path, rows[i].path);
  }
  // regeneration is identical
  const auto rows2 = gen_dataset(dp, d2);
  for (size_t i = 0; i < rows.size(); ++i) {
    const LoadedClip a = load_clip_dir(autohr::clip_path(d1, rows[i]));
    const LoadedClip b = load_clip_dir(autohr::clip_path(d2, rows2[i]));
    ASSERT_EQ(a.frames, b.frames) << "clip " << i;
    ASSERT_EQ(a.ppg, b.ppg);
  }
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST(Folds, SubjectIndependentSplitWithExactSizes) {
  // 80 videos round-robin over 20 subjects, 5 folds: 16 held out, 64 kept
  std::vector<ManifestRow> rows;
  for (int i = 0; i < 80; ++i) {
    ManifestRow r;
    r.id = "v" + std::to_string(i);
    r.subject = "subj" + std::to_string(i % 20);
    r.hr = 70.0;
    r.fps = 30.0;
    r.frames = 100;
    r.path = "none";
    rows.push_back(r);
  }
  std::set<std::string> all_test_subjects;
  for (int fold = 0; fold < 5; ++fold) {
    const FoldSplit s = make_fold(rows, 5, fold, 7);
    EXPECT_EQ(s.test_rows.size(), 16u);
    EXPECT_EQ(s.train_rows.size(), 64u);
    EXPECT_EQ(s.test_subjects.size(), 4u);
    std::set<std::string> test_set(s.test_subjects.begin(), s.test_subjects.end());
    for (size_t ri : s.train_rows) EXPECT_EQ(test_set.count(rows[ri].subject), 0u);
    for (size_t ri : s.test_rows) EXPECT_EQ(test_set.count(rows[ri].subject), 1u);
    for (const auto& su : s.test_subjects) {
      EXPECT_TRUE(all_test_subjects.insert(su).second) << "subject in two folds";
    }
  }
  EXPECT_EQ(all_test_subjects.size(), 20u);
  // determinism and seed sensitivity
  const FoldSplit a = make_fold(rows, 5, 0, 7);
  const FoldSplit b = make_fold(rows, 5, 0, 7);
  EXPECT_EQ(a.test_subjects, b.test_subjects);
  const FoldSplit c = make_fold(rows, 5, 0, 8);
  EXPECT_NE(a.test_subjects, c.test_subjects);

  EXPECT_THROW(make_fold(rows, 1, 0, 7), ValueError);
  EXPECT_THROW(make_fold(rows, 5, 5, 7), ValueError);
  std::vector<ManifestRow> few(rows.begin(), rows.begin() + 3);
  EXPECT_THROW(make_fold(few, 5, 0, 7), ValueError);
}

TEST(PngIo, RandomImageRoundTrips) {
  const std::string path = "/tmp/autohr_png_rt.png";
  Rng rng(3);
  std::vector<uint8_t> img(16 * 9 * 3);
  for (auto& b : img) b = uint8_t(rng.below(256));
  write_png_rgb8(path, img, 16, 9);
  int w = 0, h = 0;
  const auto back = read_png_rgb8(path, &w, &h);
  EXPECT_EQ(w, 16);
  EXPECT_EQ(h, 9);
  ASSERT_EQ(back.size(), img.size());
  for (size_t i = 0; i < img.size(); ++i) ASSERT_EQ(back[i], img[i]);
  std::filesystem::remove(path);
  EXPECT_THROW(read_png_rgb8("/tmp/missing_autohr.png", &w, &h), IoError);
  EXPECT_THROW(write_png_rgb8(path, img, 5, 5), ValueError);
}
