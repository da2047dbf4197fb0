#pragma once

// Experiment harness over on-disk clip datasets: training with both
// augmentations, clip-averaged evaluation, classical baselines, and plots.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "autohr/augment.hpp"
#include "autohr/checkpoint.hpp"
#include "autohr/config.hpp"
#include "autohr/dataset.hpp"
#include "autohr/network.hpp"
#include "autohr/optim.hpp"
#include "autohr/search.hpp"
#include "autohr/synth.hpp"

namespace autohr {

// Accepts either a preset name or a path to a genotype text file.
inline std::vector<DiscreteCell> resolve_genotype(const std::string& spec) {
  if (std::filesystem::exists(spec)) {
    std::ifstream in(spec);
    if (!in) throw IoError("cannot open genotype file: " + spec);
    std::ostringstream ss;
    ss << in.rdbuf();
    return genotype_from_text(ss.str());
  }
  return genotype_from_text(preset_genotype(spec));
}

inline NetworkConfig train_network_config(const ExperimentConfig& cfg) {
  NetworkConfig nc;
  nc.channels = cfg.channels_train;
  nc.num_blocks = cfg.num_blocks;
  nc.cells_per_block = cfg.cells_per_block;
  return nc;
}

inline NetworkConfig search_network_config(const ExperimentConfig& cfg) {
  NetworkConfig nc;
  nc.channels = cfg.channels_search;
  nc.num_blocks = cfg.num_blocks;
  nc.cells_per_block = cfg.cells_per_block;
  nc.shared_arch = cfg.shared_arch;
  nc.pc_ratio = cfg.pc_ratio;
  nc.edge_norm = cfg.edge_norm;
  return nc;
}

// Copies frames [t0, t0 + len) of a stored clip into a (1, 3, len, h, w)
// tensor scaled to [0, 1].
inline Tensor window_tensor(const LoadedClip& lc, int t0, int len) {
  const int h = lc.meta.height, w = lc.meta.width;
  if (t0 < 0 || len < 1 || t0 + len > lc.meta.frames) {
    throw ValueError("window_tensor: window out of clip range");
  }
  Tensor x(1, 3, len, h, w);
  for (int t = 0; t < len; ++t)
    for (int y = 0; y < h; ++y)
      for (int xi = 0; xi < w; ++xi) {
        const size_t base = ((size_t(t0 + t) * h + y) * size_t(w) + xi) * 3;
        for (int c = 0; c < 3; ++c) {
          x.at(0, c, t, y, xi) = double(lc.frames[base + size_t(c)]) / 255.0;
        }
      }
  return x;
}

inline Tensor crop_time(const Tensor& x, int len) {
  if (len < 1 || len > x.dim(2)) throw ValueError("crop_time: bad length");
  Tensor out(x.dim(0), x.dim(1), len, x.dim(3), x.dim(4));
  for (int n = 0; n < x.dim(0); ++n)
    for (int c = 0; c < x.dim(1); ++c)
      for (int t = 0; t < len; ++t)
        for (int y = 0; y < x.dim(3); ++y)
          for (int xi = 0; xi < x.dim(4); ++xi) out.at(n, c, t, y, xi) = x.at(n, c, t, y, xi);
  return out;
}

// Frames [t0, t0 + len) of a stored clip as an analysis video in [0, 1].
inline VideoClip window_video(const LoadedClip& lc, int t0, int len) {
  const int h = lc.meta.height, w = lc.meta.width;
  if (t0 < 0 || len < 2 || t0 + len > lc.meta.frames) {
    throw ValueError("window_video: window out of clip range");
  }
  VideoClip clip(3, len, h, w, lc.meta.fps);
  for (int t = 0; t < len; ++t)
    for (int y = 0; y < h; ++y)
      for (int xi = 0; xi < w; ++xi) {
        const size_t base = ((size_t(t0 + t) * h + y) * size_t(w) + xi) * 3;
        for (int c = 0; c < 3; ++c) {
          clip.at(c, t, y, xi) = double(lc.frames[base + size_t(c)]) / 255.0;
        }
      }
  return clip;
}

// One training draw: a manifest row plus an optional playback-rate change.
// Rate-shifted draws are added on top of the plain ones, never instead.
struct TrainSampleSpec {
  size_t row = 0;
  RateShift shift = RateShift::none;
};

inline std::vector<TrainSampleSpec> epoch_samples(const std::vector<ManifestRow>& rows,
                                                  const std::vector<size_t>& train_rows,
                                                  const ExperimentConfig& cfg) {
  std::vector<TrainSampleSpec> out;
  for (size_t ri : train_rows) {
    out.push_back({ri, RateShift::none});
    if (cfg.da2) {
      const RateShift s = rate_shift_for(rows[ri].hr);
      if (s != RateShift::none) out.push_back({ri, s});
    }
  }
  return out;
}

// Source frames needed so that the rate-shifted window still covers want_len.
inline int source_window_len(int want_len, RateShift shift) {
  switch (shift) {
    case RateShift::none: return want_len;
    case RateShift::stretch: return (want_len + 1) / 2;
    case RateShift::squeeze: return 2 * want_len - 1;
  }
  throw ValueError("source_window_len: bad shift");
}

// Materializes one training sample. Draw order from rng is frozen: window
// start, then the erase coin, then the erase box. Returns false when the
// clip is too short for the requested window.
inline bool make_train_sample(const LoadedClip& lc, const ManifestRow& row,
                              const TrainSampleSpec& spec, const ExperimentConfig& cfg,
                              Rng& rng, SearchSample* out) {
  const int want = cfg.clip_len_train;
  const int src_len = source_window_len(want, spec.shift);
  if (lc.meta.frames < src_len) return false;
  if (!lc.has_ppg() && cfg.loss_mode != "freq") {
    throw ValueError("clip " + row.id + " has no reference pulse; training needs one unless loss_mode=freq");
  }
  const int t0 = int(rng.below(int64_t(lc.meta.frames - src_len + 1)));
  Tensor x = window_tensor(lc, t0, src_len);
  std::vector<double> ppg;
  if (lc.has_ppg()) {
    ppg.assign(lc.ppg.begin() + t0, lc.ppg.begin() + t0 + src_len);
  } else {
    ppg.assign(static_cast<size_t>(src_len), 0.0);
  }
  double hr = row.hr;
  if (spec.shift != RateShift::none) {
    x = shift_frames(x, spec.shift);
    ppg = shift_signal(ppg, spec.shift);
    hr = shifted_hr(row.hr, spec.shift);
    if (x.dim(2) > want) x = crop_time(x, want);
    ppg.resize(static_cast<size_t>(want));
  }
  if (cfg.da1 && rng.uniform() < cfg.da1_prob) {
    erase_random_tube(&x, 0, rng);
  }
  out->x = std::move(x);
  out->ppg = std::move(ppg);
  out->hr_bpm = hr;
  out->fps = row.fps;
  return true;
}

struct TrainOptions {
  std::string data_dir;
  std::string out_dir;
  std::string genotype_file;  // optional; takes precedence over cfg.genotype
  bool resume = false;
};

struct TrainEpochRow {
  int epoch = 0;
  double time = 0.0;
  double fre = 0.0;
  double overall = 0.0;
};

struct TrainResult {
  std::vector<TrainEpochRow> log;
  std::string checkpoint_dir;  // last finished epoch
  std::vector<std::string> warnings;
};

namespace detail {

inline std::string epoch_dir(const std::string& out_dir, int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%03d", epoch);
  return out_dir + "/checkpoints/" + buf;
}

// Highest finished epoch recorded under out_dir, or -1.
inline int latest_epoch(const std::string& out_dir) {
  int best = -1;
  const std::filesystem::path dir = std::filesystem::path(out_dir) / "checkpoints";
  if (!std::filesystem::is_directory(dir)) return best;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    int e = -1;
    if (std::sscanf(entry.path().filename().string().c_str(), "epoch_%d", &e) == 1 &&
        std::filesystem::exists(entry.path() / "params.bin")) {
      best = std::max(best, e);
    }
  }
  return best;
}

inline void write_train_log(const std::string& path, const std::vector<TrainEpochRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write train log: " + path);
  out << "epoch,time_loss,freq_loss,overall_loss\n";
  for (const TrainEpochRow& r : rows) {
    out << r.epoch << "," << format_double(r.time) << "," << format_double(r.fre) << ","
        << format_double(r.overall) << "\n";
  }
}

inline std::vector<TrainEpochRow> read_train_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open train log: " + path);
  std::string line;
  std::getline(in, line);
  std::vector<TrainEpochRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cols = split_csv_line(line);
    if (cols.size() != 4) throw IoError("train log row needs 4 columns: '" + line + "'");
    TrainEpochRow r;
    r.epoch = detail::parse_int_value(cols[0], "epoch");
    r.time = parse_double(cols[1], "train log");
    r.fre = parse_double(cols[2], "train log");
    r.overall = parse_double(cols[3], "train log");
    rows.push_back(r);
  }
  return rows;
}

}  // namespace detail

// Lazily loads and caches clips by manifest row index.
class ClipCache {
 public:
  ClipCache(const std::vector<ManifestRow>& rows, std::string data_dir)
      : rows_(&rows), data_dir_(std::move(data_dir)), cache_(rows.size()) {}

  const LoadedClip& get(size_t row) {
    if (!cache_[row]) {
      cache_[row] = std::make_unique<LoadedClip>(
          load_clip_dir(clip_path(data_dir_, (*rows_)[row])));
    }
    return *cache_[row];
  }

 private:
  const std::vector<ManifestRow>* rows_;
  std::string data_dir_;
  std::vector<std::unique_ptr<LoadedClip>> cache_;
};

inline TrainResult run_train(const ExperimentConfig& cfg, const TrainOptions& opt) {
  validate_config(cfg);
  std::filesystem::create_directories(std::filesystem::path(opt.out_dir) / "checkpoints");
  write_config(cfg, opt.out_dir + "/config.txt");

  const std::vector<ManifestRow> rows = read_manifest_csv(opt.data_dir + "/manifest.csv");
  const FoldSplit fold = make_fold(rows, cfg.folds, cfg.fold_index, cfg.seed);
  ClipCache cache(rows, opt.data_dir);

  const std::vector<DiscreteCell> geno =
      resolve_genotype(opt.genotype_file.empty() ? cfg.genotype : opt.genotype_file);
  const std::string geno_text = genotype_to_text(geno);
  Rng init_rng = Rng::stream(cfg.seed, 0x696e6974);  // "init"
  Network net(train_network_config(cfg), geno, init_rng);

  std::vector<ParamView> params, buffers;
  net.collect_params(&params);
  net.collect_buffers(&buffers);
  Adam optimizer(params, cfg.lr_w, cfg.wd_w);

  double epochs_done = 0.0;
  const auto checkpoint_views = [&]() {
    std::vector<ParamView> views = params;
    views.insert(views.end(), buffers.begin(), buffers.end());
    optimizer.collect_state("adam", &views);
    views.push_back({"train.epochs_done", &epochs_done, nullptr, 1});
    return views;
  };

  TrainResult result;
  int start_epoch = 0;
  const std::string log_path = opt.out_dir + "/train_log.csv";
  if (opt.resume) {
    const int last = detail::latest_epoch(opt.out_dir);
    if (last >= 0) {
      load_checkpoint_values(detail::epoch_dir(opt.out_dir, last), checkpoint_views());
      start_epoch = int(std::lround(epochs_done));
      result.checkpoint_dir = detail::epoch_dir(opt.out_dir, last);
      if (std::filesystem::exists(log_path)) {
        for (const TrainEpochRow& r : detail::read_train_log(log_path)) {
          if (r.epoch < start_epoch) result.log.push_back(r);
        }
      }
    }
  }

  const Band band = band_of(cfg);
  for (int epoch = start_epoch; epoch < cfg.epochs_train; ++epoch) {
    std::vector<TrainSampleSpec> specs = epoch_samples(rows, fold.train_rows, cfg);
    Rng order_rng = Rng::stream(cfg.seed, 0x65706f63 /* epoc */, uint64_t(epoch));
    order_rng.shuffle(specs);

    TrainEpochRow row;
    row.epoch = epoch;
    int n_batches = 0;
    size_t counter = 0;
    size_t at = 0;
    while (at < specs.size()) {
      std::vector<SearchSample> batch;
      while (at < specs.size() && int(batch.size()) < cfg.batch_train) {
        const TrainSampleSpec& spec = specs[at];
        Rng sample_rng = Rng::stream(cfg.seed, 0x73616d70 /* samp */, uint64_t(epoch), counter);
        ++counter;
        ++at;
        SearchSample s;
        if (make_train_sample(cache.get(spec.row), rows[spec.row], spec, cfg, sample_rng, &s)) {
          batch.push_back(std::move(s));
        } else {
          result.warnings.push_back("clip " + rows[spec.row].id +
                                    " is too short for the training window; skipped");
        }
      }
      if (batch.empty()) continue;
      std::vector<int> idxs(batch.size());
      for (size_t i = 0; i < batch.size(); ++i) idxs[i] = int(i);
      optimizer.zero_grad();
      const LossReport rep = batch_forward_backward(net, batch, idxs, cfg.loss_mode,
                                                    cfg.lambda_time, band, true);
      if (!std::isfinite(rep.overall)) {
        throw AbortStepError("train: non-finite loss at epoch " + std::to_string(epoch),
                             rep.overall);
      }
      optimizer.step();
      row.time += rep.time;
      row.fre += rep.fre;
      row.overall += rep.overall;
      ++n_batches;
    }
    if (n_batches == 0) throw ValueError("train: no usable training samples");
    row.time /= double(n_batches);
    row.fre /= double(n_batches);
    row.overall /= double(n_batches);
    result.log.push_back(row);
    detail::write_train_log(log_path, result.log);

    epochs_done = double(epoch + 1);
    result.checkpoint_dir = detail::epoch_dir(opt.out_dir, epoch);
    save_checkpoint(result.checkpoint_dir, checkpoint_views(), &geno_text);
  }
  return result;
}

// Longest window of whole `divisor` chunks inside a nominal ten seconds.
inline int eval_clip_len(double fps, int divisor) {
  const int want = int(std::lround(10.0 * fps));
  return (want / divisor) * divisor;
}

struct EvalRow {
  std::string id, subject;
  double hr_true = 0.0;
  double hr_pred = 0.0;
  int clips = 0;
};

struct EvalResult {
  std::vector<EvalRow> rows;
  MetricsReport metrics;
  std::vector<std::string> warnings;
};

inline void write_results_csv(const std::string& path, const std::vector<EvalRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write results: " + path);
  out << "id,subject,hr_true,hr_pred,clips\n";
  for (const EvalRow& r : rows) {
    out << r.id << "," << r.subject << "," << format_double(r.hr_true) << ","
        << format_double(r.hr_pred) << "," << r.clips << "\n";
  }
}

inline std::vector<EvalRow> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open results: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty results file: " + path);
  std::vector<EvalRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cols = split_csv_line(line);
    if (cols.size() != 5) throw IoError("results row needs 5 columns: '" + line + "'");
    EvalRow r;
    r.id = cols[0];
    r.subject = cols[1];
    r.hr_true = parse_double(cols[2], "results");
    r.hr_pred = parse_double(cols[3], "results");
    r.clips = detail::parse_int_value(cols[4], "clips");
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_metrics_csv(const std::string& path, const std::string& split,
                              const MetricsReport& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics: " + path);
  out << "split,sd,mae,rmse,r\n";
  out << split << "," << format_double(m.sd) << "," << format_double(m.mae) << ","
      << format_double(m.rmse) << ","
      << (m.pearson_r ? format_double(*m.pearson_r) : "nan") << "\n";
}

// Rows selected by split name: the fold's held-out side, its training side,
// or every row.
inline std::vector<size_t> split_rows(const std::vector<ManifestRow>& rows,
                                      const ExperimentConfig& cfg, const std::string& split) {
  if (split == "all") {
    std::vector<size_t> all(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) all[i] = i;
    return all;
  }
  const FoldSplit fold = make_fold(rows, cfg.folds, cfg.fold_index, cfg.seed);
  if (split == "test") return fold.test_rows;
  if (split == "train") return fold.train_rows;
  throw ConfigError("split must be one of test, train, all");
}

struct EvalOptions {
  std::string data_dir;
  std::string out_dir;
  std::string checkpoint_dir;
  std::string genotype_file;  // optional; else the checkpoint's, else cfg
  std::string split = "test";
};

inline EvalResult run_eval(const ExperimentConfig& cfg, const EvalOptions& opt) {
  validate_config(cfg);
  std::filesystem::create_directories(opt.out_dir);

  const std::vector<ManifestRow> rows = read_manifest_csv(opt.data_dir + "/manifest.csv");
  const std::vector<size_t> selected = split_rows(rows, cfg, opt.split);

  std::vector<DiscreteCell> geno;
  if (!opt.genotype_file.empty()) {
    geno = resolve_genotype(opt.genotype_file);
  } else if (checkpoint_has_genotype(opt.checkpoint_dir)) {
    geno = genotype_from_text(load_checkpoint_genotype(opt.checkpoint_dir));
  } else {
    geno = resolve_genotype(cfg.genotype);
  }
  const NetworkConfig nc = train_network_config(cfg);
  Rng init_rng = Rng::stream(cfg.seed, 0x696e6974);
  Network net(nc, geno, init_rng);
  std::vector<ParamView> views;
  net.collect_params(&views);
  net.collect_buffers(&views);
  load_checkpoint_values(opt.checkpoint_dir, views);

  const Band band = band_of(cfg);
  ClipCache cache(rows, opt.data_dir);
  EvalResult result;
  std::vector<double> preds, gts;
  bool sample_saved = false;
  for (size_t ri : selected) {
    const ManifestRow& row = rows[ri];
    const LoadedClip& lc = cache.get(ri);
    const int clip_len = eval_clip_len(row.fps, nc.temporal_divisor());
    if (clip_len < 2 || lc.meta.frames < clip_len) {
      result.warnings.push_back("clip " + row.id + " is shorter than the evaluation window; skipped");
      continue;
    }
    std::vector<double> hrs;
    for (int t0 = 0; t0 + clip_len <= lc.meta.frames; t0 += clip_len) {
      const Tensor x = window_tensor(lc, t0, clip_len);
      const std::vector<std::vector<double>> sigs = net.forward(x, false);
      PulseSignal pred;
      pred.samples = sigs[0];
      pred.fps = row.fps;
      try {
        hrs.push_back(estimate_hr(pred, band));
      } catch (const NoPeakError&) {
        result.warnings.push_back("clip " + row.id + " window at frame " +
                                  std::to_string(t0) + " produced no spectral peak; skipped");
        continue;
      }
      if (!sample_saved) {
        save_signal(opt.out_dir + "/sample_rppg.txt", pred);
        sample_saved = true;
      }
    }
    if (hrs.empty()) {
      result.warnings.push_back("clip " + row.id + " produced no usable windows; skipped");
      continue;
    }
    EvalRow er;
    er.id = row.id;
    er.subject = row.subject;
    er.hr_true = row.hr;
    er.hr_pred = clip_average_hr(hrs);
    er.clips = int(hrs.size());
    preds.push_back(er.hr_pred);
    gts.push_back(er.hr_true);
    result.rows.push_back(std::move(er));
  }
  if (result.rows.empty()) {
    throw ValueError("eval: no usable clips in split " + opt.split + " (" +
                     std::to_string(result.warnings.size()) +
                     " skipped; clips must cover the ten second window)");
  }
  result.metrics = compute_metrics(preds, gts);
  write_results_csv(opt.out_dir + "/results.csv", result.rows);
  write_metrics_csv(opt.out_dir + "/metrics.csv", opt.split, result.metrics);
  return result;
}

struct BaselineOptions {
  std::string data_dir;
  std::string out_dir;
  std::string method = "green";  // green | chrom | pos
  std::string split = "test";
  double region_frac = 0.6;  // centered analysis region, matching the bench
};

inline EvalResult run_baseline(const ExperimentConfig& cfg, const BaselineOptions& opt) {
  validate_config(cfg);
  std::filesystem::create_directories(opt.out_dir);
  const BaselineMethod method = baseline_from_name(opt.method);

  const std::vector<ManifestRow> rows = read_manifest_csv(opt.data_dir + "/manifest.csv");
  const std::vector<size_t> selected = split_rows(rows, cfg, opt.split);
  const Band band = band_of(cfg);

  ClipCache cache(rows, opt.data_dir);
  EvalResult result;
  std::vector<double> preds, gts;
  for (size_t ri : selected) {
    const ManifestRow& row = rows[ri];
    const LoadedClip& lc = cache.get(ri);
    const int clip_len = int(std::lround(10.0 * row.fps));
    if (clip_len < 2 || lc.meta.frames < clip_len) {
      result.warnings.push_back("clip " + row.id + " is shorter than the evaluation window; skipped");
      continue;
    }
    const Rect region = centered_region(lc.meta.height, lc.meta.width, opt.region_frac);
    std::vector<double> hrs;
    for (int t0 = 0; t0 + clip_len <= lc.meta.frames; t0 += clip_len) {
      const VideoClip clip = window_video(lc, t0, clip_len);
      try {
        const PulseSignal trace = baseline_trace(method, clip, region);
        hrs.push_back(estimate_hr(trace, band));
      } catch (const std::runtime_error& e) {
        result.warnings.push_back("clip " + row.id + " window at frame " +
                                  std::to_string(t0) + ": " + e.what());
      }
    }
    if (hrs.empty()) {
      result.warnings.push_back("clip " + row.id + " produced no usable windows; skipped");
      continue;
    }
    EvalRow er;
    er.id = row.id;
    er.subject = row.subject;
    er.hr_true = row.hr;
    er.hr_pred = clip_average_hr(hrs);
    er.clips = int(hrs.size());
    preds.push_back(er.hr_pred);
    gts.push_back(er.hr_true);
    result.rows.push_back(std::move(er));
  }
  if (result.rows.empty()) {
    throw ValueError("baseline: no usable clips in split " + opt.split + " (" +
                     std::to_string(result.warnings.size()) +
                     " skipped; clips must cover the ten second window)");
  }
  result.metrics = compute_metrics(preds, gts);
  write_results_csv(opt.out_dir + "/results.csv", result.rows);
  write_metrics_csv(opt.out_dir + "/metrics.csv", opt.split, result.metrics);
  return result;
}

struct SearchDataOptions {
  std::string data_dir;
  std::string out_dir;
};

// Builds one search sample per manifest row (a seeded window from each clip)
// and searches the cell space on them. Writes the per-epoch trace, the
// derived genotype, and the architecture weights under out_dir.
inline SearchResult run_search_on_dataset(const ExperimentConfig& cfg,
                                          const SearchDataOptions& opt) {
  validate_config(cfg);
  std::filesystem::create_directories(opt.out_dir);
  write_config(cfg, opt.out_dir + "/config.txt");

  const std::vector<ManifestRow> rows = read_manifest_csv(opt.data_dir + "/manifest.csv");
  std::vector<SearchSample> samples;
  for (size_t i = 0; i < rows.size(); ++i) {
    const LoadedClip lc = load_clip_dir(clip_path(opt.data_dir, rows[i]));
    const int len = cfg.clip_len_search;
    if (lc.meta.frames < len) continue;
    if (!lc.has_ppg() && cfg.loss_mode != "freq") {
      throw ValueError("clip " + rows[i].id + " has no reference pulse; search needs one unless loss_mode=freq");
    }
    Rng win_rng = Rng::stream(cfg.seed, 0x7377696e /* swin */, uint64_t(i));
    const int t0 = int(win_rng.below(int64_t(lc.meta.frames - len + 1)));
    SearchSample s;
    s.x = window_tensor(lc, t0, len);
    if (lc.has_ppg()) {
      s.ppg.assign(lc.ppg.begin() + t0, lc.ppg.begin() + t0 + len);
    } else {
      s.ppg.assign(static_cast<size_t>(len), 0.0);
    }
    s.hr_bpm = rows[i].hr;
    s.fps = rows[i].fps;
    samples.push_back(std::move(s));
  }
  if (samples.size() < 2) throw ValueError("search: need at least 2 usable clips");

  Rng init_rng = Rng::stream(cfg.seed, 0x696e6974);
  Supernet net(search_network_config(cfg), init_rng);
  SearchResult res = run_search(samples, cfg, net);

  write_search_trace(opt.out_dir + "/trace.csv", res.trace);
  const std::string geno_text = genotype_to_text(res.genotype);
  {
    std::ofstream g(opt.out_dir + "/genotype.txt");
    if (!g) throw IoError("cannot write genotype: " + opt.out_dir + "/genotype.txt");
    g << geno_text;
  }
  std::vector<ParamView> arch_views;
  net.collect_arch(&arch_views);
  save_checkpoint(opt.out_dir + "/arch", arch_views, &geno_text);
  return res;
}

// Re-derives the genotype from saved architecture weights.
inline std::string derive_from_checkpoint(const std::string& ckpt_dir) {
  const auto manifest = read_manifest(ckpt_dir);
  const auto it = manifest.find("arch.alpha");
  if (it == manifest.end()) throw IoError("checkpoint has no architecture weights: " + ckpt_dir);
  const size_t per_set = size_t(kNumEdges) * kNumOps;
  if (it->second.count == 0 || it->second.count % per_set != 0) {
    throw IoError("architecture weight array has unexpected size");
  }
  ArchParams arch(int(it->second.count / per_set), false);
  std::vector<ParamView> views;
  views.push_back({"arch.alpha", arch.alpha.data(), arch.galpha.data(), arch.alpha.size()});
  views.push_back({"arch.beta", arch.beta.data(), arch.gbeta.data(), arch.beta.size()});
  load_checkpoint_values(ckpt_dir, views);
  return genotype_to_text(derive_architecture(arch));
}

// Scatter of estimated versus reference rate, with the identity line.
inline std::string scatter_svg(const std::vector<EvalRow>& rows) {
  if (rows.empty()) throw ValueError("scatter_svg: no rows");
  double lo = rows[0].hr_true, hi = rows[0].hr_true;
  for (const EvalRow& r : rows) {
    lo = std::min({lo, r.hr_true, r.hr_pred});
    hi = std::max({hi, r.hr_true, r.hr_pred});
  }
  lo -= 5.0;
  hi += 5.0;
  const double size = 480.0, margin = 56.0, span = size - 2.0 * margin;
  const auto sx = [&](double v) { return margin + (v - lo) / (hi - lo) * span; };
  const auto sy = [&](double v) { return size - margin - (v - lo) / (hi - lo) * span; };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"480\" "
         "viewBox=\"0 0 480 480\">\n";
  svg << "<rect width=\"480\" height=\"480\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << sx(lo) << "\" y1=\"" << sy(lo) << "\" x2=\"" << sx(hi) << "\" y2=\""
      << sy(hi) << "\" stroke=\"#bbbbbb\" stroke-dasharray=\"4 3\"/>\n";
  svg << "<line x1=\"" << margin << "\" y1=\"" << size - margin << "\" x2=\"" << size - margin
      << "\" y2=\"" << size - margin << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << margin << "\" y1=\"" << size - margin << "\" x2=\"" << margin
      << "\" y2=\"" << margin << "\" stroke=\"black\"/>\n";
  for (const EvalRow& r : rows) {
    svg << "<circle cx=\"" << sx(r.hr_true) << "\" cy=\"" << sy(r.hr_pred)
        << "\" r=\"3.5\" fill=\"#1f77b4\" fill-opacity=\"0.75\"/>\n";
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.0f", lo);
  svg << "<text x=\"" << margin << "\" y=\"" << size - margin + 18
      << "\" font-size=\"12\" text-anchor=\"middle\">" << buf << "</text>\n";
  std::snprintf(buf, sizeof(buf), "%.0f", hi);
  svg << "<text x=\"" << size - margin << "\" y=\"" << size - margin + 18
      << "\" font-size=\"12\" text-anchor=\"middle\">" << buf << "</text>\n";
  svg << "<text x=\"" << size / 2.0 << "\" y=\"" << size - margin + 36
      << "\" font-size=\"13\" text-anchor=\"middle\">reference rate (bpm)</text>\n";
  svg << "<text x=\"16\" y=\"" << size / 2.0 << "\" font-size=\"13\" text-anchor=\"middle\" "
         "transform=\"rotate(-90 16 "
      << size / 2.0 << ")\">estimated rate (bpm)</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

// Power spectrum of a pulse trace over the analysis band, peak marked.
inline std::string psd_svg(const PulseSignal& sig, const Band& band) {
  const std::vector<double> power = compute_psd(sig, band);
  const std::vector<double> freqs = band_freqs_bpm(band);
  double pmax = 0.0;
  for (double p : power) pmax = std::max(pmax, p);
  if (pmax <= 0.0) pmax = 1.0;
  const double w = 640.0, h = 320.0, margin = 48.0;
  const auto sx = [&](double bpm) {
    return margin + (bpm - band.lo_bpm) / (band.hi_bpm - band.lo_bpm) * (w - 2.0 * margin);
  };
  const auto sy = [&](double p) { return h - margin - p / pmax * (h - 2.0 * margin); };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"320\" "
         "viewBox=\"0 0 640 320\">\n";
  svg << "<rect width=\"640\" height=\"320\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << margin << "\" y1=\"" << h - margin << "\" x2=\"" << w - margin
      << "\" y2=\"" << h - margin << "\" stroke=\"black\"/>\n";
  svg << "<polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\" points=\"";
  size_t peak = 0;
  for (size_t i = 0; i < power.size(); ++i) {
    if (power[i] > power[peak]) peak = i;
    svg << sx(freqs[i]) << "," << sy(power[i]) << " ";
  }
  svg << "\"/>\n";
  svg << "<circle cx=\"" << sx(freqs[peak]) << "\" cy=\"" << sy(power[peak])
      << "\" r=\"4\" fill=\"none\" stroke=\"#2ca02c\" stroke-width=\"2\"/>\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "peak %.0f bpm", freqs[peak]);
  svg << "<text x=\"" << sx(freqs[peak]) << "\" y=\"" << sy(power[peak]) - 10.0
      << "\" font-size=\"12\" text-anchor=\"middle\">" << buf << "</text>\n";
  svg << "<text x=\"" << w / 2.0 << "\" y=\"" << h - margin + 32
      << "\" font-size=\"13\" text-anchor=\"middle\">frequency (bpm)</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

// Renders scatter.svg and psd.svg from a finished evaluation directory.
inline void run_plot(const std::string& results_dir, const Band& band) {
  const std::vector<EvalRow> rows = read_results_csv(results_dir + "/results.csv");
  {
    std::ofstream out(results_dir + "/scatter.svg");
    if (!out) throw IoError("cannot write scatter plot");
    out << scatter_svg(rows);
  }
  const std::string rppg = results_dir + "/sample_rppg.txt";
  if (std::filesystem::exists(rppg)) {
    std::ofstream out(results_dir + "/psd.svg");
    if (!out) throw IoError("cannot write spectrum plot");
    out << psd_svg(load_signal(rppg), band);
  }
}

}  // namespace autohr
