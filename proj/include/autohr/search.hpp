#pragma once

// Differentiable architecture search: alternating weight and architecture
// updates on disjoint data halves.

#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "autohr/config.hpp"
#include "autohr/losses.hpp"
#include "autohr/network.hpp"
#include "autohr/optim.hpp"
#include "autohr/rng.hpp"

namespace autohr {

// Evaluates the configured objective and its gradient with respect to the
// predicted samples. report.overall always holds the optimized value; the
// other fields are evaluated for logging even when excluded.
inline LossReport mode_loss(const PulseSignal& pred, const std::vector<double>& gt_ppg,
                            double hr_bpm, const std::string& mode, double lambda,
                            const Band& band, std::vector<double>* gx) {
  if (mode == "overall") return overall_loss(pred, gt_ppg, hr_bpm, lambda, band, gx);
  if (mode == "freq") return overall_loss(pred, gt_ppg, hr_bpm, 0.0, band, gx);
  if (mode == "time") {
    LossReport rep;
    rep.time = neg_pearson_loss(pred.samples, gt_ppg, gx);
    rep.fre = freq_ce_loss(pred, hr_bpm, band, nullptr);
    rep.overall = rep.time;
    return rep;
  }
  throw ConfigError("loss_mode must be one of overall, time, freq");
}

struct SearchSample {
  Tensor x;                 // (1, 3, t, h, w) normalized frames
  std::vector<double> ppg;  // reference trace, length t
  double hr_bpm = 0.0;
  double fps = 30.0;
};

// Stacks the selected samples along the batch dimension. All samples must
// share frame geometry.
inline Tensor stack_samples(const std::vector<SearchSample>& samples,
                            const std::vector<int>& idxs) {
  if (idxs.empty()) throw ValueError("stack_samples: empty batch");
  const Tensor& first = samples[size_t(idxs[0])].x;
  Tensor out(int(idxs.size()), first.dim(1), first.dim(2), first.dim(3), first.dim(4));
  const size_t per = first.size();
  for (size_t i = 0; i < idxs.size(); ++i) {
    const Tensor& xi = samples[size_t(idxs[size_t(i)])].x;
    if (!xi.same_shape(first)) throw ShapeError("stack_samples: mixed sample shapes");
    for (size_t j = 0; j < per; ++j) out.data()[i * per + j] = xi.data()[j];
  }
  return out;
}

// One forward/backward pass over a batch. Returns the batch-mean loss report;
// gradients are averaged over the batch before the backward pass.
template <typename Net>
LossReport batch_forward_backward(Net& net, const std::vector<SearchSample>& samples,
                                  const std::vector<int>& idxs, const std::string& mode,
                                  double lambda, const Band& band, bool train_flag) {
  const Tensor x = stack_samples(samples, idxs);
  const std::vector<std::vector<double>> sigs = net.forward(x, train_flag);
  const int n = int(idxs.size());
  std::vector<std::vector<double>> gsig(static_cast<size_t>(n));
  LossReport mean;
  for (int i = 0; i < n; ++i) {
    const SearchSample& s = samples[size_t(idxs[size_t(i)])];
    PulseSignal pred;
    pred.samples = sigs[size_t(i)];
    pred.fps = s.fps;
    std::vector<double> gx;
    const LossReport rep = mode_loss(pred, s.ppg, s.hr_bpm, mode, lambda, band, &gx);
    for (double& g : gx) g /= double(n);
    gsig[size_t(i)] = std::move(gx);
    mean.time += rep.time / double(n);
    mean.fre += rep.fre / double(n);
    mean.overall += rep.overall / double(n);
  }
  net.backward(gsig);
  return mean;
}

struct BilevelTrace {
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
};

// One alternating update: weight step on the train objective, then, when
// update_arch is set, an architecture step on the validation objective.
// A non-finite objective aborts the step before the corresponding update.
template <typename Problem>
BilevelTrace bilevel_step(Problem& p, bool update_arch) {
  BilevelTrace tr;
  p.zero_weight_grads();
  tr.train_loss = p.train_loss();
  if (!std::isfinite(tr.train_loss)) {
    throw AbortStepError("bilevel: non-finite train loss", tr.train_loss);
  }
  p.weight_step();
  if (update_arch) {
    p.zero_arch_grads();
    tr.val_loss = p.val_loss();
    if (!std::isfinite(tr.val_loss)) {
      throw AbortStepError("bilevel: non-finite val loss", tr.val_loss);
    }
    p.arch_step();
  }
  return tr;
}

// Adapts a supernet plus its two optimizers to the bilevel_step contract.
// Batches are injected per step via set_batches.
struct SupernetBilevelProblem {
  Supernet* net = nullptr;
  Adam* w_opt = nullptr;
  Adam* a_opt = nullptr;
  const std::vector<SearchSample>* samples = nullptr;
  std::string mode = "overall";
  double lambda = 0.2;
  Band band;
  std::vector<int> train_idxs, val_idxs;
  LossReport last_train, last_val;

  void set_batches(std::vector<int> train_b, std::vector<int> val_b) {
    train_idxs = std::move(train_b);
    val_idxs = std::move(val_b);
  }
  void zero_weight_grads() { w_opt->zero_grad(); }
  void zero_arch_grads() { a_opt->zero_grad(); }
  double train_loss() {
    last_train = batch_forward_backward(*net, *samples, train_idxs, mode, lambda, band, true);
    return last_train.overall;
  }
  double val_loss() {
    last_val = batch_forward_backward(*net, *samples, val_idxs, mode, lambda, band, true);
    return last_val.overall;
  }
  void weight_step() { w_opt->step(); }
  void arch_step() { a_opt->step(); }
};

struct SplitIndices {
  std::vector<int> train, val;
};

// Disjoint half split; an odd leftover goes to the train half. The shuffle
// stream depends only on the seed, not on call order.
inline SplitIndices search_split(int n, std::uint64_t seed) {
  if (n < 2) throw ValueError("search_split: need at least 2 samples");
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[size_t(i)] = i;
  Rng rng = Rng::stream(seed, 0x73706c74);  // "splt"
  rng.shuffle(order);
  SplitIndices split;
  const int n_val = n / 2;
  for (int i = 0; i < n - n_val; ++i) split.train.push_back(order[size_t(i)]);
  for (int i = n - n_val; i < n; ++i) split.val.push_back(order[size_t(i)]);
  return split;
}

struct SearchEpochRow {
  int epoch = 0;
  double entropy_start = 0.0;  // mean edge entropy before the epoch's updates
  double train_loss = 0.0;     // mean over the epoch's weight steps
  double val_loss = 0.0;       // mean over arch steps; NaN during warm-up
};

struct SearchResult {
  std::vector<DiscreteCell> genotype;
  std::vector<SearchEpochRow> trace;
};

namespace detail {

inline std::vector<int> epoch_order(const std::vector<int>& pool, std::uint64_t seed,
                                    std::uint64_t role, int epoch) {
  std::vector<int> order = pool;
  Rng rng = Rng::stream(seed, role, static_cast<std::uint64_t>(epoch));
  rng.shuffle(order);
  return order;
}

}  // namespace detail

// Searches the cell architecture on the given samples. Weight updates use a
// shuffled pass over the train half each epoch; each non-warm-up step also
// takes one architecture update on a batch cycled from the val half.
inline SearchResult run_search(const std::vector<SearchSample>& samples,
                               const ExperimentConfig& cfg, Supernet& net) {
  validate_config(cfg);
  const SplitIndices split = search_split(int(samples.size()), cfg.seed);
  if (int(split.val.size()) < 1) throw ValueError("run_search: empty validation half");

  std::vector<ParamView> weights, arch;
  net.collect_params(&weights);
  net.collect_arch(&arch);
  Adam w_opt(weights, cfg.lr_w, cfg.wd_w);
  Adam a_opt(arch, cfg.lr_arch, cfg.wd_arch);

  SupernetBilevelProblem prob;
  prob.net = &net;
  prob.w_opt = &w_opt;
  prob.a_opt = &a_opt;
  prob.samples = &samples;
  prob.mode = cfg.loss_mode;
  prob.lambda = cfg.lambda_time;
  prob.band = band_of(cfg);

  SearchResult result;
  int val_cursor = 0;
  std::vector<int> val_order = split.val;
  for (int epoch = 0; epoch < cfg.epochs_search; ++epoch) {
    const bool warm = epoch < cfg.warmup_epochs;
    SearchEpochRow row;
    row.epoch = epoch;
    row.entropy_start = net.arch.mean_edge_entropy();

    const std::vector<int> train_order =
        detail::epoch_order(split.train, cfg.seed, 0x74726e6f, epoch);  // "trno"
    double train_sum = 0.0, val_sum = 0.0;
    int n_steps = 0, n_arch = 0;
    for (size_t at = 0; at < train_order.size(); at += size_t(cfg.batch_search)) {
      std::vector<int> train_b(train_order.begin() + long(at),
                               train_order.begin() +
                                   long(std::min(at + size_t(cfg.batch_search), train_order.size())));
      std::vector<int> val_b;
      if (!warm) {
        for (int i = 0; i < int(train_b.size()); ++i) {
          if (val_cursor == 0) {
            val_order = detail::epoch_order(split.val, cfg.seed, 0x76616c6f,  // "valo"
                                            epoch * 100003 + n_arch);
          }
          val_b.push_back(val_order[size_t(val_cursor)]);
          val_cursor = (val_cursor + 1) % int(val_order.size());
        }
      }
      prob.set_batches(train_b, val_b);
      const BilevelTrace tr = bilevel_step(prob, !warm);
      train_sum += tr.train_loss;
      ++n_steps;
      if (!warm) {
        val_sum += tr.val_loss;
        ++n_arch;
      }
    }
    row.train_loss = train_sum / double(n_steps);
    row.val_loss = n_arch > 0 ? val_sum / double(n_arch)
                              : std::numeric_limits<double>::quiet_NaN();
    result.trace.push_back(row);
  }
  net.arch.check_finite();
  result.genotype = net.derive();
  return result;
}

inline void write_search_trace(const std::string& path,
                               const std::vector<SearchEpochRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write search trace: " + path);
  out << "epoch,entropy_start,train_loss,val_loss\n";
  for (const SearchEpochRow& r : rows) {
    out << r.epoch << "," << format_double(r.entropy_start) << ","
        << format_double(r.train_loss) << "," << format_double(r.val_loss) << "\n";
  }
  if (!out) throw IoError("failed writing search trace: " + path);
}

}  // namespace autohr
