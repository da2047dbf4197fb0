// Command line front end: synthetic data generation, architecture search,
// genotype derivation, training, evaluation, classical baselines, and plots.

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "autohr/harness.hpp"

namespace {

using autohr::ExperimentConfig;

const char* kUsage =
    "usage: autohr <command> [options]\n"
    "\n"
    "commands:\n"
    "  synth     generate a synthetic clip dataset with reference pulse traces\n"
    "  search    search the cell space on a dataset and derive a genotype\n"
    "  derive    re-derive the genotype from saved architecture weights\n"
    "  train     train a network on one fold of a dataset\n"
    "  eval      estimate heart rates with a trained network and report metrics\n"
    "  baseline  run a classical extractor (green, chrom, pos) over a dataset\n"
    "  plot      render scatter and spectrum SVGs from an evaluation directory\n"
    "\n"
    "common options:\n"
    "  --config FILE      key=value experiment configuration\n"
    "  --<key> VALUE      override any configuration key (see README)\n"
    "\n"
    "command options:\n"
    "  synth:    --out DIR [--count N] [--subjects N] [--frames N] [--height N]\n"
    "            [--width N] [--fps X] [--hr-lo X] [--hr-hi X] [--noise-sd X]\n"
    "            [--drift-amp X] [--drift-freq X] [--motion-amp X] [--motion-freq X]\n"
    "            [--pulse-amp X] [--region-frac X] [--harmonic-ratio X]\n"
    "  search:   --data DIR --out DIR\n"
    "  derive:   --checkpoint DIR [--out FILE]\n"
    "  train:    --data DIR --out DIR [--genotype-file FILE] [--resume]\n"
    "  eval:     --data DIR --out DIR --checkpoint DIR [--split test|train|all]\n"
    "            [--genotype-file FILE]\n"
    "  baseline: --data DIR --out DIR [--method green|chrom|pos]\n"
    "            [--split test|train|all] [--region-frac X]\n"
    "  plot:     --results DIR\n";

struct Cli {
  std::string command;
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::map<std::string, std::string> opts;
  bool resume = false;
};

std::string underscored(const std::string& flag) {
  std::string out = flag;
  for (char& c : out) {
    if (c == '-') c = '_';
  }
  return out;
}

Cli parse_cli(const std::vector<std::string>& args) {
  Cli cli;
  cli.command = args[0];
  for (size_t i = 1; i < args.size(); ++i) {
    const std::string& tok = args[i];
    if (tok.size() < 3 || tok.substr(0, 2) != "--") {
      throw autohr::ConfigError("expected an option, got '" + tok + "'");
    }
    const std::string name = underscored(tok.substr(2));
    if (name == "resume") {
      cli.resume = true;
      continue;
    }
    if (i + 1 >= args.size()) throw autohr::ConfigError("option " + tok + " needs a value");
    const std::string value = args[++i];
    if (name == "config") {
      cli.config_path = value;
    } else if (autohr::is_config_key(name)) {
      cli.overrides.emplace_back(name, value);
    } else {
      if (cli.opts.count(name)) throw autohr::ConfigError("duplicate option " + tok);
      cli.opts[name] = value;
    }
  }
  return cli;
}

std::string take_opt(Cli& cli, const std::string& name, const std::string& fallback,
                     bool required) {
  const auto it = cli.opts.find(name);
  if (it == cli.opts.end()) {
    if (required) throw autohr::ConfigError("missing required option --" + name);
    return fallback;
  }
  const std::string v = it->second;
  cli.opts.erase(it);
  return v;
}

void reject_leftovers(const Cli& cli) {
  if (!cli.opts.empty()) {
    throw autohr::ConfigError("unknown option --" + cli.opts.begin()->first + " for " +
                              cli.command);
  }
  if (cli.resume && cli.command != "train") {
    throw autohr::ConfigError("--resume only applies to train");
  }
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const std::string& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
}

void print_metrics(const std::string& split, const autohr::MetricsReport& m) {
  std::printf("split=%s mae=%.3f rmse=%.3f sd=%.3f r=%s\n", split.c_str(), m.mae, m.rmse, m.sd,
              m.pearson_r ? autohr::format_double(*m.pearson_r).c_str() : "n/a");
}

int cmd_synth(Cli& cli) {
  const ExperimentConfig cfg = autohr::resolve_config(cli.config_path, cli.overrides);
  autohr::SynthDatasetParams dp;
  dp.seed = cfg.seed;
  const std::string out = take_opt(cli, "out", "", true);
  dp.count = int(std::stol(take_opt(cli, "count", std::to_string(dp.count), false)));
  dp.subjects = int(std::stol(take_opt(cli, "subjects", std::to_string(dp.subjects), false)));
  dp.hr_lo = std::stod(take_opt(cli, "hr_lo", autohr::format_double(dp.hr_lo), false));
  dp.hr_hi = std::stod(take_opt(cli, "hr_hi", autohr::format_double(dp.hr_hi), false));
  autohr::SynthParams& p = dp.base;
  p.frames = int(std::stol(take_opt(cli, "frames", std::to_string(p.frames), false)));
  p.height = int(std::stol(take_opt(cli, "height", std::to_string(p.height), false)));
  p.width = int(std::stol(take_opt(cli, "width", std::to_string(p.width), false)));
  p.fps = std::stod(take_opt(cli, "fps", autohr::format_double(p.fps), false));
  p.noise_sd = std::stod(take_opt(cli, "noise_sd", autohr::format_double(p.noise_sd), false));
  p.drift_amp = std::stod(take_opt(cli, "drift_amp", autohr::format_double(p.drift_amp), false));
  p.drift_freq_hz =
      std::stod(take_opt(cli, "drift_freq", autohr::format_double(p.drift_freq_hz), false));
  p.motion_amp =
      std::stod(take_opt(cli, "motion_amp", autohr::format_double(p.motion_amp), false));
  p.motion_freq_hz =
      std::stod(take_opt(cli, "motion_freq", autohr::format_double(p.motion_freq_hz), false));
  p.pulse_amp_green =
      std::stod(take_opt(cli, "pulse_amp", autohr::format_double(p.pulse_amp_green), false));
  p.region_frac =
      std::stod(take_opt(cli, "region_frac", autohr::format_double(p.region_frac), false));
  p.harmonic_ratio =
      std::stod(take_opt(cli, "harmonic_ratio", autohr::format_double(p.harmonic_ratio), false));
  reject_leftovers(cli);
  const auto rows = autohr::gen_dataset(dp, out);
  std::printf("wrote %zu clips (%d subjects) to %s\n", rows.size(), dp.subjects, out.c_str());
  return 0;
}

int cmd_search(Cli& cli) {
  const ExperimentConfig cfg = autohr::resolve_config(cli.config_path, cli.overrides);
  autohr::SearchDataOptions opt;
  opt.data_dir = take_opt(cli, "data", "", true);
  opt.out_dir = take_opt(cli, "out", "", true);
  reject_leftovers(cli);
  const autohr::SearchResult res = autohr::run_search_on_dataset(cfg, opt);
  for (const auto& row : res.trace) {
    std::printf("epoch %d entropy %.4f train %.4f val %s\n", row.epoch, row.entropy_start,
                row.train_loss,
                std::isnan(row.val_loss) ? "warmup" : autohr::format_double(row.val_loss).c_str());
  }
  std::printf("genotype written to %s/genotype.txt\n", opt.out_dir.c_str());
  return 0;
}

int cmd_derive(Cli& cli) {
  const std::string ckpt = take_opt(cli, "checkpoint", "", true);
  const std::string out = take_opt(cli, "out", "", false);
  reject_leftovers(cli);
  const std::string text = autohr::derive_from_checkpoint(ckpt);
  if (out.empty()) {
    std::printf("%s", text.c_str());
  } else {
    std::ofstream f(out);
    if (!f) throw autohr::IoError("cannot write genotype file: " + out);
    f << text;
    std::printf("genotype written to %s\n", out.c_str());
  }
  return 0;
}

int cmd_train(Cli& cli) {
  const ExperimentConfig cfg = autohr::resolve_config(cli.config_path, cli.overrides);
  autohr::TrainOptions opt;
  opt.data_dir = take_opt(cli, "data", "", true);
  opt.out_dir = take_opt(cli, "out", "", true);
  opt.genotype_file = take_opt(cli, "genotype_file", "", false);
  opt.resume = cli.resume;
  cli.resume = false;
  reject_leftovers(cli);
  const autohr::TrainResult res = autohr::run_train(cfg, opt);
  print_warnings(res.warnings);
  for (const auto& row : res.log) {
    std::printf("epoch %d time %.4f freq %.4f overall %.4f\n", row.epoch, row.time, row.fre,
                row.overall);
  }
  std::printf("final checkpoint: %s\n", res.checkpoint_dir.c_str());
  return 0;
}

int cmd_eval(Cli& cli) {
  const ExperimentConfig cfg = autohr::resolve_config(cli.config_path, cli.overrides);
  autohr::EvalOptions opt;
  opt.data_dir = take_opt(cli, "data", "", true);
  opt.out_dir = take_opt(cli, "out", "", true);
  opt.checkpoint_dir = take_opt(cli, "checkpoint", "", true);
  opt.genotype_file = take_opt(cli, "genotype_file", "", false);
  opt.split = take_opt(cli, "split", opt.split, false);
  reject_leftovers(cli);
  const autohr::EvalResult res = autohr::run_eval(cfg, opt);
  print_warnings(res.warnings);
  print_metrics(opt.split, res.metrics);
  return 0;
}

int cmd_baseline(Cli& cli) {
  const ExperimentConfig cfg = autohr::resolve_config(cli.config_path, cli.overrides);
  autohr::BaselineOptions opt;
  opt.data_dir = take_opt(cli, "data", "", true);
  opt.out_dir = take_opt(cli, "out", "", true);
  opt.method = take_opt(cli, "method", opt.method, false);
  opt.split = take_opt(cli, "split", opt.split, false);
  opt.region_frac = std::stod(
      take_opt(cli, "region_frac", autohr::format_double(opt.region_frac), false));
  reject_leftovers(cli);
  const autohr::EvalResult res = autohr::run_baseline(cfg, opt);
  print_warnings(res.warnings);
  print_metrics(opt.method + "/" + opt.split, res.metrics);
  return 0;
}

int cmd_plot(Cli& cli) {
  const ExperimentConfig cfg = autohr::resolve_config(cli.config_path, cli.overrides);
  const std::string results = take_opt(cli, "results", "", true);
  reject_leftovers(cli);
  autohr::run_plot(results, autohr::band_of(cfg));
  std::printf("plots written to %s\n", results.c_str());
  return 0;
}

int run(const std::vector<std::string>& args) {
  if (args.empty() || args[0] == "--help" || args[0] == "help") {
    std::fprintf(stderr, "%s", kUsage);
    return args.empty() ? 2 : 0;
  }
  Cli cli = parse_cli(args);
  if (cli.command == "synth") return cmd_synth(cli);
  if (cli.command == "search") return cmd_search(cli);
  if (cli.command == "derive") return cmd_derive(cli);
  if (cli.command == "train") return cmd_train(cli);
  if (cli.command == "eval") return cmd_eval(cli);
  if (cli.command == "baseline") return cmd_baseline(cli);
  if (cli.command == "plot") return cmd_plot(cli);
  std::fprintf(stderr, "autohr: unknown command '%s'\n%s", cli.command.c_str(), kUsage);
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(std::vector<std::string>(argv + 1, argv + argc));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "autohr: %s\n", e.what());
    return 1;
  }
}
