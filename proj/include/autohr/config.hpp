#pragma once

// Flat key=value experiment configuration shared by the CLI subcommands.
// Resolution order: built-in defaults, then config file, then the
// AUTOHR_SEED environment variable, then explicit command line overrides.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "autohr/errors.hpp"
#include "autohr/signal.hpp"

namespace autohr {

struct ExperimentConfig {
  // data split
  int folds = 5;
  int fold_index = 0;

  // model
  int channels_search = 8;
  int channels_train = 16;
  int num_blocks = 4;
  int cells_per_block = 2;
  bool shared_arch = true;
  double pc_ratio = 1.0;
  bool edge_norm = false;
  std::string genotype = "autohr_v1";

  // optimization
  int clip_len_train = 160;
  int clip_len_search = 128;
  int batch_train = 4;
  int batch_search = 2;
  int epochs_train = 15;
  int epochs_search = 12;
  int warmup_epochs = 5;
  double lr_w = 1e-4;
  double wd_w = 5e-5;
  double lr_arch = 6e-4;
  double wd_arch = 1e-3;

  // loss
  double lambda_time = 0.2;
  std::string loss_mode = "overall";  // overall | time | freq

  // augmentation
  bool da1 = true;
  double da1_prob = 0.5;
  bool da2 = true;

  // heart rate band
  double band_lo_bpm = 40.0;
  double band_hi_bpm = 180.0;
  double band_step_bpm = 1.0;

  std::uint64_t seed = 1;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const char* ws = " \t\r\n";
  const auto a = s.find_first_not_of(ws);
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(ws);
  return s.substr(a, b - a + 1);
}

inline bool parse_bool_value(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("bad boolean for " + key + ": '" + v + "'");
}

inline int parse_int_value(const std::string& v, const std::string& key) {
  size_t used = 0;
  int out = 0;
  try {
    out = std::stoi(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + key + ": '" + v + "'");
  }
  if (used != v.size()) throw ConfigError("bad integer for " + key + ": '" + v + "'");
  return out;
}

inline double parse_double_value(const std::string& v, const std::string& key) {
  size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + key + ": '" + v + "'");
  }
  if (used != v.size()) throw ConfigError("bad number for " + key + ": '" + v + "'");
  return out;
}

inline std::uint64_t parse_u64_value(const std::string& v, const std::string& key) {
  size_t used = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("bad seed for " + key + ": '" + v + "'");
  }
  if (used != v.size()) throw ConfigError("bad seed for " + key + ": '" + v + "'");
  return static_cast<std::uint64_t>(out);
}

}  // namespace detail

// Every key apply_option understands, in file order.
inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "folds",          "fold_index",     "channels_search", "channels_train",
      "num_blocks",     "cells_per_block", "shared_arch",    "pc_ratio",
      "edge_norm",      "genotype",       "clip_len_train",  "clip_len_search",
      "batch_train",    "batch_search",   "epochs_train",    "epochs_search",
      "warmup_epochs",  "lr_w",           "wd_w",            "lr_arch",
      "wd_arch",        "lambda_time",    "loss_mode",       "da1",
      "da1_prob",       "da2",            "band_lo_bpm",     "band_hi_bpm",
      "band_step_bpm",  "seed"};
  return keys;
}

inline bool is_config_key(const std::string& key) {
  const auto& keys = config_keys();
  return std::find(keys.begin(), keys.end(), key) != keys.end();
}

// Sets one option by key. Throws ConfigError for unknown keys or bad values.
inline void apply_option(ExperimentConfig& cfg, const std::string& key,
                         const std::string& value) {
  using detail::parse_bool_value;
  using detail::parse_double_value;
  using detail::parse_int_value;
  using detail::parse_u64_value;
  if (key == "folds") cfg.folds = parse_int_value(value, key);
  else if (key == "fold_index") cfg.fold_index = parse_int_value(value, key);
  else if (key == "channels_search") cfg.channels_search = parse_int_value(value, key);
  else if (key == "channels_train") cfg.channels_train = parse_int_value(value, key);
  else if (key == "num_blocks") cfg.num_blocks = parse_int_value(value, key);
  else if (key == "cells_per_block") cfg.cells_per_block = parse_int_value(value, key);
  else if (key == "shared_arch") cfg.shared_arch = parse_bool_value(value, key);
  else if (key == "pc_ratio") cfg.pc_ratio = parse_double_value(value, key);
  else if (key == "edge_norm") cfg.edge_norm = parse_bool_value(value, key);
  else if (key == "genotype") cfg.genotype = value;
  else if (key == "clip_len_train") cfg.clip_len_train = parse_int_value(value, key);
  else if (key == "clip_len_search") cfg.clip_len_search = parse_int_value(value, key);
  else if (key == "batch_train") cfg.batch_train = parse_int_value(value, key);
  else if (key == "batch_search") cfg.batch_search = parse_int_value(value, key);
  else if (key == "epochs_train") cfg.epochs_train = parse_int_value(value, key);
  else if (key == "epochs_search") cfg.epochs_search = parse_int_value(value, key);
  else if (key == "warmup_epochs") cfg.warmup_epochs = parse_int_value(value, key);
  else if (key == "lr_w") cfg.lr_w = parse_double_value(value, key);
  else if (key == "wd_w") cfg.wd_w = parse_double_value(value, key);
  else if (key == "lr_arch") cfg.lr_arch = parse_double_value(value, key);
  else if (key == "wd_arch") cfg.wd_arch = parse_double_value(value, key);
  else if (key == "lambda_time") cfg.lambda_time = parse_double_value(value, key);
  else if (key == "loss_mode") cfg.loss_mode = value;
  else if (key == "da1") cfg.da1 = parse_bool_value(value, key);
  else if (key == "da1_prob") cfg.da1_prob = parse_double_value(value, key);
  else if (key == "da2") cfg.da2 = parse_bool_value(value, key);
  else if (key == "band_lo_bpm") cfg.band_lo_bpm = parse_double_value(value, key);
  else if (key == "band_hi_bpm") cfg.band_hi_bpm = parse_double_value(value, key);
  else if (key == "band_step_bpm") cfg.band_step_bpm = parse_double_value(value, key);
  else if (key == "seed") cfg.seed = parse_u64_value(value, key);
  else throw ConfigError("unknown config key: '" + key + "'");
}

// Reads `key = value` lines. Blank lines and lines starting with # are skipped.
inline void load_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key");
    }
    apply_option(cfg, key, value);
  }
}

inline void apply_env(ExperimentConfig& cfg) {
  const char* s = std::getenv("AUTOHR_SEED");
  if (s != nullptr && *s != '\0') cfg.seed = detail::parse_u64_value(s, "AUTOHR_SEED");
}

inline void validate_config(const ExperimentConfig& cfg) {
  if (cfg.folds < 2) throw ConfigError("folds must be at least 2");
  if (cfg.fold_index < 0 || cfg.fold_index >= cfg.folds) {
    throw ConfigError("fold_index must lie in [0, folds)");
  }
  if (cfg.channels_search < 1 || cfg.channels_train < 1) {
    throw ConfigError("channel counts must be positive");
  }
  if (cfg.num_blocks < 1 || cfg.cells_per_block < 1) {
    throw ConfigError("num_blocks and cells_per_block must be positive");
  }
  if (!(cfg.pc_ratio > 0.0) || cfg.pc_ratio > 1.0) {
    throw ConfigError("pc_ratio must lie in (0, 1]");
  }
  if (cfg.clip_len_train < 2 || cfg.clip_len_search < 2) {
    throw ConfigError("clip lengths must be at least 2");
  }
  if (cfg.batch_train < 1 || cfg.batch_search < 1) {
    throw ConfigError("batch sizes must be positive");
  }
  if (cfg.epochs_train < 1 || cfg.epochs_search < 1) {
    throw ConfigError("epoch counts must be positive");
  }
  if (cfg.warmup_epochs < 0 || cfg.warmup_epochs >= cfg.epochs_search) {
    throw ConfigError("warmup_epochs must lie in [0, epochs_search)");
  }
  if (cfg.lr_w < 0.0 || cfg.lr_arch < 0.0) throw ConfigError("learning rates must be nonnegative");
  if (cfg.wd_w < 0.0 || cfg.wd_arch < 0.0) throw ConfigError("weight decay must be nonnegative");
  if (cfg.lambda_time < 0.0) throw ConfigError("lambda_time must be nonnegative");
  if (cfg.loss_mode != "overall" && cfg.loss_mode != "time" && cfg.loss_mode != "freq") {
    throw ConfigError("loss_mode must be one of overall, time, freq");
  }
  if (cfg.da1_prob < 0.0 || cfg.da1_prob > 1.0) throw ConfigError("da1_prob must lie in [0, 1]");
  Band b;
  b.lo_bpm = cfg.band_lo_bpm;
  b.hi_bpm = cfg.band_hi_bpm;
  b.step_bpm = cfg.band_step_bpm;
  try {
    validate_band(b);
  } catch (const InvalidBandError& e) {
    throw ConfigError(std::string("band: ") + e.what());
  }
}

inline Band band_of(const ExperimentConfig& cfg) {
  Band b;
  b.lo_bpm = cfg.band_lo_bpm;
  b.hi_bpm = cfg.band_hi_bpm;
  b.step_bpm = cfg.band_step_bpm;
  return b;
}

// Builds the effective configuration. `config_path` may be empty; overrides
// are (key, value) pairs applied last, after the environment.
inline ExperimentConfig resolve_config(
    const std::string& config_path,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
  ExperimentConfig cfg;
  if (!config_path.empty()) load_config_file(cfg, config_path);
  apply_env(cfg);
  for (const auto& kv : overrides) apply_option(cfg, kv.first, kv.second);
  validate_config(cfg);
  return cfg;
}

inline std::string config_to_text(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "folds = " << cfg.folds << "\n";
  out << "fold_index = " << cfg.fold_index << "\n";
  out << "channels_search = " << cfg.channels_search << "\n";
  out << "channels_train = " << cfg.channels_train << "\n";
  out << "num_blocks = " << cfg.num_blocks << "\n";
  out << "cells_per_block = " << cfg.cells_per_block << "\n";
  out << "shared_arch = " << (cfg.shared_arch ? "true" : "false") << "\n";
  out << "pc_ratio = " << format_double(cfg.pc_ratio) << "\n";
  out << "edge_norm = " << (cfg.edge_norm ? "true" : "false") << "\n";
  out << "genotype = " << cfg.genotype << "\n";
  out << "clip_len_train = " << cfg.clip_len_train << "\n";
  out << "clip_len_search = " << cfg.clip_len_search << "\n";
  out << "batch_train = " << cfg.batch_train << "\n";
  out << "batch_search = " << cfg.batch_search << "\n";
  out << "epochs_train = " << cfg.epochs_train << "\n";
  out << "epochs_search = " << cfg.epochs_search << "\n";
  out << "warmup_epochs = " << cfg.warmup_epochs << "\n";
  out << "lr_w = " << format_double(cfg.lr_w) << "\n";
  out << "wd_w = " << format_double(cfg.wd_w) << "\n";
  out << "lr_arch = " << format_double(cfg.lr_arch) << "\n";
  out << "wd_arch = " << format_double(cfg.wd_arch) << "\n";
  out << "lambda_time = " << format_double(cfg.lambda_time) << "\n";
  out << "loss_mode = " << cfg.loss_mode << "\n";
  out << "da1 = " << (cfg.da1 ? "true" : "false") << "\n";
  out << "da1_prob = " << format_double(cfg.da1_prob) << "\n";
  out << "da2 = " << (cfg.da2 ? "true" : "false") << "\n";
  out << "band_lo_bpm = " << format_double(cfg.band_lo_bpm) << "\n";
  out << "band_hi_bpm = " << format_double(cfg.band_hi_bpm) << "\n";
  out << "band_step_bpm = " << format_double(cfg.band_step_bpm) << "\n";
  out << "seed = " << cfg.seed << "\n";
  return out.str();
}

inline void write_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config file: " + path);
  out << config_to_text(cfg);
  if (!out) throw IoError("failed writing config file: " + path);
}

}  // namespace autohr
