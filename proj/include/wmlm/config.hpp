#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include "wmlm/common.hpp"
#include "wmlm/model.hpp"
#include "wmlm/relevance.hpp"
#include "wmlm/schedule.hpp"
#include "wmlm/trainer.hpp"

namespace wmlm {

// Flat key=value settings shared by every pipeline stage. Field defaults are
// the reference operating point: window 10, rates [0.15, 0.50], weights
// [1, 5], max_len 128.
struct PipelineConfig {
  std::string vocab_path;
  std::string corpus_path;
  std::string table_path = "counts.cooc";
  std::string relevance_path = "relevance.tsv";
  std::string schedule_path = "schedule.tsv";
  std::string checkpoint_path = "model.ckpt";
  std::string curve_path = "loss_curve.tsv";
  std::string probe_path;
  std::string report_path = "report.jsonl";

  int window = 10;
  double rate_min = 0.15;
  double rate_max = 0.50;
  double weight_min = 1.0;
  double weight_max = 5.0;
  bool rank_normalize = true;
  bool normalize_by_partners = true;
  bool clamp_negative = false;

  std::string variant = "vw";
  std::uint64_t seed = 0;
  std::uint64_t steps = 200;
  std::size_t batch_size = 16;
  std::size_t max_len = 128;
  double lr = 1e-3;
  double weight_decay = 0.01;
  bool mean_reduction = true;
  std::size_t d_model = 64;
  std::size_t n_blocks = 2;
  std::size_t threads = 1;

  ScheduleConfig schedule_config() const {
    ScheduleConfig c;
    c.rate_min = rate_min;
    c.rate_max = rate_max;
    c.weight_min = weight_min;
    c.weight_max = weight_max;
    c.rank_normalize = rank_normalize;
    return c;
  }

  RelevanceOptions relevance_options() const {
    RelevanceOptions o;
    o.normalize_by_partners = normalize_by_partners;
    o.clamp_negative = clamp_negative;
    return o;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.variant = parse_variant(variant);
    t.steps = steps;
    t.batch_size = batch_size;
    t.max_len = max_len;
    t.lr = lr;
    t.weight_decay = weight_decay;
    t.seed = seed;
    t.mean_reduction = mean_reduction;
    return t;
  }

  ModelConfig model_config(std::size_t vocab_size) const {
    ModelConfig m;
    m.vocab_size = vocab_size;
    m.d_model = d_model;
    m.n_blocks = n_blocks;
    m.max_len = max_len;
    return m;
  }

  void validate() const {
    if (window < 1) throw UsageError("window must be >= 1");
    if (!(rate_min <= rate_max)) throw UsageError("rate range is not ordered");
    if (!(weight_min <= weight_max)) throw UsageError("weight range is not ordered");
    if (rate_min < 0.0 || rate_max > 1.0) throw UsageError("rates must lie in [0, 1]");
    if (weight_min < 0.0) throw UsageError("weights must be non-negative");
    if (max_len == 0) throw UsageError("max_len must be positive");
    parse_variant(variant);
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t lo = s.find_first_not_of(" \t\r");
  if (lo == std::string::npos) return "";
  std::size_t hi = s.find_last_not_of(" \t\r");
  return s.substr(lo, hi - lo + 1);
}

inline double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' needs a number, got '" + value + "'");
  }
  if (used != value.size())
    throw UsageError("config key '" + key + "' needs a number, got '" + value + "'");
  return v;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(value, &used);
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' needs a non-negative integer, got '" + value +
                     "'");
  }
  if (used != value.size() || value.find('-') != std::string::npos)
    throw UsageError("config key '" + key + "' needs a non-negative integer, got '" + value +
                     "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw UsageError("config key '" + key + "' needs true or false, got '" + value + "'");
}

}  // namespace detail

inline void set_config_key(PipelineConfig& cfg, const std::string& key,
                           const std::string& value) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_u64;
  if (key == "vocab") cfg.vocab_path = value;
  else if (key == "corpus") cfg.corpus_path = value;
  else if (key == "table") cfg.table_path = value;
  else if (key == "relevance") cfg.relevance_path = value;
  else if (key == "schedule") cfg.schedule_path = value;
  else if (key == "checkpoint") cfg.checkpoint_path = value;
  else if (key == "curve") cfg.curve_path = value;
  else if (key == "probes") cfg.probe_path = value;
  else if (key == "report") cfg.report_path = value;
  else if (key == "window") cfg.window = static_cast<int>(parse_u64(key, value));
  else if (key == "rate_min") cfg.rate_min = parse_double(key, value);
  else if (key == "rate_max") cfg.rate_max = parse_double(key, value);
  else if (key == "weight_min") cfg.weight_min = parse_double(key, value);
  else if (key == "weight_max") cfg.weight_max = parse_double(key, value);
  else if (key == "rank_normalize") cfg.rank_normalize = parse_bool(key, value);
  else if (key == "normalize_by_partners") cfg.normalize_by_partners = parse_bool(key, value);
  else if (key == "clamp_negative") cfg.clamp_negative = parse_bool(key, value);
  else if (key == "variant") cfg.variant = value;
  else if (key == "seed") cfg.seed = parse_u64(key, value);
  else if (key == "steps") cfg.steps = parse_u64(key, value);
  else if (key == "batch_size") cfg.batch_size = parse_u64(key, value);
  else if (key == "max_len") cfg.max_len = parse_u64(key, value);
  else if (key == "lr") cfg.lr = parse_double(key, value);
  else if (key == "weight_decay") cfg.weight_decay = parse_double(key, value);
  else if (key == "mean_reduction") cfg.mean_reduction = parse_bool(key, value);
  else if (key == "d_model") cfg.d_model = parse_u64(key, value);
  else if (key == "n_blocks") cfg.n_blocks = parse_u64(key, value);
  else if (key == "threads") cfg.threads = parse_u64(key, value);
  else throw UsageError("unknown config key '" + key + "'");
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  PipelineConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = detail::trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(line_no) + " is not key = value");
    const std::string key = detail::trim(stripped.substr(0, eq));
    const std::string value = detail::trim(stripped.substr(eq + 1));
    if (key.empty())
      throw UsageError("config line " + std::to_string(line_no) + " has an empty key");
    set_config_key(cfg, key, value);
  }
  return cfg;
}

}  // namespace wmlm
