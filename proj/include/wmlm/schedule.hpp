#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "wmlm/common.hpp"
#include "wmlm/hash.hpp"
#include "wmlm/io_util.hpp"
#include "wmlm/relevance.hpp"
#include "wmlm/tokenizer.hpp"
#include "wmlm/vocab.hpp"

namespace wmlm {

struct ScheduleConfig {
  double rate_min = 0.15;
  double rate_max = 0.50;
  double weight_min = 1.0;
  double weight_max = 5.0;
  // Rank normalization is scale-free: any c > 0 rescaling of relevance (or a
  // PMI log-base change) yields a bit-identical schedule. Min-max is kept as
  // an alternative.
  bool rank_normalize = true;
};

// Per-token masking rate m(t) and penalty weight w(t). Subword and special
// tokens are pinned to the floor exactly; whole-word tokens with defined
// relevance are spread across [rate_min, rate_max] x [weight_min, weight_max]
// monotonically in relevance.
class MaskingSchedule {
 public:
  MaskingSchedule() = default;

  static MaskingSchedule build(const RelevanceTable& rel, const Vocabulary& vocab,
                               ScheduleConfig config = {}) {
    validate_ranges(config);
    MaskingSchedule s;
    s.config_ = config;
    s.rate_.assign(vocab.size(), config.rate_min);
    s.weight_.assign(vocab.size(), config.weight_min);

    std::vector<std::pair<double, TokenId>> observed;  // (r, id)
    for (TokenId t = 0; t < static_cast<TokenId>(vocab.size()); ++t) {
      if (!vocab.is_whole_word(t)) continue;
      if (auto r = rel.relevance(t)) observed.emplace_back(*r, t);
    }
    if (observed.size() < 2) {
      s.floor_fallback_ = true;
      return s;
    }
    std::sort(observed.begin(), observed.end());
    const double denom = static_cast<double>(observed.size() - 1);
    std::size_t i = 0;
    while (i < observed.size()) {
      std::size_t j = i;
      while (j + 1 < observed.size() && observed[j + 1].first == observed[i].first) ++j;
      double q;
      if (config.rank_normalize) {
        const double avg_rank = static_cast<double>(i + j) / 2.0;  // ties share the mean rank
        q = avg_rank / denom;
      } else {
        const double lo = observed.front().first, hi = observed.back().first;
        q = hi > lo ? (observed[i].first - lo) / (hi - lo) : 0.5;
      }
      for (std::size_t k = i; k <= j; ++k) {
        const auto idx = static_cast<std::size_t>(observed[k].second);
        s.rate_[idx] = config.rate_min + q * (config.rate_max - config.rate_min);
        s.weight_[idx] = config.weight_min + q * (config.weight_max - config.weight_min);
      }
      i = j + 1;
    }
    return s;
  }

  // Uniform schedule at the floor; the uu baseline and the unseen-token rule.
  static MaskingSchedule all_floor(std::size_t vocab_size, ScheduleConfig config = {}) {
    validate_ranges(config);
    MaskingSchedule s;
    s.config_ = config;
    s.rate_.assign(vocab_size, config.rate_min);
    s.weight_.assign(vocab_size, config.weight_min);
    return s;
  }

  double rate(TokenId t) const { return rate_[static_cast<std::size_t>(t)]; }
  double weight(TokenId t) const { return weight_[static_cast<std::size_t>(t)]; }
  std::size_t size() const { return rate_.size(); }
  const ScheduleConfig& config() const { return config_; }
  bool floor_fallback() const { return floor_fallback_; }

  void set_rate(TokenId t, double m) { rate_[static_cast<std::size_t>(t)] = m; }
  void set_weight(TokenId t, double w) { weight_[static_cast<std::size_t>(t)] = w; }

  std::uint64_t vocab_hash() const { return vocab_hash_; }
  std::uint64_t input_hash() const { return input_hash_; }
  void set_hashes(std::uint64_t vocab_hash, std::uint64_t input_hash) {
    vocab_hash_ = vocab_hash;
    input_hash_ = input_hash;
  }

  bool operator==(const MaskingSchedule& other) const {
    return rate_ == other.rate_ && weight_ == other.weight_;
  }

  std::string serialize(const Vocabulary& vocab) const {
    std::ostringstream out;
    out << "# wmlm-schedule v1\trate_range=" << format_double(config_.rate_min) << ','
        << format_double(config_.rate_max) << "\tweight_range=" << format_double(config_.weight_min)
        << ',' << format_double(config_.weight_max)
        << "\tnormalization=" << (config_.rank_normalize ? "rank" : "minmax")
        << "\tvocab_hash=" << hash_hex(vocab_hash_) << "\tinputs=" << hash_hex(input_hash_) << "\n";
    for (TokenId t = 0; t < static_cast<TokenId>(rate_.size()); ++t)
      out << t << '\t' << vocab.token(t) << '\t' << format_double(rate(t)) << '\t'
          << format_double(weight(t)) << '\n';
    return out.str();
  }

  void save(const std::string& path, const Vocabulary& vocab) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write schedule file: " + path);
    out << serialize(vocab);
    if (!out) throw Error("write failed: " + path);
  }

  static MaskingSchedule load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError("cannot open schedule file: " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("# wmlm-schedule v1", 0) != 0)
      throw ArtifactError("not a schedule file: " + path);
    MaskingSchedule s;
    for (const auto& f : split_tabs(line)) {
      if (f.rfind("rate_range=", 0) == 0)
        parse_range(f.substr(11), s.config_.rate_min, s.config_.rate_max);
      else if (f.rfind("weight_range=", 0) == 0)
        parse_range(f.substr(13), s.config_.weight_min, s.config_.weight_max);
      else if (f.rfind("normalization=", 0) == 0)
        s.config_.rank_normalize = f.substr(14) == "rank";
      else if (f.rfind("vocab_hash=", 0) == 0)
        s.vocab_hash_ = parse_hash_hex(f.substr(11));
      else if (f.rfind("inputs=", 0) == 0)
        s.input_hash_ = parse_hash_hex(f.substr(7));
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      auto cols = split_tabs(line);
      if (cols.size() != 4)
        throw ArtifactError("schedule file line " + std::to_string(line_no) +
                            ": expected 4 tab-separated fields");
      TokenId t;
      double m, w;
      try {
        t = static_cast<TokenId>(std::stol(cols[0]));
        m = std::stod(cols[2]);
        w = std::stod(cols[3]);
      } catch (const std::exception&) {
        throw ArtifactError("schedule file line " + std::to_string(line_no) + ": parse error");
      }
      if (t != static_cast<TokenId>(s.rate_.size()))
        throw ArtifactError("schedule file line " + std::to_string(line_no) +
                            ": token ids must be dense and ordered");
      if (m < s.config_.rate_min || m > s.config_.rate_max)
        throw ArtifactError("schedule file line " + std::to_string(line_no) +
                            ": rate outside declared range");
      if (w < s.config_.weight_min || w > s.config_.weight_max)
        throw ArtifactError("schedule file line " + std::to_string(line_no) +
                            ": weight outside declared range");
      s.rate_.push_back(m);
      s.weight_.push_back(w);
    }
    return s;
  }

 private:
  static void validate_ranges(const ScheduleConfig& c) {
    if (!(c.rate_min <= c.rate_max) || !(c.weight_min <= c.weight_max) || c.rate_min < 0.0 ||
        c.rate_max > 1.0 || c.weight_min < 0.0)
      throw Error("invalid schedule ranges");
  }

  static void parse_range(const std::string& s, double& lo, double& hi) {
    auto comma = s.find(',');
    if (comma == std::string::npos) throw ArtifactError("bad range field: " + s);
    lo = std::stod(s.substr(0, comma));
    hi = std::stod(s.substr(comma + 1));
  }

  std::vector<double> rate_;
  std::vector<double> weight_;
  ScheduleConfig config_;
  bool floor_fallback_ = false;
  std::uint64_t vocab_hash_ = 0;
  std::uint64_t input_hash_ = 0;
};

struct ScheduleStats {
  double mean_rate = 0.0;          // token-frequency weighted over the corpus
  std::uint64_t tokens_seen = 0;
  std::array<std::uint64_t, 10> rate_histogram{};    // over [rate_min, rate_max]
  std::array<std::uint64_t, 10> weight_histogram{};  // over [weight_min, weight_max]
};

inline ScheduleStats schedule_stats(const MaskingSchedule& s,
                                    const std::vector<TokenizedDoc>& corpus) {
  ScheduleStats stats;
  const auto& cfg = s.config();
  const double rate_span = std::max(1e-12, cfg.rate_max - cfg.rate_min);
  const double weight_span = std::max(1e-12, cfg.weight_max - cfg.weight_min);
  double sum = 0.0;
  for (const auto& doc : corpus) {
    for (TokenId t : doc.token_ids) {
      const double m = s.rate(t);
      const double w = s.weight(t);
      sum += m;
      ++stats.tokens_seen;
      auto rb = static_cast<std::size_t>((m - cfg.rate_min) / rate_span * 10.0);
      auto wb = static_cast<std::size_t>((w - cfg.weight_min) / weight_span * 10.0);
      ++stats.rate_histogram[std::min<std::size_t>(9, rb)];
      ++stats.weight_histogram[std::min<std::size_t>(9, wb)];
    }
  }
  stats.mean_rate = stats.tokens_seen ? sum / static_cast<double>(stats.tokens_seen) : 0.0;
  return stats;
}

}  // namespace wmlm
