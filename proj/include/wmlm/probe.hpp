#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <future>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wmlm/common.hpp"
#include "wmlm/hash.hpp"
#include "wmlm/io_util.hpp"
#include "wmlm/model.hpp"
#include "wmlm/tokenizer.hpp"
#include "wmlm/vocab.hpp"

namespace wmlm {

struct ProbeRecord {
  std::string template_text;  // contains exactly one [MASK]
  std::string gold;
  std::string relation;
  std::string domain;
  TokenizedDoc prompt;
  TokenId gold_id = 0;
};

struct ProbeSet {
  std::vector<ProbeRecord> records;
  std::vector<std::size_t> rejected_lines;  // 1-based: bad field count or MASK count != 1
  std::uint64_t skipped_golds = 0;          // gold not a single whole-word vocab token
};

// Tab-separated lines: template \t gold \t relation \t domain.
inline ProbeSet load_probes(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open probe file: " + path);
  ProbeSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields = split_tabs(line);
    if (fields.size() != 4) {
      set.rejected_lines.push_back(line_no);
      continue;
    }
    ProbeRecord rec;
    rec.template_text = fields[0];
    rec.gold = fields[1];
    rec.relation = fields[2];
    rec.domain = fields[3];
    rec.prompt = tokenize(rec.template_text, vocab);
    std::size_t masks = 0;
    for (TokenId id : rec.prompt.token_ids)
      if (id == vocab.mask_id()) ++masks;
    if (masks != 1) {
      set.rejected_lines.push_back(line_no);
      continue;
    }
    TokenizedDoc gold_doc = tokenize(rec.gold, vocab);
    if (gold_doc.size() != 1 || gold_doc.token_ids[0] == vocab.unk_id() ||
        !vocab.is_whole_word(gold_doc.token_ids[0])) {
      ++set.skipped_golds;
      continue;
    }
    rec.gold_id = gold_doc.token_ids[0];
    set.records.push_back(std::move(rec));
  }
  return set;
}

// Rank of the gold among all non-special tokens: 1 + number of candidates
// with higher probability, ties going to the lower token id.
inline std::size_t gold_rank(std::span<const double> probs, TokenId gold,
                             const Vocabulary& vocab) {
  const double pg = probs[static_cast<std::size_t>(gold)];
  std::size_t beaten_by = 0;
  for (TokenId v : vocab.non_special_ids()) {
    const double pv = probs[static_cast<std::size_t>(v)];
    if (pv > pg || (pv == pg && v < gold)) ++beaten_by;
  }
  return 1 + beaten_by;
}

struct ProbeStats {
  double rr_sum = 0.0;
  std::uint64_t count = 0;

  double mrr() const { return count ? rr_sum / static_cast<double>(count) : 0.0; }
};

struct ProbeReport {
  // domain -> relation -> stats; std::map keeps emission order deterministic
  std::map<std::string, std::map<std::string, ProbeStats>> relations;

  ProbeStats domain_overall(const std::string& domain) const {
    ProbeStats total;
    auto it = relations.find(domain);
    if (it == relations.end()) return total;
    for (const auto& [rel, stats] : it->second) {
      total.rr_sum += stats.rr_sum;
      total.count += stats.count;
    }
    return total;
  }
};

inline ProbeReport evaluate(const TinyMlmModel& model, const Vocabulary& vocab,
                            std::span<const ProbeRecord> probes, std::size_t threads = 1) {
  std::vector<double> rr(probes.size());
  auto score_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      std::vector<double> probs = model.mask_probabilities(probes[i].prompt, vocab);
      rr[i] = 1.0 / static_cast<double>(gold_rank(probs, probes[i].gold_id, vocab));
    }
  };
  if (threads <= 1 || probes.size() < 2) {
    score_range(0, probes.size());
  } else {
    const std::size_t chunk = (probes.size() + threads - 1) / threads;
    std::vector<std::future<void>> futures;
    for (std::size_t lo = 0; lo < probes.size(); lo += chunk)
      futures.push_back(std::async(std::launch::async, score_range, lo,
                                   std::min(lo + chunk, probes.size())));
    for (auto& f : futures) f.get();
  }
  ProbeReport report;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    ProbeStats& stats = report.relations[probes[i].domain][probes[i].relation];
    stats.rr_sum += rr[i];
    ++stats.count;
  }
  return report;
}

// Header line with input hashes, then one JSON object per (domain,
// relation), then a "*" row per domain with the count-weighted overall MRR.
// rr_sum round-trips exactly via %.17g.
inline void write_report_jsonl(const std::string& path, const ProbeReport& report,
                               std::uint64_t vocab_hash = 0, std::uint64_t input_hash = 0) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write report: " + path);
  out << "{\"artifact\":\"probe-report\",\"vocab_hash\":\"" << hash_hex(vocab_hash)
      << "\",\"inputs\":\"" << hash_hex(input_hash) << "\"}\n";
  auto emit = [&](const std::string& domain, const std::string& relation,
                  const ProbeStats& stats) {
    out << "{\"domain\":" << nlohmann::json(domain).dump()
        << ",\"relation\":" << nlohmann::json(relation).dump() << ",\"count\":" << stats.count
        << ",\"rr_sum\":" << format_double(stats.rr_sum)
        << ",\"mrr\":" << format_double(stats.mrr()) << "}\n";
  };
  for (const auto& [domain, rels] : report.relations) {
    for (const auto& [relation, stats] : rels) emit(domain, relation, stats);
    emit(domain, "*", report.domain_overall(domain));
  }
  if (!out) throw Error("write failed: " + path);
}

inline ProbeReport load_report_jsonl(const std::string& path,
                                     std::uint64_t* vocab_hash = nullptr,
                                     std::uint64_t* input_hash = nullptr) {
  std::ifstream in(path);
  if (!in) throw ArtifactError("cannot open report: " + path);
  ProbeReport report;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw ArtifactError("malformed report line " + std::to_string(line_no) + " in " + path);
    if (j.contains("artifact")) {
      if (vocab_hash && j.contains("vocab_hash"))
        *vocab_hash = parse_hash_hex(j["vocab_hash"].get<std::string>());
      if (input_hash && j.contains("inputs"))
        *input_hash = parse_hash_hex(j["inputs"].get<std::string>());
      continue;
    }
    if (!j.contains("domain") || !j.contains("relation") || !j.contains("count") ||
        !j.contains("rr_sum"))
      throw ArtifactError("malformed report line " + std::to_string(line_no) + " in " + path);
    const std::string relation = j["relation"].get<std::string>();
    if (relation == "*") continue;  // recomputed from the relation rows
    ProbeStats& stats = report.relations[j["domain"].get<std::string>()][relation];
    stats.rr_sum = j["rr_sum"].get<double>();
    stats.count = j["count"].get<std::uint64_t>();
  }
  return report;
}

inline std::string format_mrr(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

inline std::string format_report_table(const ProbeReport& report) {
  std::ostringstream out;
  out << "domain\trelation\tcount\tmrr\n";
  for (const auto& [domain, rels] : report.relations) {
    for (const auto& [relation, stats] : rels)
      out << domain << '\t' << relation << '\t' << stats.count << '\t'
          << format_mrr(stats.mrr()) << '\n';
    const ProbeStats total = report.domain_overall(domain);
    out << domain << "\t*\t" << total.count << '\t' << format_mrr(total.mrr()) << '\n';
  }
  return out.str();
}

// Side-by-side deltas over the union of (domain, relation) keys.
inline std::string format_report_delta(const ProbeReport& a, const ProbeReport& b,
                                       const std::string& label_a,
                                       const std::string& label_b) {
  std::map<std::string, std::map<std::string, bool>> keys;
  for (const auto& [domain, rels] : a.relations)
    for (const auto& [relation, stats] : rels) keys[domain][relation] = true;
  for (const auto& [domain, rels] : b.relations)
    for (const auto& [relation, stats] : rels) keys[domain][relation] = true;

  std::ostringstream out;
  out << "domain\trelation\tmrr[" << label_a << "]\tmrr[" << label_b << "]\tdelta\n";
  auto stats_of = [](const ProbeReport& r, const std::string& d,
                     const std::string& rel) -> ProbeStats {
    auto it = r.relations.find(d);
    if (it == r.relations.end()) return {};
    auto jt = it->second.find(rel);
    return jt == it->second.end() ? ProbeStats{} : jt->second;
  };
  for (const auto& [domain, rels] : keys) {
    for (const auto& [relation, unused] : rels) {
      const double ma = stats_of(a, domain, relation).mrr();
      const double mb = stats_of(b, domain, relation).mrr();
      out << domain << '\t' << relation << '\t' << format_mrr(ma) << '\t' << format_mrr(mb)
          << '\t' << format_mrr(mb - ma) << '\n';
    }
    const double ma = a.domain_overall(domain).mrr();
    const double mb = b.domain_overall(domain).mrr();
    out << domain << "\t*\t" << format_mrr(ma) << '\t' << format_mrr(mb) << '\t'
        << format_mrr(mb - ma) << '\n';
  }
  return out.str();
}

// Per prompt, each model's top-k predictions with probabilities to two
// decimals; the gold token is starred.
inline std::string format_case_study(const TinyMlmModel& model_a, const TinyMlmModel& model_b,
                                     const Vocabulary& vocab,
                                     std::span<const ProbeRecord> probes, std::size_t k,
                                     const std::string& label_a, const std::string& label_b) {
  if (k < 1) throw UsageError("case study needs k >= 1");
  std::ostringstream out;
  auto cell = [&](const std::vector<std::pair<TokenId, double>>& top, std::size_t i,
                  TokenId gold) {
    if (i >= top.size()) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof(buf), " (%.2f)", top[i].second);
    std::string s = vocab.token(top[i].first) + buf;
    if (top[i].first == gold) s += " *";
    return s;
  };
  for (const auto& rec : probes) {
    const auto top_a = model_a.predict_topk(rec.prompt, vocab, k);
    const auto top_b = model_b.predict_topk(rec.prompt, vocab, k);
    out << "=== " << rec.template_text << "\t(gold: " << rec.gold << ")\n";
    out << "rank\t" << label_a << '\t' << label_b << '\n';
    for (std::size_t i = 0; i < k; ++i)
      out << (i + 1) << '\t' << cell(top_a, i, rec.gold_id) << '\t'
          << cell(top_b, i, rec.gold_id) << '\n';
  }
  return out.str();
}

}  // namespace wmlm
