#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <future>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "wmlm/common.hpp"
#include "wmlm/hash.hpp"
#include "wmlm/io_util.hpp"
#include "wmlm/pmi.hpp"
#include "wmlm/tokenizer.hpp"
#include "wmlm/vocab.hpp"

namespace wmlm {

struct RelevanceOptions {
  // Divide row sums by |U|-1 so relevance does not track document length.
  bool normalize_by_partners = true;
  // Clamp negative PMI contributions at zero.
  bool clamp_negative = false;
};

// Per-document informative relevance: for each distinct whole-word token,
// the sum of its PMI with the other distinct whole-word tokens of the doc.
// Absent pairs contribute 0; self-PMI is excluded. Returned sorted by id.
inline std::vector<std::pair<TokenId, double>> doc_relevance(const TokenizedDoc& doc,
                                                             const PmiView& pmi,
                                                             RelevanceOptions opts = {}) {
  std::vector<TokenId> distinct;
  for (std::size_t i = 0; i < doc.size(); ++i)
    if (doc.whole_word_mask[i]) distinct.push_back(doc.token_ids[i]);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::vector<std::pair<TokenId, double>> out;
  out.reserve(distinct.size());
  const double divisor =
      opts.normalize_by_partners ? static_cast<double>(std::max<std::size_t>(1, distinct.size() - 1))
                                 : 1.0;
  for (TokenId t : distinct) {
    double sum = 0.0, comp = 0.0;  // Kahan; keeps doc-order permutations tight
    for (TokenId u : distinct) {
      if (u == t) continue;
      if (auto v = pmi.lookup(t, u)) {
        double x = opts.clamp_negative ? std::max(0.0, *v) : *v;
        double y = x - comp;
        double s = sum + y;
        comp = (s - sum) - y;
        sum = s;
      }
    }
    out.emplace_back(t, sum / divisor);
  }
  return out;
}

// Corpus-averaged relevance. r(t) = mean of t's per-document relevance over
// the documents containing t; tokens never observed are absent.
class RelevanceTable {
 public:
  void accumulate(TokenId t, double doc_value) {
    Entry& e = entries_[t];
    double y = doc_value - e.comp;
    double s = e.sum + y;
    e.comp = (s - e.sum) - y;
    e.sum = s;
    e.doc_count += 1;
  }

  std::optional<double> relevance(TokenId t) const {
    auto it = entries_.find(t);
    if (it == entries_.end() || it->second.doc_count == 0) return std::nullopt;
    return it->second.sum / static_cast<double>(it->second.doc_count);
  }

  std::uint64_t doc_count(TokenId t) const {
    auto it = entries_.find(t);
    return it == entries_.end() ? 0 : it->second.doc_count;
  }

  std::size_t size() const { return entries_.size(); }

  std::vector<std::pair<TokenId, double>> sorted_relevance() const {
    std::vector<std::pair<TokenId, double>> out;
    out.reserve(entries_.size());
    for (const auto& [t, e] : entries_)
      out.emplace_back(t, e.sum / static_cast<double>(e.doc_count));
    std::sort(out.begin(), out.end());
    return out;
  }

  std::uint64_t vocab_hash() const { return vocab_hash_; }
  std::uint64_t input_hash() const { return input_hash_; }
  void set_hashes(std::uint64_t vocab_hash, std::uint64_t input_hash) {
    vocab_hash_ = vocab_hash;
    input_hash_ = input_hash;
  }

  void save(const std::string& path, const Vocabulary& vocab) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write relevance file: " + path);
    out << "# wmlm-relevance v1\tvocab_hash=" << hash_hex(vocab_hash_)
        << "\tinputs=" << hash_hex(input_hash_) << "\n";
    for (const auto& [t, r] : sorted_relevance())
      out << t << '\t' << vocab.token(t) << '\t' << format_double(r) << '\t'
          << doc_count(t) << '\n';
    if (!out) throw Error("write failed: " + path);
  }

  static RelevanceTable load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError("cannot open relevance file: " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("# wmlm-relevance v1", 0) != 0)
      throw ArtifactError("not a relevance file: " + path);
    RelevanceTable table;
    auto fields = split_tabs(line);
    for (const auto& f : fields) {
      if (f.rfind("vocab_hash=", 0) == 0) table.vocab_hash_ = parse_hash_hex(f.substr(11));
      if (f.rfind("inputs=", 0) == 0) table.input_hash_ = parse_hash_hex(f.substr(7));
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      auto cols = split_tabs(line);
      if (cols.size() != 4)
        throw ArtifactError("relevance file line " + std::to_string(line_no) +
                            ": expected 4 tab-separated fields");
      Entry e;
      TokenId t;
      try {
        t = static_cast<TokenId>(std::stol(cols[0]));
        e.doc_count = std::stoull(cols[3]);
        e.sum = std::stod(cols[2]) * static_cast<double>(e.doc_count);
      } catch (const std::exception&) {
        throw ArtifactError("relevance file line " + std::to_string(line_no) + ": parse error");
      }
      table.entries_[t] = e;
    }
    return table;
  }

 private:
  struct Entry {
    double sum = 0.0;
    double comp = 0.0;
    std::uint64_t doc_count = 0;
  };
  std::unordered_map<TokenId, Entry> entries_;
  std::uint64_t vocab_hash_ = 0;
  std::uint64_t input_hash_ = 0;
};

// Folds per-document relevance in document order. Workers may compute doc
// maps concurrently, but the reduction order is fixed, so the result is
// independent of thread count.
inline RelevanceTable aggregate_relevance(const std::vector<TokenizedDoc>& docs,
                                          const PmiView& pmi, RelevanceOptions opts = {},
                                          int threads = 1) {
  RelevanceTable table;
  using DocRel = std::vector<std::pair<TokenId, double>>;
  if (threads <= 1) {
    for (const auto& doc : docs)
      for (auto [t, r] : doc_relevance(doc, pmi, opts)) table.accumulate(t, r);
    return table;
  }
  const std::size_t chunk = 256;
  for (std::size_t base = 0; base < docs.size(); base += chunk * static_cast<std::size_t>(threads)) {
    std::vector<std::future<std::vector<DocRel>>> futures;
    for (int w = 0; w < threads; ++w) {
      std::size_t lo = base + static_cast<std::size_t>(w) * chunk;
      std::size_t hi = std::min(docs.size(), lo + chunk);
      if (lo >= hi) break;
      futures.push_back(std::async(std::launch::async, [&, lo, hi] {
        std::vector<DocRel> part;
        part.reserve(hi - lo);
        for (std::size_t i = lo; i < hi; ++i) part.push_back(doc_relevance(docs[i], pmi, opts));
        return part;
      }));
    }
    for (auto& f : futures)
      for (const auto& doc_rel : f.get())
        for (auto [t, r] : doc_rel) table.accumulate(t, r);
  }
  return table;
}

}  // namespace wmlm
