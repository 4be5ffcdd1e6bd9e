#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "wmlm/common.hpp"
#include "wmlm/io_util.hpp"
#include "wmlm/tokenizer.hpp"

namespace wmlm {

// Windowed word co-occurrence counts. Pairs are unordered, stored once with
// a <= b; counts are exact 64-bit. Subword and special positions occupy
// window slots (they affect distances) but never form pairs.
class CooccurrenceTable {
 public:
  explicit CooccurrenceTable(int window) : window_(window) {
    if (window < 1) throw Error("window size must be >= 1");
  }

  int window() const { return window_; }
  std::uint64_t total_pairs() const { return total_pairs_; }
  std::uint64_t docs_seen() const { return docs_seen_; }
  std::size_t distinct_pairs() const { return pairs_.size(); }

  void add_document(const TokenizedDoc& doc) {
    const std::size_t n = doc.size();
    const auto w = static_cast<std::size_t>(window_);
    for (std::size_t i = 0; i < n; ++i) {
      if (!doc.whole_word_mask[i]) continue;
      const std::size_t jmax = std::min(n, i + w + 1);
      for (std::size_t j = i + 1; j < jmax; ++j) {
        if (!doc.whole_word_mask[j]) continue;
        add_pair(doc.token_ids[i], doc.token_ids[j]);
      }
    }
    ++docs_seen_;
  }

  std::uint64_t pair_count(TokenId a, TokenId b) const {
    auto it = pairs_.find(pair_key(a, b));
    return it == pairs_.end() ? 0 : it->second;
  }

  // Number of windowed pair participations; self-pairs count twice.
  std::uint64_t marginal(TokenId t) const {
    auto it = marginals_.find(t);
    return it == marginals_.end() ? 0 : it->second;
  }

  void merge(const CooccurrenceTable& other) {
    if (other.window_ != window_) throw Error("cannot merge tables with different windows");
    for (const auto& [key, count] : other.pairs_) pairs_[key] += count;
    for (const auto& [t, count] : other.marginals_) marginals_[t] += count;
    total_pairs_ += other.total_pairs_;
    docs_seen_ += other.docs_seen_;
  }

  // Sorted (a, b, count) triples; the deterministic serialization order.
  std::vector<std::tuple<TokenId, TokenId, std::uint64_t>> sorted_pairs() const {
    std::vector<std::tuple<TokenId, TokenId, std::uint64_t>> out;
    out.reserve(pairs_.size());
    for (const auto& [key, count] : pairs_)
      out.emplace_back(static_cast<TokenId>(key >> 32),
                       static_cast<TokenId>(key & 0xffffffffULL), count);
    std::sort(out.begin(), out.end());
    return out;
  }

  std::vector<std::pair<TokenId, std::uint64_t>> sorted_marginals() const {
    std::vector<std::pair<TokenId, std::uint64_t>> out(marginals_.begin(), marginals_.end());
    std::sort(out.begin(), out.end());
    return out;
  }

  bool operator==(const CooccurrenceTable& other) const {
    return window_ == other.window_ && total_pairs_ == other.total_pairs_ &&
           docs_seen_ == other.docs_seen_ && pairs_ == other.pairs_ &&
           marginals_ == other.marginals_;
  }

  std::uint64_t vocab_hash() const { return vocab_hash_; }
  std::uint64_t input_hash() const { return input_hash_; }
  void set_hashes(std::uint64_t vocab_hash, std::uint64_t input_hash) {
    vocab_hash_ = vocab_hash;
    input_hash_ = input_hash;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write table file: " + path);
    out.write("COOC", 4);
    write_u16(out, kVersion);
    write_u16(out, static_cast<std::uint16_t>(window_));
    write_u64(out, total_pairs_);
    write_u64(out, docs_seen_);
    write_u64(out, vocab_hash_);
    write_u64(out, input_hash_);
    auto pairs = sorted_pairs();
    write_u64(out, pairs.size());
    for (const auto& [a, b, count] : pairs) {
      write_u32(out, static_cast<std::uint32_t>(a));
      write_u32(out, static_cast<std::uint32_t>(b));
      write_u64(out, count);
    }
    auto margs = sorted_marginals();
    write_u64(out, margs.size());
    for (const auto& [t, count] : margs) {
      write_u32(out, static_cast<std::uint32_t>(t));
      write_u64(out, count);
    }
    if (!out) throw Error("write failed: " + path);
  }

  static CooccurrenceTable load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError("cannot open table file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string_view(magic, 4) != "COOC")
      throw ArtifactError("not a co-occurrence table: " + path);
    std::uint16_t version = read_u16(in);
    if (version != kVersion)
      throw ArtifactError("unsupported table version " + std::to_string(version));
    CooccurrenceTable t(read_u16(in));
    t.total_pairs_ = read_u64(in);
    t.docs_seen_ = read_u64(in);
    t.vocab_hash_ = read_u64(in);
    t.input_hash_ = read_u64(in);
    std::uint64_t n_pairs = read_u64(in);
    t.pairs_.reserve(static_cast<std::size_t>(n_pairs) * 2);
    for (std::uint64_t i = 0; i < n_pairs; ++i) {
      auto a = static_cast<TokenId>(read_u32(in));
      auto b = static_cast<TokenId>(read_u32(in));
      t.pairs_[pair_key(a, b)] = read_u64(in);
    }
    std::uint64_t n_margs = read_u64(in);
    for (std::uint64_t i = 0; i < n_margs; ++i) {
      auto tok = static_cast<TokenId>(read_u32(in));
      t.marginals_[tok] = read_u64(in);
    }
    return t;
  }

 private:
  static constexpr std::uint16_t kVersion = 1;

  static std::uint64_t pair_key(TokenId a, TokenId b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
  }

  void add_pair(TokenId a, TokenId b) {
    pairs_[pair_key(a, b)] += 1;
    if (a == b) {
      marginals_[a] += 2;
    } else {
      marginals_[a] += 1;
      marginals_[b] += 1;
    }
    ++total_pairs_;
  }

  int window_;
  std::uint64_t total_pairs_ = 0;
  std::uint64_t docs_seen_ = 0;
  std::uint64_t vocab_hash_ = 0;
  std::uint64_t input_hash_ = 0;
  std::unordered_map<std::uint64_t, std::uint64_t> pairs_;
  std::unordered_map<TokenId, std::uint64_t> marginals_;
};

inline void count_document(const TokenizedDoc& doc, CooccurrenceTable& table) {
  table.add_document(doc);
}

// Sequential fold over shard-partitioned docs (doc i -> shard i mod shards),
// merged in shard order. Counts are exact integers, so the result is
// independent of shard count and document order. With threads > 1 the shard
// tables are built concurrently.
inline CooccurrenceTable count_corpus(const std::vector<TokenizedDoc>& docs, int window,
                                      int shards = 1, std::uint64_t max_distinct_pairs = 0,
                                      int threads = 1) {
  if (shards < 1) throw Error("shards must be >= 1");
  std::vector<CooccurrenceTable> parts;
  parts.reserve(static_cast<std::size_t>(shards));
  for (int s = 0; s < shards; ++s) parts.emplace_back(window);

  auto run_shard = [&](int s) {
    for (std::size_t i = static_cast<std::size_t>(s); i < docs.size();
         i += static_cast<std::size_t>(shards))
      parts[static_cast<std::size_t>(s)].add_document(docs[i]);
  };

  if (threads > 1 && shards > 1) {
    std::vector<std::thread> pool;
    for (int s = 0; s < shards; ++s) pool.emplace_back(run_shard, s);
    for (auto& th : pool) th.join();
  } else {
    for (int s = 0; s < shards; ++s) run_shard(s);
  }

  CooccurrenceTable table(window);
  for (const auto& part : parts) table.merge(part);
  if (max_distinct_pairs > 0 && table.distinct_pairs() > max_distinct_pairs)
    throw Error("co-occurrence memory budget exceeded: " +
                std::to_string(table.distinct_pairs()) + " distinct pairs (cap " +
                std::to_string(max_distinct_pairs) + ")");
  return table;
}

// Streaming variant: pulls docs from a source callable `bool(TokenizedDoc&)`
// one at a time; memory is bounded by the distinct-pair cardinality.
template <typename DocSource>
CooccurrenceTable count_corpus_stream(DocSource&& source, int window,
                                      std::uint64_t max_distinct_pairs = 0) {
  CooccurrenceTable table(window);
  TokenizedDoc doc;
  std::uint64_t since_check = 0;
  while (source(doc)) {
    table.add_document(doc);
    if (max_distinct_pairs > 0 && ++since_check >= 1024) {
      since_check = 0;
      if (table.distinct_pairs() > max_distinct_pairs)
        throw Error("co-occurrence memory budget exceeded: " +
                    std::to_string(table.distinct_pairs()) + " distinct pairs (cap " +
                    std::to_string(max_distinct_pairs) + ")");
    }
  }
  if (max_distinct_pairs > 0 && table.distinct_pairs() > max_distinct_pairs)
    throw Error("co-occurrence memory budget exceeded: " +
                std::to_string(table.distinct_pairs()) + " distinct pairs (cap " +
                std::to_string(max_distinct_pairs) + ")");
  return table;
}

}  // namespace wmlm
