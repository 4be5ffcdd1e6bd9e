#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "wmlm/common.hpp"
#include "wmlm/io_util.hpp"
#include "wmlm/tokenizer.hpp"
#include "wmlm/vocab.hpp"

namespace wmlm {

// One document per line, streamed. Holds a single line at a time, so peak
// memory is bounded by max_len regardless of corpus size. Single consumer;
// shard by file upstream for parallel ingestion.
class CorpusStream {
 public:
  CorpusStream(const std::string& path, const Vocabulary& vocab, std::size_t max_len)
      : in_(path, std::ios::binary), vocab_(&vocab), max_len_(max_len) {
    if (!in_) throw Error("cannot open corpus file: " + path);
  }

  // Yields the next tokenized doc, truncated to max_len. Returns false at EOF.
  bool next(TokenizedDoc& out) {
    std::string line;
    while (std::getline(in_, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!valid_utf8(line)) {
        ++lines_skipped_;
        continue;
      }
      out = tokenize(line, *vocab_);
      out.truncate(max_len_);
      ++docs_yielded_;
      return true;
    }
    return false;
  }

  std::uint64_t docs_yielded() const { return docs_yielded_; }
  std::uint64_t lines_skipped() const { return lines_skipped_; }

 private:
  std::ifstream in_;
  const Vocabulary* vocab_;
  std::size_t max_len_;
  std::uint64_t docs_yielded_ = 0;
  std::uint64_t lines_skipped_ = 0;
};

// Materializes a whole corpus; test- and desk-scale convenience.
inline std::vector<TokenizedDoc> read_corpus(const std::string& path, const Vocabulary& vocab,
                                             std::size_t max_len) {
  CorpusStream stream(path, vocab, max_len);
  std::vector<TokenizedDoc> docs;
  TokenizedDoc doc;
  while (stream.next(doc)) docs.push_back(std::move(doc));
  return docs;
}

}  // namespace wmlm
