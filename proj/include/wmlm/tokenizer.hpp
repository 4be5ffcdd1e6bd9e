#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "wmlm/common.hpp"
#include "wmlm/vocab.hpp"

namespace wmlm {

struct TokenizedDoc {
  std::vector<TokenId> token_ids;
  // True iff the position is a whole-word token (not a "##" continuation,
  // not one of the five specials). Parallel to token_ids.
  std::vector<std::uint8_t> whole_word_mask;

  std::size_t size() const { return token_ids.size(); }
  bool empty() const { return token_ids.empty(); }

  void push(TokenId id, bool whole_word) {
    token_ids.push_back(id);
    whole_word_mask.push_back(whole_word ? 1 : 0);
  }

  void truncate(std::size_t max_len) {
    if (token_ids.size() > max_len) {
      token_ids.resize(max_len);
      whole_word_mask.resize(max_len);
    }
  }

  bool operator==(const TokenizedDoc& other) const = default;
};

namespace detail {

inline std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Greedy longest-match wordpiece split of a single word. Appends pieces to
// doc, or a single UNK when no decomposition exists.
inline void tokenize_word(std::string_view raw, const Vocabulary& vocab, TokenizedDoc& doc) {
  // Special tokens pass through verbatim (pre-lowercase) so that probe
  // templates can spell [MASK] literally.
  if (auto id = vocab.find(raw); id && vocab.is_special(*id)) {
    doc.push(*id, false);
    return;
  }
  // Bounds the quadratic scan on pathological words.
  constexpr std::size_t kMaxWordBytes = 200;
  std::string word = lower_ascii(raw);
  if (word.size() > kMaxWordBytes) {
    doc.push(vocab.unk_id(), false);
    return;
  }
  std::vector<std::pair<TokenId, bool>> pieces;
  std::size_t start = 0;
  while (start < word.size()) {
    std::size_t end = word.size();
    bool matched = false;
    while (end > start) {
      std::string piece = word.substr(start, end - start);
      if (start > 0) piece = std::string(kSubwordPrefix) + piece;
      if (auto id = vocab.find(piece)) {
        pieces.emplace_back(*id, start == 0 && vocab.is_whole_word(*id));
        start = end;
        matched = true;
        break;
      }
      --end;
    }
    if (!matched) {
      // Whole word falls back to a single UNK; no partial emission.
      doc.push(vocab.unk_id(), false);
      return;
    }
  }
  for (auto [id, whole] : pieces) doc.push(id, whole);
}

}  // namespace detail

// Whitespace-split then greedy longest-match against the vocabulary.
// Deterministic; UNK absorbs undecomposable words.
inline TokenizedDoc tokenize(std::string_view text, const Vocabulary& vocab) {
  TokenizedDoc doc;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) detail::tokenize_word(text.substr(start, i - start), vocab, doc);
  }
  return doc;
}

// Strips "##" and joins with spaces; inverse of tokenize on in-vocabulary
// whitespace-separated words.
inline std::string detokenize(const TokenizedDoc& doc, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < doc.token_ids.size(); ++i) {
    const std::string& tok = vocab.token(doc.token_ids[i]);
    if (tok.rfind(kSubwordPrefix, 0) == 0) {
      out += tok.substr(2);
    } else {
      if (!out.empty()) out += ' ';
      out += tok;
    }
  }
  return out;
}

}  // namespace wmlm
