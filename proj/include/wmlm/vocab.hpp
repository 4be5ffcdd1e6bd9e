#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "wmlm/common.hpp"
#include "wmlm/hash.hpp"

namespace wmlm {

// Fixed token inventory. Ids are dense 0..|V|-1 in file line order; the five
// special tokens must be present and are never subwords.
class Vocabulary {
 public:
  static Vocabulary load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open vocabulary file: " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      tokens.push_back(line);
    }
    return from_tokens(std::move(tokens));
  }

  static Vocabulary from_tokens(std::vector<std::string> tokens) {
    Vocabulary v;
    v.tokens_ = std::move(tokens);
    v.index_.reserve(v.tokens_.size() * 2);
    Fnv1a h;
    for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
      const std::string& tok = v.tokens_[i];
      auto [it, inserted] = v.index_.emplace(tok, static_cast<TokenId>(i));
      if (!inserted) throw Error("duplicate token in vocabulary: \"" + tok + "\"");
      h.update(tok);
      h.update("\n");
    }
    v.hash_ = h.digest();
    v.pad_id_ = v.require_special(kPadToken);
    v.unk_id_ = v.require_special(kUnkToken);
    v.cls_id_ = v.require_special(kClsToken);
    v.sep_id_ = v.require_special(kSepToken);
    v.mask_id_ = v.require_special(kMaskToken);
    v.subword_.resize(v.tokens_.size());
    for (std::size_t i = 0; i < v.tokens_.size(); ++i)
      v.subword_[i] = v.tokens_[i].rfind(kSubwordPrefix, 0) == 0 ? 1 : 0;
    for (TokenId special : {v.pad_id_, v.unk_id_, v.cls_id_, v.sep_id_, v.mask_id_})
      if (v.subword_[static_cast<std::size_t>(special)])
        throw Error("special token flagged as subword");
    v.non_special_.reserve(v.tokens_.size());
    for (TokenId t = 0; t < static_cast<TokenId>(v.tokens_.size()); ++t)
      if (!v.is_special(t)) v.non_special_.push_back(t);
    return v;
  }

  std::size_t size() const { return tokens_.size(); }

  const std::string& token(TokenId id) const { return tokens_[static_cast<std::size_t>(id)]; }

  std::optional<TokenId> find(std::string_view tok) const {
    auto it = index_.find(std::string(tok));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool is_subword(TokenId id) const { return subword_[static_cast<std::size_t>(id)] != 0; }

  bool is_special(TokenId id) const {
    return id == pad_id_ || id == unk_id_ || id == cls_id_ || id == sep_id_ || id == mask_id_;
  }

  bool is_whole_word(TokenId id) const { return !is_subword(id) && !is_special(id); }

  TokenId pad_id() const { return pad_id_; }
  TokenId unk_id() const { return unk_id_; }
  TokenId cls_id() const { return cls_id_; }
  TokenId sep_id() const { return sep_id_; }
  TokenId mask_id() const { return mask_id_; }

  // Candidates for the 10% random replacement.
  const std::vector<TokenId>& non_special_ids() const { return non_special_; }

  // Content hash over the ordered token list; artifacts record it so a
  // downstream stage can detect a vocabulary swap.
  std::uint64_t content_hash() const { return hash_; }

 private:
  TokenId require_special(const char* tok) const {
    auto it = index_.find(tok);
    if (it == index_.end())
      throw Error(std::string("vocabulary is missing special token ") + tok);
    return it->second;
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::vector<std::uint8_t> subword_;
  std::vector<TokenId> non_special_;
  TokenId pad_id_ = 0, unk_id_ = 0, cls_id_ = 0, sep_id_ = 0, mask_id_ = 0;
  std::uint64_t hash_ = 0;
};

}  // namespace wmlm
