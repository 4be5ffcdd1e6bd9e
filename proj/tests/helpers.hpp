#pragma once

// Shared fixtures for the test suite: scratch directories, synthetic documents,
// and small file helpers.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "wmlm/rng.hpp"
#include "wmlm/tokenizer.hpp"
#include "wmlm/vocab.hpp"

namespace testutil {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("wmlm_test_" + tag + "_" + std::to_string(wmlm::rng_u64(
                                            std::random_device{}(), 0, 0, 0, 0) &
                                        0xffffff));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline void spit(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

// A document of random ids drawn from [first_id, first_id + n_ids), all marked
// whole-word. Token ids here are synthetic; no vocabulary needed.
inline wmlm::TokenizedDoc random_doc(std::uint64_t seed, std::uint64_t index, std::size_t len,
                                     wmlm::TokenId first_id, std::size_t n_ids) {
  wmlm::TokenizedDoc doc;
  for (std::size_t i = 0; i < len; ++i) {
    doc.token_ids.push_back(first_id + static_cast<wmlm::TokenId>(
                                           wmlm::rng_u64(seed, index, i, 0, 0) % n_ids));
    doc.whole_word_mask.push_back(true);
  }
  return doc;
}

// As above, but roughly one position in four is flagged non-whole-word to
// exercise subword exclusion paths.
inline wmlm::TokenizedDoc random_mixed_doc(std::uint64_t seed, std::uint64_t index,
                                           std::size_t len, wmlm::TokenId first_id,
                                           std::size_t n_ids) {
  wmlm::TokenizedDoc doc = random_doc(seed, index, len, first_id, n_ids);
  for (std::size_t i = 0; i < len; ++i)
    if (wmlm::rng_u64(seed, index, i, 1, 0) % 4 == 0) doc.whole_word_mask[i] = false;
  return doc;
}

inline std::vector<wmlm::TokenizedDoc> random_corpus(std::uint64_t seed, std::size_t n_docs,
                                                     std::size_t len, wmlm::TokenId first_id,
                                                     std::size_t n_ids) {
  std::vector<wmlm::TokenizedDoc> docs;
  for (std::size_t d = 0; d < n_docs; ++d)
    docs.push_back(random_doc(seed, d, len, first_id, n_ids));
  return docs;
}

// Minimal well-formed vocabulary: the five specials plus the given words.
inline std::vector<std::string> vocab_lines(const std::vector<std::string>& words) {
  std::vector<std::string> lines = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  lines.insert(lines.end(), words.begin(), words.end());
  return lines;
}

inline std::string write_vocab(const TempDir& dir, const std::string& name,
                               const std::vector<std::string>& words) {
  std::ofstream out(dir.file(name), std::ios::binary);
  for (const auto& line : vocab_lines(words)) out << line << "\n";
  out.close();
  return dir.file(name);
}

}  // namespace testutil
