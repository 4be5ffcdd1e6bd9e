#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "wmlm/common.hpp"
#include "wmlm/corpus.hpp"
#include "wmlm/rng.hpp"
#include "wmlm/tokenizer.hpp"
#include "wmlm/vocab.hpp"

namespace wmlm {

inline std::vector<std::string> numbered_tokens(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%03zu", prefix.c_str(), i);
    out.emplace_back(buf);
  }
  return out;
}

// Specials first, then the given word list, as a ready-to-use vocabulary.
inline Vocabulary make_vocab(const std::vector<std::string>& words) {
  std::vector<std::string> tokens = {std::string(kPadToken), std::string(kUnkToken),
                                     std::string(kClsToken), std::string(kSepToken),
                                     std::string(kMaskToken)};
  tokens.insert(tokens.end(), words.begin(), words.end());
  return Vocabulary::from_tokens(tokens);
}

// Documents of i.i.d. uniform draws from the word list; the null corpus for
// association statistics.
inline std::vector<std::string> uniform_corpus_lines(std::size_t n_docs, std::size_t doc_len,
                                                     const std::vector<std::string>& words,
                                                     std::uint64_t seed) {
  if (words.empty()) throw Error("uniform corpus needs a non-empty word list");
  std::vector<std::string> lines;
  lines.reserve(n_docs);
  for (std::size_t d = 0; d < n_docs; ++d) {
    std::string line;
    for (std::size_t i = 0; i < doc_len; ++i) {
      const std::uint64_t h = rng_u64(seed, d, i, 0, 0);
      if (i) line += ' ';
      line += words[h % words.size()];
    }
    lines.push_back(std::move(line));
  }
  return lines;
}

// Factual-template corpus: each document is one (subject, relation, object)
// triple embedded in a fixed budget of i.i.d. stopwords, so entities are rare
// and strongly associated while stopwords co-occur with everything at chance.
struct FactCorpusSpec {
  std::size_t n_facts = 24;
  std::size_t n_relations = 3;
  std::size_t n_stopwords = 30;
  std::size_t docs_per_fact = 20;
  std::size_t context_len = 9;  // stopwords per document
  std::uint64_t seed = 1;
};

struct FactCorpus {
  std::vector<std::string> words;  // vocabulary body: stopwords, relations, entities
  std::vector<std::string> doc_lines;
  std::vector<std::string> probe_lines;  // template \t gold \t relation \t domain
  std::vector<std::string> stopwords;
  std::vector<std::string> entities;  // subjects and objects
};

inline FactCorpus make_fact_corpus(const FactCorpusSpec& spec) {
  if (spec.n_facts == 0 || spec.n_relations == 0 || spec.n_stopwords == 0)
    throw Error("fact corpus needs facts, relations, and stopwords");
  FactCorpus out;
  out.stopwords = numbered_tokens("s", spec.n_stopwords);
  const std::vector<std::string> relations = numbered_tokens("rel", spec.n_relations);
  const std::vector<std::string> subjects = numbered_tokens("subj", spec.n_facts);
  const std::vector<std::string> objects = numbered_tokens("obj", spec.n_facts);

  out.words = out.stopwords;
  out.words.insert(out.words.end(), relations.begin(), relations.end());
  out.words.insert(out.words.end(), subjects.begin(), subjects.end());
  out.words.insert(out.words.end(), objects.begin(), objects.end());
  out.entities = subjects;
  out.entities.insert(out.entities.end(), objects.begin(), objects.end());

  const std::size_t n_docs = spec.n_facts * spec.docs_per_fact;
  out.doc_lines.reserve(n_docs);
  for (std::size_t d = 0; d < n_docs; ++d) {
    const std::size_t fact = d % spec.n_facts;
    const std::size_t rel = fact % spec.n_relations;
    const std::size_t prefix = rng_u64(spec.seed, d, 0, 1, 0) % (spec.context_len + 1);
    std::string line;
    auto append = [&line](const std::string& w) {
      if (!line.empty()) line += ' ';
      line += w;
    };
    for (std::size_t i = 0; i < spec.context_len; ++i) {
      if (i == prefix) {
        append(subjects[fact]);
        append(relations[rel]);
        append(objects[fact]);
      }
      append(out.stopwords[rng_u64(spec.seed, d, i, 2, 0) % spec.n_stopwords]);
    }
    if (prefix == spec.context_len) {
      append(subjects[fact]);
      append(relations[rel]);
      append(objects[fact]);
    }
    out.doc_lines.push_back(std::move(line));
  }

  out.probe_lines.reserve(spec.n_facts);
  for (std::size_t fact = 0; fact < spec.n_facts; ++fact) {
    const std::size_t rel = fact % spec.n_relations;
    out.probe_lines.push_back(subjects[fact] + " " + relations[rel] + " " +
                              std::string(kMaskToken) + "\t" + objects[fact] + "\t" +
                              relations[rel] + "\tfacts");
  }
  return out;
}

inline void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write: " + path);
  for (const auto& line : lines) out << line << '\n';
  if (!out) throw Error("write failed: " + path);
}

inline void write_vocab_file(const std::string& path, const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write: " + path);
  for (std::size_t i = 0; i < vocab.size(); ++i)
    out << vocab.token(static_cast<TokenId>(i)) << '\n';
  if (!out) throw Error("write failed: " + path);
}

inline std::vector<TokenizedDoc> tokenize_lines(const std::vector<std::string>& lines,
                                                const Vocabulary& vocab) {
  std::vector<TokenizedDoc> docs;
  docs.reserve(lines.size());
  for (const auto& line : lines) docs.push_back(tokenize(line, vocab));
  return docs;
}

}  // namespace wmlm
