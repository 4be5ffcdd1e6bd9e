#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "wmlm/synth.hpp"

namespace fs = std::filesystem;
using namespace wmlm;

namespace {

int run(int argc, char** argv) {
  CLI::App app{"synthetic corpus generator for the wmlm pipeline"};
  app.require_subcommand(1);

  std::string out_dir;
  app.add_option("--out-dir", out_dir, "directory for vocab.txt / corpus.txt / probes.tsv")
      ->required();

  CLI::App* cmd_facts = app.add_subcommand(
      "facts", "factual-template corpus: one (subject, relation, object) triple per "
               "document, padded with stopwords");
  FactCorpusSpec spec;
  cmd_facts->add_option("--facts", spec.n_facts, "number of distinct triples");
  cmd_facts->add_option("--relations", spec.n_relations, "number of relation tokens");
  cmd_facts->add_option("--stopwords", spec.n_stopwords, "stopword vocabulary size");
  cmd_facts->add_option("--docs-per-fact", spec.docs_per_fact, "documents per triple");
  cmd_facts->add_option("--context", spec.context_len, "stopwords per document");
  cmd_facts->add_option("--seed", spec.seed, "generator seed");

  CLI::App* cmd_uniform = app.add_subcommand(
      "uniform", "i.i.d. uniform token draws; the null corpus for association statistics");
  std::size_t n_words = 20, n_docs = 2000, doc_len = 50;
  std::uint64_t uniform_seed = 1;
  cmd_uniform->add_option("--words", n_words, "word vocabulary size");
  cmd_uniform->add_option("--docs", n_docs, "number of documents");
  cmd_uniform->add_option("--doc-len", doc_len, "tokens per document");
  cmd_uniform->add_option("--seed", uniform_seed, "generator seed");

  for (CLI::App* sub : {cmd_facts, cmd_uniform}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  fs::create_directories(out_dir);
  const std::string vocab_path = out_dir + "/vocab.txt";
  const std::string corpus_path = out_dir + "/corpus.txt";

  if (cmd_facts->parsed()) {
    const FactCorpus corpus = make_fact_corpus(spec);
    write_vocab_file(vocab_path, make_vocab(corpus.words));
    write_lines(corpus_path, corpus.doc_lines);
    const std::string probe_path = out_dir + "/probes.tsv";
    write_lines(probe_path, corpus.probe_lines);
    std::cout << "facts: " << corpus.doc_lines.size() << " documents, "
              << corpus.words.size() << " word types, " << corpus.probe_lines.size()
              << " probes -> " << out_dir << "\n";
    return 0;
  }

  const std::vector<std::string> words = numbered_tokens("w", n_words);
  write_vocab_file(vocab_path, make_vocab(words));
  write_lines(corpus_path, uniform_corpus_lines(n_docs, doc_len, words, uniform_seed));
  std::cout << "uniform: " << n_docs << " documents of " << doc_len << " tokens over "
            << n_words << " words -> " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
