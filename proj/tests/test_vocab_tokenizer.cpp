#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "wmlm/tokenizer.hpp"
#include "wmlm/vocab.hpp"

using namespace wmlm;
using testutil::TempDir;

namespace {

Vocabulary basic_vocab() {
  return Vocabulary::from_tokens(testutil::vocab_lines(
      {"run", "##ning", "fast", "the", "cat", "##s", "a"}));
}

}  // namespace

TEST_CASE("vocabulary exposes tokens, ids, and flags") {
  const Vocabulary v = basic_vocab();
  REQUIRE(v.size() == 12);
  REQUIRE(v.find("run").has_value());
  REQUIRE(v.token(*v.find("run")) == "run");
  REQUIRE_FALSE(v.find("missing").has_value());

  REQUIRE(v.is_special(v.pad_id()));
  REQUIRE(v.is_special(v.mask_id()));
  REQUIRE_FALSE(v.is_special(*v.find("run")));

  REQUIRE(v.is_subword(*v.find("##ning")));
  REQUIRE_FALSE(v.is_subword(*v.find("run")));

  REQUIRE(v.is_whole_word(*v.find("run")));
  REQUIRE_FALSE(v.is_whole_word(*v.find("##ning")));
  REQUIRE_FALSE(v.is_whole_word(v.mask_id()));

  for (TokenId t : v.non_special_ids()) REQUIRE_FALSE(v.is_special(t));
  REQUIRE(v.non_special_ids().size() == v.size() - 5);
}

TEST_CASE("duplicate vocabulary entries are rejected") {
  auto lines = testutil::vocab_lines({"cat", "dog", "cat"});
  REQUIRE_THROWS_AS(Vocabulary::from_tokens(lines), Error);
}

TEST_CASE("missing special tokens are rejected") {
  std::vector<std::string> lines = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "cat"};
  REQUIRE_THROWS_AS(Vocabulary::from_tokens(lines), Error);
}

TEST_CASE("vocabulary load strips carriage returns and preserves order") {
  TempDir dir("vocab_crlf");
  testutil::spit(dir.file("v.txt"), "[PAD]\r\n[UNK]\r\n[CLS]\r\n[SEP]\r\n[MASK]\r\ncat\r\ndog\r\n");
  const Vocabulary v = Vocabulary::load(dir.file("v.txt"));
  REQUIRE(v.size() == 7);
  REQUIRE(*v.find("cat") == 5);
  REQUIRE(*v.find("dog") == 6);
}

TEST_CASE("vocabulary content hash tracks content, not file identity") {
  TempDir dir("vocab_hash");
  const auto p1 = testutil::write_vocab(dir, "a.txt", {"cat", "dog"});
  const auto p2 = testutil::write_vocab(dir, "b.txt", {"cat", "dog"});
  const auto p3 = testutil::write_vocab(dir, "c.txt", {"dog", "cat"});
  REQUIRE(Vocabulary::load(p1).content_hash() == Vocabulary::load(p2).content_hash());
  REQUIRE(Vocabulary::load(p1).content_hash() != Vocabulary::load(p3).content_hash());
}

TEST_CASE("greedy longest-prefix tokenization splits words into subwords") {
  const Vocabulary v = basic_vocab();
  const TokenizedDoc doc = tokenize("running fast", v);
  REQUIRE(doc.token_ids == std::vector<TokenId>{*v.find("run"), *v.find("##ning"),
                                                *v.find("fast")});
  REQUIRE(doc.whole_word_mask == std::vector<std::uint8_t>{1, 0, 1});
}

TEST_CASE("tokenizer handles empty and whitespace-only input") {
  const Vocabulary v = basic_vocab();
  REQUIRE(tokenize("", v).empty());
  REQUIRE(tokenize("   \t  ", v).empty());
}

TEST_CASE("words with no decomposition become a single UNK") {
  const Vocabulary v = basic_vocab();
  const TokenizedDoc doc = tokenize("zzzqqq", v);
  REQUIRE(doc.token_ids == std::vector<TokenId>{v.unk_id()});
  REQUIRE(doc.whole_word_mask == std::vector<std::uint8_t>{0});
}

TEST_CASE("a word that decomposes only partially becomes UNK, not a partial emit") {
  // "runz": "run" matches but "z" has no "##z" continuation, so the whole
  // word falls back to UNK rather than emitting the prefix.
  const Vocabulary v = basic_vocab();
  const TokenizedDoc doc = tokenize("runz", v);
  REQUIRE(doc.token_ids == std::vector<TokenId>{v.unk_id()});
}

TEST_CASE("overlong words map to UNK") {
  const Vocabulary v = basic_vocab();
  const std::string word(300, 'a');
  const TokenizedDoc doc = tokenize(word, v);
  REQUIRE(doc.token_ids == std::vector<TokenId>{v.unk_id()});
}

TEST_CASE("special token literals in text map to their ids verbatim") {
  const Vocabulary v = basic_vocab();
  const TokenizedDoc doc = tokenize("the [MASK] cat", v);
  REQUIRE(doc.token_ids == std::vector<TokenId>{*v.find("the"), v.mask_id(), *v.find("cat")});
  REQUIRE(doc.whole_word_mask == std::vector<std::uint8_t>{1, 0, 1});
}

TEST_CASE("text is lowercased before lookup") {
  const Vocabulary v = basic_vocab();
  const TokenizedDoc doc = tokenize("The CAT", v);
  REQUIRE(doc.token_ids == std::vector<TokenId>{*v.find("the"), *v.find("cat")});
}

TEST_CASE("detokenize joins subwords back into words") {
  const Vocabulary v = basic_vocab();
  REQUIRE(detokenize(tokenize("running fast", v), v) == "running fast");
  REQUIRE(detokenize(tokenize("the cats", v), v) == "the cats");
}

TEST_CASE("tokenization is deterministic") {
  const Vocabulary v = basic_vocab();
  const std::string text = "the cat runs fast running cats a [MASK]";
  REQUIRE(tokenize(text, v) == tokenize(text, v));
}
