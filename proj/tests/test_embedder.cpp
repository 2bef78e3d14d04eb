#include <gtest/gtest.h>

#include <sstream>

#include "piie/corpus.hpp"
#include "piie/embedder.hpp"
#include "piie/vocab.hpp"

using namespace piie;

namespace {

EmbeddingTable load(const std::string& text, const Vocab& vocab, std::size_t dim, std::uint64_t seed = 1) {
  std::istringstream in(text);
  Rng rng(seed);
  return load_pretrained(in, "vectors.txt", vocab, dim, rng);
}

std::vector<int> char_ids(const Vocab& v, std::string_view form) {
  std::vector<int> out;
  for (auto c : char_codes(form)) out.push_back(v.char_index(c));
  return out;
}

Sentence sentence(std::initializer_list<const char*> words) {
  std::vector<RawToken> raw;
  for (const char* w : words) raw.push_back({w, 0, TagScheme::outside});
  return normalize_sentence("s", raw);
}

const Vocab& small_vocab() {
  static const Vocab v({"john", "city", "lives", "in"}, {'j', 'o', 'h', 'n', 'c', 'i', 't', 'y', 'l', 'v', 'e', 's'});
  return v;
}

}  // namespace

TEST(Pretrained, RowsCopiedExactly) {
  const auto t = load("john 1 0\ncity 0 1\n", small_vocab(), 2);
  EXPECT_EQ(t.pretrained_hits, 2u);
  const auto john = static_cast<std::size_t>(small_vocab().token_index("john"));
  const auto city = static_cast<std::size_t>(small_vocab().token_index("city"));
  EXPECT_EQ(t.matrix.row(john), Tensor::matrix({{1, 0}}).row(0));
  EXPECT_EQ(t.matrix.row(city), Tensor::matrix({{0, 1}}).row(0));
  EXPECT_TRUE(t.from_pretrained[john]);
  EXPECT_FALSE(t.from_pretrained[static_cast<std::size_t>(Vocab::unk)]);
}

TEST(Pretrained, MissingTokenKeepsRandomTrainableRow) {
  const auto t = load("john 1 0\n", small_vocab(), 2);
  const auto lives = static_cast<std::size_t>(small_vocab().token_index("lives"));
  EXPECT_FALSE(t.from_pretrained[lives]);
  EXPECT_TRUE(t.matrix(lives, 0) != 0.0 || t.matrix(lives, 1) != 0.0);
  EXPECT_EQ(t.matrix(Vocab::pad, 0), 0.0);
  EXPECT_EQ(t.matrix(Vocab::pad, 1), 0.0);
}

TEST(Pretrained, FileTokensOutsideVocabularyIgnored) {
  const auto t = load("zebra 5 5\njohn 1 0\n", small_vocab(), 2);
  EXPECT_EQ(t.pretrained_hits, 1u);
}

TEST(Pretrained, WrongWidthCitesLine) {
  try {
    load("john 1 0\ncity 0 1 2\n", small_vocab(), 2);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("vectors.txt:2"), std::string::npos) << e.what();
  }
}

TEST(Pretrained, UnreadableNumberIsFormatError) {
  EXPECT_THROW(load("john 1 abc\n", small_vocab(), 2), FormatError);
  EXPECT_THROW(load("john 1 nan\n", small_vocab(), 2), FormatError);
}

TEST(Pretrained, MissingFileIsFormatError) {
  Rng rng(1);
  EXPECT_THROW(load_pretrained("/nonexistent/vectors.txt", small_vocab(), 2, rng), FormatError);
}

TEST(CharEncoder, OutputWidthIsTwiceHidden) {
  ParameterStore store;
  Rng rng(2);
  CharEncoder enc(store, "char", small_vocab().char_count(), 8, 25, rng);
  const auto out = enc.encode({char_ids(small_vocab(), "john"), char_ids(small_vocab(), "c")});
  EXPECT_EQ(out.rows(), 2u);
  EXPECT_EQ(out.cols(), 50u);
}

TEST(CharEncoder, OrderMatters) {
  ParameterStore store;
  Rng rng(3);
  const Vocab v({}, {'a', 'b', 'c'});
  CharEncoder enc(store, "char", v.char_count(), 6, 5, rng);
  const Tensor abc = enc.encode_one(char_ids(v, "abc")).data();
  const Tensor cba = enc.encode_one(char_ids(v, "cba")).data();
  EXPECT_GT(max_abs_diff(abc, cba), 1e-6);
}

TEST(CharEncoder, BatchingDoesNotChangeRows) {
  ParameterStore store;
  Rng rng(4);
  CharEncoder enc(store, "char", small_vocab().char_count(), 6, 5, rng);
  const auto a = char_ids(small_vocab(), "lives");
  const auto b = char_ids(small_vocab(), "in");
  const Tensor both = enc.encode({a, b}).data();
  EXPECT_LT(max_abs_diff(both.row(0), enc.encode_one(a).data().row(0)), 1e-15);
  EXPECT_LT(max_abs_diff(both.row(1), enc.encode_one(b).data().row(0)), 1e-15);
}

TEST(CharEncoder, EmptySequenceIsContractError) {
  ParameterStore store;
  Rng rng(5);
  CharEncoder enc(store, "char", 4, 3, 2, rng);
  EXPECT_THROW(enc.encode({{}}), ContractError);
}

TEST(Embedder, RepresentShape) {
  ParameterStore store;
  Rng rng(6);
  Embedder emb(store, EmbedderConfig{50, 25, 25, false}, small_vocab(), rng);
  const auto s = sentence({"John", "lives", "in", "city"});
  const auto out = emb.represent(encode_tokens(s, small_vocab()));
  EXPECT_EQ(out.rows(), 4u);
  EXPECT_EQ(out.cols(), 100u);
  EXPECT_EQ(emb.output_dim(), 100u);
}

TEST(Embedder, IdenticalFormsGiveIdenticalRows) {
  ParameterStore store;
  Rng rng(7);
  Embedder emb(store, EmbedderConfig{6, 4, 3, false}, small_vocab(), rng);
  const auto out = emb.represent(encode_tokens(sentence({"john", "in", "JOHN"}), small_vocab())).data();
  EXPECT_EQ(out.row(0), out.row(2));
}

TEST(Embedder, OovUsesUnkRow) {
  ParameterStore store;
  Rng rng(8);
  const EmbedderConfig cfg{6, 4, 3, false};
  Embedder emb(store, cfg, small_vocab(), rng);
  const auto ids = encode_tokens(sentence({"zebra"}), small_vocab());
  ASSERT_EQ(ids.words[0], Vocab::unk);
  const auto out = emb.represent(ids).data();
  const Tensor& table = store.at("word-emb.table").value.data();
  for (std::size_t j = 0; j < cfg.word_dim; ++j) EXPECT_EQ(out(0, j), table(Vocab::unk, j));
}

TEST(Embedder, PadRowStaysZeroAndGetsNoGradient) {
  ParameterStore store;
  Rng rng(9);
  Embedder emb(store, EmbedderConfig{5, 3, 2, false}, small_vocab(), rng);
  TokenIds ids = encode_tokens(sentence({"john", "city"}), small_vocab());
  ids.words.push_back(Vocab::pad);
  ids.chars.push_back(char_ids(small_vocab(), "c"));
  backward(sum(emb.represent(ids)));
  const auto& table = store.at("word-emb.table").value;
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_EQ(table.data()(Vocab::pad, j), 0.0);
    EXPECT_EQ(table.grad()(Vocab::pad, j), 0.0);
  }
}

TEST(Embedder, FrozenPretrainedRowsGetNoGradient) {
  const auto table = load("john 1 0 0 0\n", small_vocab(), 4);
  ParameterStore store;
  Rng rng(10);
  Embedder emb(store, EmbedderConfig{4, 3, 2, true}, small_vocab(), rng, &table);
  backward(sum(emb.represent(encode_tokens(sentence({"john", "city"}), small_vocab()))));
  const auto& g = store.at("word-emb.table").value.grad();
  const auto john = static_cast<std::size_t>(small_vocab().token_index("john"));
  const auto city = static_cast<std::size_t>(small_vocab().token_index("city"));
  EXPECT_EQ(g(john, 0), 0.0);
  EXPECT_NE(g(city, 0), 0.0);
}

TEST(Embedder, TableShapeMismatchIsDimensionError) {
  const auto table = load("", small_vocab(), 3);
  ParameterStore store;
  Rng rng(11);
  EXPECT_THROW(Embedder(store, EmbedderConfig{4, 3, 2, false}, small_vocab(), rng, &table), DimensionError);
}

TEST(Embedder, EmptySentenceIsContractError) {
  ParameterStore store;
  Rng rng(12);
  Embedder emb(store, EmbedderConfig{4, 3, 2, false}, small_vocab(), rng);
  EXPECT_THROW(emb.represent(TokenIds{}), ContractError);
}
