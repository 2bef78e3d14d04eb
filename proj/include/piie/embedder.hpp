#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "piie/autodiff.hpp"
#include "piie/corpus.hpp"
#include "piie/errors.hpp"
#include "piie/lstm.hpp"
#include "piie/parameter.hpp"
#include "piie/vocab.hpp"

namespace piie {

struct EmbedderConfig {
  std::size_t word_dim = 50;
  std::size_t char_dim = 25;
  std::size_t char_hidden = 25;
  bool freeze_pretrained = false;
};

// Word-embedding matrix plus which rows came from a pretrained file.
struct EmbeddingTable {
  Tensor matrix;  // [|vocab| x d_w]
  std::size_t pretrained_hits = 0;
  std::vector<std::uint8_t> from_pretrained;  // per row
};

inline EmbeddingTable random_embedding_table(std::size_t rows, std::size_t dim, Rng& rng) {
  EmbeddingTable t;
  t.matrix = xavier_uniform(rows, dim, rng);
  for (std::size_t j = 0; j < dim; ++j) t.matrix(Vocab::pad, j) = 0.0;
  t.from_pretrained.assign(rows, 0);
  return t;
}

// Text format: one entry per line, the token then d_w space-separated reals.
// Vocabulary rows found in the file are copied verbatim; the rest (including
// UNK) stay randomly initialized and PAD stays zero.
inline EmbeddingTable load_pretrained(std::istream& in, const std::string& source, const Vocab& vocab,
                                      std::size_t dim, Rng& rng) {
  EmbeddingTable table = random_embedding_table(vocab.token_count(), dim, rng);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream is(line);
    std::string token;
    is >> token;
    std::vector<double> values;
    std::string field;
    while (is >> field) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(field, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != field.size() || !std::isfinite(v))
        throw FormatError(source + ":" + std::to_string(line_no) + ": bad number '" + field + "'");
      values.push_back(v);
    }
    if (values.size() != dim)
      throw FormatError(source + ":" + std::to_string(line_no) + ": vector width " + std::to_string(values.size()) +
                        ", expected " + std::to_string(dim));
    if (!vocab.contains(token)) continue;
    const auto row = static_cast<std::size_t>(vocab.token_index(token));
    if (table.from_pretrained[row]) continue;
    for (std::size_t j = 0; j < dim; ++j) table.matrix(row, j) = values[j];
    table.from_pretrained[row] = 1;
    ++table.pretrained_hits;
  }
  return table;
}

inline EmbeddingTable load_pretrained(const std::string& path, const Vocab& vocab, std::size_t dim, Rng& rng) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open embedding file '" + path + "'");
  return load_pretrained(in, path, vocab, dim, rng);
}

// Vocabulary indices for one sentence.
struct TokenIds {
  std::vector<int> words;
  std::vector<std::vector<int>> chars;
};

inline TokenIds encode_tokens(const Sentence& s, const Vocab& vocab) {
  TokenIds ids;
  ids.words.reserve(s.size());
  ids.chars.reserve(s.size());
  for (const auto& t : s.tokens) {
    ids.words.push_back(vocab.token_index(t.form));
    std::vector<int> cs;
    cs.reserve(t.chars.size());
    for (auto c : t.chars) cs.push_back(vocab.char_index(c));
    ids.chars.push_back(std::move(cs));
  }
  return ids;
}

// Character-level bidirectional LSTM. All tokens of a sentence run as one
// batch; each token's output is [final forward hidden | final backward hidden].
class CharEncoder {
 public:
  CharEncoder() = default;
  CharEncoder(ParameterStore& store, const std::string& prefix, std::size_t n_chars, std::size_t char_dim,
              std::size_t hidden, Rng& rng) {
    Tensor emb = xavier_uniform(n_chars, char_dim, rng);
    for (std::size_t j = 0; j < char_dim; ++j) emb(Vocab::pad, j) = 0.0;
    table_ = store.add(prefix + ".emb", std::move(emb));
    fwd_ = LstmCell(store, prefix + ".fwd", char_dim, hidden, rng);
    bwd_ = LstmCell(store, prefix + ".bwd", char_dim, hidden, rng);
  }

  std::size_t output_dim() const { return 2 * fwd_.hidden(); }

  Value encode(const std::vector<std::vector<int>>& tokens) const {
    const std::size_t batch = tokens.size();
    std::size_t max_len = 0;
    for (const auto& t : tokens) {
      if (t.empty()) throw ContractError("char_encode on an empty character sequence");
      max_len = std::max(max_len, t.size());
    }
    Value sf = fwd_.initial_state(batch);
    Value sb = bwd_.initial_state(batch);
    std::vector<int> ids_f(batch), ids_b(batch);
    std::vector<std::uint8_t> active(batch);
    for (std::size_t step = 0; step < max_len; ++step) {
      for (std::size_t r = 0; r < batch; ++r) {
        const auto& cs = tokens[r];
        const bool on = step < cs.size();
        active[r] = on;
        ids_f[r] = on ? cs[step] : Vocab::pad;
        ids_b[r] = on ? cs[cs.size() - 1 - step] : Vocab::pad;
      }
      sf = fwd_.step(lookup(table_, ids_f), sf, active);
      sb = bwd_.step(lookup(table_, ids_b), sb, active);
    }
    return concat_cols({fwd_.hidden_of(sf), bwd_.hidden_of(sb)});
  }

  Value encode_one(const std::vector<int>& chars) const { return encode({chars}); }

 private:
  Value table_;
  LstmCell fwd_, bwd_;
};

// Per-token input representation: word embedding followed by the
// character encoding.
class Embedder {
 public:
  Embedder() = default;
  Embedder(ParameterStore& store, const EmbedderConfig& cfg, const Vocab& vocab, Rng& rng,
           const EmbeddingTable* pretrained = nullptr)
      : cfg_(cfg) {
    EmbeddingTable table = pretrained ? *pretrained : random_embedding_table(vocab.token_count(), cfg.word_dim, rng);
    if (table.matrix.rows() != vocab.token_count() || table.matrix.cols() != cfg.word_dim)
      throw DimensionError("embedding table " + table.matrix.shape().str() + " for vocabulary of " +
                           std::to_string(vocab.token_count()) + " and width " + std::to_string(cfg.word_dim));
    if (cfg.freeze_pretrained && table.pretrained_hits > 0)
      frozen_rows_ = std::make_shared<const std::vector<std::uint8_t>>(table.from_pretrained);
    words_ = store.add("word-emb.table", std::move(table.matrix));
    chars_ = CharEncoder(store, "char-bilstm", vocab.char_count(), cfg.char_dim, cfg.char_hidden, rng);
  }

  std::size_t output_dim() const { return cfg_.word_dim + chars_.output_dim(); }
  const CharEncoder& char_encoder() const { return chars_; }

  Value represent(const TokenIds& ids) const {
    if (ids.words.empty()) throw ContractError("represent on an empty sentence");
    return concat_cols({lookup(words_, ids.words, Vocab::pad, frozen_rows_), chars_.encode(ids.chars)});
  }

 private:
  EmbedderConfig cfg_;
  Value words_;
  CharEncoder chars_;
  std::shared_ptr<const std::vector<std::uint8_t>> frozen_rows_;
};

}  // namespace piie
