#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "piie/errors.hpp"
#include "piie/tags.hpp"

namespace piie {

struct Token {
  std::string form;  // normalized
  std::string raw;
  std::vector<std::uint32_t> chars;  // code points of form
  int head = 0;                      // 1-based, 0 = root
  TagId tag = TagScheme::outside;
};

struct Sentence {
  std::string id;
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }

  std::vector<int> heads() const {
    std::vector<int> h;
    h.reserve(tokens.size());
    for (const auto& t : tokens) h.push_back(t.head);
    return h;
  }

  std::vector<TagId> tags() const {
    std::vector<TagId> t;
    t.reserve(tokens.size());
    for (const auto& tok : tokens) t.push_back(tok.tag);
    return t;
  }
};

using Corpus = std::vector<Sentence>;

// Lowercases ASCII letters and deletes everything outside [a-z0-9-/@].
// An empty result means the token is dropped.
inline std::string preprocess_token(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char ch : raw) {
    const auto u = static_cast<unsigned char>(ch);
    if (u >= 'A' && u <= 'Z') {
      out.push_back(static_cast<char>(u - 'A' + 'a'));
    } else if ((u >= 'a' && u <= 'z') || (u >= '0' && u <= '9') || u == '-' || u == '/' || u == '@') {
      out.push_back(static_cast<char>(u));
    }
  }
  return out;
}

// Post-normalization hook for lemmatization; identity by default.
using Lemmatizer = std::function<std::string(std::string_view)>;

inline std::string identity_lemma(std::string_view s) { return std::string(s); }

inline std::vector<std::uint32_t> char_codes(std::string_view form) {
  std::vector<std::uint32_t> out;
  out.reserve(form.size());
  for (char ch : form) out.push_back(static_cast<unsigned char>(ch));
  return out;
}

struct RawToken {
  std::string raw;
  int head = 0;
  TagId tag = TagScheme::outside;
};

// Normalizes forms and drops tokens whose form becomes empty. A head on a
// dropped token moves to that token's own head,
// transitively, ending at the root if the chain leaves the sentence or
// comes back to the dependent. Tags are IOB-repaired afterwards.
inline Sentence normalize_sentence(std::string id, const std::vector<RawToken>& raw,
                                   const Lemmatizer& lemma = identity_lemma) {
  const std::size_t n = raw.size();
  std::vector<std::string> forms(n);
  std::vector<int> new_index(n + 1, 0);  // old 1-based -> new 1-based, 0 if dropped
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    forms[i] = preprocess_token(raw[i].raw);
    if (!forms[i].empty() && lemma) forms[i] = preprocess_token(lemma(forms[i]));
    if (!forms[i].empty()) new_index[i + 1] = ++next;
  }

  Sentence s;
  s.id = std::move(id);
  std::vector<TagId> tags;
  for (std::size_t i = 0; i < n; ++i) {
    if (forms[i].empty()) continue;
    int h = raw[i].head;
    std::size_t guard = 0;
    while (h > 0 && new_index[static_cast<std::size_t>(h)] == 0 && guard++ <= n) h = raw[static_cast<std::size_t>(h) - 1].head;
    int mapped = h > 0 ? new_index[static_cast<std::size_t>(h)] : 0;
    if (guard > n) mapped = 0;
    const int self = new_index[i + 1];
    if (mapped == self) mapped = 0;
    Token t;
    t.form = forms[i];
    t.raw = raw[i].raw;
    t.chars = char_codes(t.form);
    t.head = mapped;
    t.tag = raw[i].tag;
    tags.push_back(t.tag);
    s.tokens.push_back(std::move(t));
  }
  const auto fixed = repair_iob(tags);
  for (std::size_t i = 0; i < fixed.size(); ++i) s.tokens[i].tag = fixed[i];
  return s;
}

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find('\t', start);
    cols.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cols;
}

inline bool parse_int(std::string_view s, long& out) {
  if (s.empty()) return false;
  long v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
    if (v > 1'000'000'000) return false;
  }
  out = v;
  return true;
}

}  // namespace detail

// Reads the four-column corpus format (INDEX, FORM, HEAD, TAG; tab
// separated; blank line between sentences; '#' comments; "# id = X" names
// the following sentence).
inline Corpus parse_corpus(std::istream& in, const std::string& source = "<stream>",
                           const Lemmatizer& lemma = identity_lemma) {
  Corpus corpus;
  std::vector<RawToken> pending;
  std::vector<std::size_t> pending_lines;
  std::string pending_id;
  std::size_t sentence_no = 0;

  auto flush = [&]() {
    if (pending.empty()) return;
    ++sentence_no;
    const long n = static_cast<long>(pending.size());
    for (std::size_t i = 0; i < pending.size(); ++i) {
      const long h = pending[i].head;
      if (h > n) throw ParseError(source, pending_lines[i], "head " + std::to_string(h) + " out of range 0.." + std::to_string(n));
      if (h == static_cast<long>(i + 1)) throw ParseError(source, pending_lines[i], "token is its own head");
    }
    std::string id = pending_id.empty() ? "s" + std::to_string(sentence_no) : pending_id;
    Sentence s = normalize_sentence(std::move(id), pending, lemma);
    if (!s.tokens.empty()) corpus.push_back(std::move(s));
    pending.clear();
    pending_lines.clear();
    pending_id.clear();
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    if (line[0] == '#') {
      std::string_view body(line);
      body.remove_prefix(1);
      while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
      if (body.substr(0, 2) == "id") {
        auto rest = body.substr(2);
        while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
        if (!rest.empty() && rest.front() == '=') {
          rest.remove_prefix(1);
          while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
          pending_id = std::string(rest);
        }
      }
      continue;
    }
    const auto cols = detail::split_tabs(line);
    if (cols.size() != 4)
      throw ParseError(source, line_no, "expected 4 tab-separated columns, found " + std::to_string(cols.size()));
    long index = 0, head = 0;
    if (!detail::parse_int(cols[0], index)) throw ParseError(source, line_no, "bad INDEX '" + std::string(cols[0]) + "'");
    if (index != static_cast<long>(pending.size()) + 1)
      throw ParseError(source, line_no, "INDEX " + std::to_string(index) + " out of sequence");
    if (!detail::parse_int(cols[2], head)) throw ParseError(source, line_no, "bad HEAD '" + std::string(cols[2]) + "'");
    TagId tag;
    try {
      tag = TagScheme::index(cols[3]);
    } catch (const ValidationError& e) {
      throw ParseError(source, line_no, e.what());
    }
    pending.push_back(RawToken{std::string(cols[1]), static_cast<int>(head), tag});
    pending_lines.push_back(line_no);
  }
  flush();
  return corpus;
}

inline Corpus parse_corpus_file(const std::string& path, const Lemmatizer& lemma = identity_lemma) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open corpus file '" + path + "'");
  return parse_corpus(in, path, lemma);
}

inline void serialize_corpus(std::ostream& out, const Corpus& corpus) {
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    if (s) out << '\n';
    out << "# id = " << corpus[s].id << '\n';
    for (std::size_t i = 0; i < corpus[s].tokens.size(); ++i) {
      const auto& t = corpus[s].tokens[i];
      out << (i + 1) << '\t' << t.form << '\t' << t.head << '\t' << TagScheme::name(t.tag) << '\n';
    }
  }
}

inline std::string serialize_corpus(const Corpus& corpus) {
  std::ostringstream os;
  serialize_corpus(os, corpus);
  return os.str();
}

inline void write_corpus_file(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write corpus file '" + path + "'");
  serialize_corpus(out, corpus);
}

}  // namespace piie
