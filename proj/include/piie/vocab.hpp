#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "piie/corpus.hpp"
#include "piie/errors.hpp"

namespace piie {

// Token and character index maps with PAD = 0 and UNK = 1.
class Vocab {
 public:
  static constexpr int pad = 0;
  static constexpr int unk = 1;
  static constexpr std::string_view pad_token = "<pad>";
  static constexpr std::string_view unk_token = "<unk>";

  Vocab() : Vocab(std::vector<std::string>{}, std::vector<std::uint32_t>{}) {}

  // Entries are appended after the two specials, in the given order.
  Vocab(const std::vector<std::string>& tokens, const std::vector<std::uint32_t>& chars) {
    tokens_ = {std::string(pad_token), std::string(unk_token)};
    chars_ = {0, 0};
    for (const auto& t : tokens) {
      if (token_index_.count(t) || t == pad_token || t == unk_token)
        throw ValidationError("duplicate vocabulary entry '" + t + "'");
      token_index_.emplace(t, static_cast<int>(tokens_.size()));
      tokens_.push_back(t);
    }
    for (auto c : chars) {
      if (char_index_.count(c)) throw ValidationError("duplicate character entry " + std::to_string(c));
      char_index_.emplace(c, static_cast<int>(chars_.size()));
      chars_.push_back(c);
    }
  }

  // Descending frequency, ties broken lexicographically. Tokens below
  // min_count map to UNK; all characters are kept.
  static Vocab build(const Corpus& corpus, std::size_t min_count = 1) {
    if (corpus.empty()) throw ContractError("build_vocab on an empty corpus");
    if (min_count < 1) throw ContractError("min_count must be positive");
    std::map<std::string, std::size_t> tok_counts;
    std::map<std::uint32_t, std::size_t> char_counts;
    for (const auto& s : corpus)
      for (const auto& t : s.tokens) {
        ++tok_counts[t.form];
        for (auto c : t.chars) ++char_counts[c];
      }
    std::vector<std::pair<std::string, std::size_t>> toks(tok_counts.begin(), tok_counts.end());
    std::stable_sort(toks.begin(), toks.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> kept;
    for (const auto& [t, n] : toks)
      if (n >= min_count) kept.push_back(t);
    std::vector<std::pair<std::uint32_t, std::size_t>> cs(char_counts.begin(), char_counts.end());
    std::stable_sort(cs.begin(), cs.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::uint32_t> chars;
    for (const auto& [c, n] : cs) chars.push_back(c);
    Vocab v(kept, chars);
    v.min_count_ = min_count;
    return v;
  }

  int token_index(std::string_view form) const {
    auto it = token_index_.find(std::string(form));
    return it == token_index_.end() ? unk : it->second;
  }
  int char_index(std::uint32_t c) const {
    auto it = char_index_.find(c);
    return it == char_index_.end() ? unk : it->second;
  }
  bool contains(std::string_view form) const { return token_index_.count(std::string(form)) != 0; }

  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::uint32_t>& chars() const { return chars_; }
  std::size_t token_count() const { return tokens_.size(); }
  std::size_t char_count() const { return chars_.size(); }
  std::size_t min_count() const { return min_count_; }

  // This vocabulary followed by the other's tokens it lacks. Characters are
  // kept from this vocabulary only.
  Vocab extended_with(const Vocab& other) const {
    std::vector<std::string> toks(tokens_.begin() + 2, tokens_.end());
    for (std::size_t i = 2; i < other.tokens_.size(); ++i)
      if (!contains(other.tokens_[i])) toks.push_back(other.tokens_[i]);
    Vocab v(toks, std::vector<std::uint32_t>(chars_.begin() + 2, chars_.end()));
    v.min_count_ = min_count_;
    return v;
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"tokens", std::vector<std::string>(tokens_.begin() + 2, tokens_.end())},
                          {"chars", std::vector<std::uint32_t>(chars_.begin() + 2, chars_.end())},
                          {"min_count", min_count_}};
  }

  static Vocab from_json(const nlohmann::json& j) {
    Vocab v(j.at("tokens").get<std::vector<std::string>>(), j.at("chars").get<std::vector<std::uint32_t>>());
    v.min_count_ = j.value("min_count", std::size_t{1});
    return v;
  }

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.tokens_ == b.tokens_ && a.chars_ == b.chars_ && a.min_count_ == b.min_count_;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::uint32_t> chars_;
  std::unordered_map<std::string, int> token_index_;
  std::unordered_map<std::uint32_t, int> char_index_;
  std::size_t min_count_ = 1;
};

}  // namespace piie
